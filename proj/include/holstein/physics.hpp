#pragma once

// Ehrenfest dynamics of the 1D semiclassical Holstein chain.
//
// Classical phonons (Q, P) on every site couple to spinless tight-binding
// electrons through the on-site density. The electrons are carried by their
// single-particle density matrix rho_ij = <c_j^dag c_i>, which follows the
// von Neumann equation in the instantaneous lattice Hamiltonian H({Q}).
//
// Units: t_nn = hbar = 1. Time is measured in hbar / t_nn.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "holstein/errors.hpp"

namespace holstein {

using cplx = std::complex<double>;
using RealVector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Model constants. Defaults give r = hbar*Omega/t_nn = 0.4 and
/// lambda = g^2 / (W K) = 1 at g = 1 (W = 4 t_nn).
struct PhysicsParams {
  double t_nn = 1.0;
  double hbar = 1.0;
  double omega = 0.4;
  double mass = 1.5625;
  double spring_k = 0.25;
  double g = 0.0;
  int L = 16;
  int n_electrons = 8;

  /// Half-filled chain of `sites` sites at coupling `coupling`.
  static PhysicsParams half_filled(int sites, double coupling) {
    PhysicsParams p;
    p.L = sites;
    p.n_electrons = sites / 2;
    p.g = coupling;
    p.validate();
    return p;
  }

  PhysicsParams with_coupling(double coupling) const {
    PhysicsParams p = *this;
    p.g = coupling;
    return p;
  }

  double adiabatic_ratio() const { return hbar * omega / t_nn; }
  double bandwidth() const { return 4.0 * t_nn; }
  double dimensionless_coupling() const { return g * g / (bandwidth() * spring_k); }
  /// Characteristic lattice distortion Q* = g / K.
  double distortion_scale() const { return g / spring_k; }

  void validate() const {
    if (L < 4) throw InvalidArgument("lattice size L must be >= 4 (L=2 ring degenerates)");
    if (L % 2 != 0) throw InvalidArgument("lattice size L must be even");
    if (n_electrons != L / 2) throw InvalidArgument("only half filling (n_electrons = L/2) is supported");
    if (!(t_nn > 0 && hbar > 0 && omega > 0 && mass > 0))
      throw InvalidArgument("t_nn, hbar, omega and mass must be positive");
    if (std::abs(spring_k - mass * omega * omega) > 1e-12 * spring_k)
      throw InvalidArgument("spring_k must equal mass * omega^2");
    if (!std::isfinite(g)) throw InvalidArgument("coupling g must be finite");
  }
};

/// Full dynamical state u = (rho, Q, P) at a given time.
struct LatticeState {
  RealVector Q;
  RealVector P;
  ComplexMatrix rho;
  double time = 0.0;

  int size() const { return static_cast<int>(Q.size()); }
};

struct StateDerivative {
  RealVector dQ;
  RealVector dP;
  ComplexMatrix drho;
};

struct EnergyBreakdown {
  double electronic = 0.0;
  double kinetic = 0.0;
  double elastic = 0.0;
  double total = 0.0;
};

namespace detail {

inline int wrap(int i, int L) { return (i % L + L) % L; }

inline bool all_finite(const RealVector& v) { return v.allFinite(); }
inline bool all_finite(const ComplexMatrix& m) {
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const cplx z = m.data()[k];
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  }
  return true;
}

}  // namespace detail

/// Dense single-particle Hamiltonian H_ij = -t_nn (d_{j,i+1} + d_{j,i-1}) - g d_ij Q_i
/// on a periodic ring.
inline ComplexMatrix build_hamiltonian(const RealVector& Q, const PhysicsParams& params) {
  const int L = static_cast<int>(Q.size());
  if (L < 4) throw InvalidArgument("build_hamiltonian: L must be >= 4");
  if (L != params.L) throw InvalidArgument("build_hamiltonian: Q length does not match params.L");
  if (!Q.allFinite()) throw InvalidArgument("build_hamiltonian: non-finite displacement");
  ComplexMatrix H = ComplexMatrix::Zero(L, L);
  for (int i = 0; i < L; ++i) {
    H(i, detail::wrap(i + 1, L)) = -params.t_nn;
    H(i, detail::wrap(i - 1, L)) = -params.t_nn;
    H(i, i) = -params.g * Q(i);
  }
  return H;
}

/// Zero-temperature density matrix of a Hermitian H holding `n_electrons`.
/// A partially filled degenerate shell at the Fermi level is occupied
/// uniformly, so the result is basis independent.
inline ComplexMatrix ground_state_density(const ComplexMatrix& H, int n_electrons,
                                          double degeneracy_tol = 1e-9) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(H);
  const RealVector& E = solver.eigenvalues();
  const ComplexMatrix& V = solver.eigenvectors();
  const int L = static_cast<int>(E.size());
  if (n_electrons < 0 || n_electrons > L) throw InvalidArgument("electron count out of range");

  std::vector<double> occupation(L, 0.0);
  if (n_electrons > 0) {
    const double e_fermi = E(n_electrons - 1);
    int below = 0;
    int shell = 0;
    for (int n = 0; n < L; ++n) {
      if (E(n) < e_fermi - degeneracy_tol) ++below;
      else if (std::abs(E(n) - e_fermi) <= degeneracy_tol) ++shell;
    }
    const double shell_fill = static_cast<double>(n_electrons - below) / shell;
    for (int n = 0; n < L; ++n) {
      if (E(n) < e_fermi - degeneracy_tol) occupation[n] = 1.0;
      else if (std::abs(E(n) - e_fermi) <= degeneracy_tol) occupation[n] = shell_fill;
    }
  }
  ComplexMatrix rho = ComplexMatrix::Zero(L, L);
  for (int n = 0; n < L; ++n) {
    if (occupation[n] == 0.0) continue;
    rho.noalias() += occupation[n] * V.col(n) * V.col(n).adjoint();
  }
  return rho;
}

/// Decoupled ground state: free electron gas, lattice at rest.
inline LatticeState free_fermi_ground_state(const PhysicsParams& params) {
  params.validate();
  LatticeState s;
  s.Q = RealVector::Zero(params.L);
  s.P = RealVector::Zero(params.L);
  s.rho = ground_state_density(build_hamiltonian(s.Q, params.with_coupling(0.0)), params.n_electrons);
  return s;
}

/// Self-consistent CDW ground state at coupling params.g > 0.
///
/// Fixed point of Q_i = g rho_ii / K, with rho the ground-state density of
/// H({Q}). Linear mixing 0.5, staggered seed `seed_sign * 0.1 * (-1)^i * g/K`.
inline LatticeState cdw_ground_state(const PhysicsParams& params, double tol = 1e-10,
                                     int max_iter = 10000, int seed_sign = +1) {
  params.validate();
  if (!(params.g > 0)) throw InvalidArgument("cdw_ground_state requires g > 0");
  const int L = params.L;
  const double q_star = params.distortion_scale();
  RealVector Q(L);
  for (int i = 0; i < L; ++i) Q(i) = seed_sign * 0.1 * ((i % 2 == 0) ? 1.0 : -1.0) * q_star;

  double residual = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    const ComplexMatrix rho = ground_state_density(build_hamiltonian(Q, params), params.n_electrons);
    RealVector target(L);
    for (int i = 0; i < L; ++i) target(i) = params.g * rho(i, i).real() / params.spring_k;
    residual = (target - Q).cwiseAbs().maxCoeff();
    if (residual < tol) {
      LatticeState s;
      s.Q = Q;
      s.P = RealVector::Zero(L);
      s.rho = rho;
      return s;
    }
    Q = 0.5 * Q + 0.5 * target;
  }
  throw ConvergenceError("cdw_ground_state did not converge", residual);
}

/// Right-hand side of the coupled equations of motion:
///   dQ/dt = P/m,  dP_i/dt = g Re(rho_ii) - K Q_i,  drho/dt = -(i/hbar) [H({Q}), rho].
inline StateDerivative eval_rhs(const LatticeState& state, const PhysicsParams& params) {
  const int L = state.size();
  StateDerivative d;
  d.dQ = state.P / params.mass;
  d.dP.resize(L);
  for (int i = 0; i < L; ++i) d.dP(i) = params.g * state.rho(i, i).real() - params.spring_k * state.Q(i);

  // [H, rho]_ij = -t (rho_{i+1,j} + rho_{i-1,j} - rho_{i,j+1} - rho_{i,j-1}) + g (Q_j - Q_i) rho_ij
  d.drho.resize(L, L);
  const cplx minus_i_over_hbar(0.0, -1.0 / params.hbar);
  const ComplexMatrix& r = state.rho;
  for (int j = 0; j < L; ++j) {
    const int jp = detail::wrap(j + 1, L);
    const int jm = detail::wrap(j - 1, L);
    for (int i = 0; i < L; ++i) {
      const int ip = detail::wrap(i + 1, L);
      const int im = detail::wrap(i - 1, L);
      const cplx hop = -params.t_nn * (r(ip, j) + r(im, j) - r(i, jp) - r(i, jm));
      const cplx coupling = params.g * (state.Q(j) - state.Q(i)) * r(i, j);
      d.drho(i, j) = minus_i_over_hbar * (hop + coupling);
    }
  }
  return d;
}

namespace detail {

inline LatticeState advance(const LatticeState& s, const StateDerivative& d, double h) {
  LatticeState out;
  out.Q = s.Q + h * d.dQ;
  out.P = s.P + h * d.dP;
  out.rho = s.rho + h * d.drho;
  out.time = s.time + h;
  return out;
}

}  // namespace detail

/// Classic four-stage RK4 on (Q, P, rho) without the Hermitian clean-up.
inline LatticeState rk4_step_unsymmetrized(const LatticeState& state, const PhysicsParams& params,
                                           double dt) {
  if (!(dt > 0)) throw InvalidArgument("rk4_step: dt must be positive");
  const StateDerivative k1 = eval_rhs(state, params);
  const StateDerivative k2 = eval_rhs(detail::advance(state, k1, 0.5 * dt), params);
  const StateDerivative k3 = eval_rhs(detail::advance(state, k2, 0.5 * dt), params);
  const StateDerivative k4 = eval_rhs(detail::advance(state, k3, dt), params);
  const double w = dt / 6.0;
  LatticeState out;
  out.Q = state.Q + w * (k1.dQ + 2.0 * k2.dQ + 2.0 * k3.dQ + k4.dQ);
  out.P = state.P + w * (k1.dP + 2.0 * k2.dP + 2.0 * k3.dP + k4.dP);
  out.rho = state.rho + w * (k1.drho + 2.0 * k2.drho + 2.0 * k3.drho + k4.drho);
  out.time = state.time + dt;
  return out;
}

inline void hermitize(ComplexMatrix& rho) {
  ComplexMatrix sym = 0.5 * (rho + rho.adjoint());
  rho = std::move(sym);
}

/// RK4 step followed by rho <- (rho + rho^dag) / 2.
inline LatticeState rk4_step(const LatticeState& state, const PhysicsParams& params, double dt) {
  LatticeState out = rk4_step_unsymmetrized(state, params, dt);
  hermitize(out.rho);
  return out;
}

/// Energy with the -g n_i Q_i coupling that generates the force g n_i - K Q_i.
inline EnergyBreakdown total_energy(const LatticeState& state, const PhysicsParams& params) {
  const int L = state.size();
  EnergyBreakdown e;
  double electronic = 0.0;
  for (int i = 0; i < L; ++i) {
    const int ip = detail::wrap(i + 1, L);
    const int im = detail::wrap(i - 1, L);
    // Re sum_j H_ij rho_ji
    electronic += -params.t_nn * (state.rho(ip, i).real() + state.rho(im, i).real());
    electronic += -params.g * state.Q(i) * state.rho(i, i).real();
  }
  e.electronic = electronic;
  e.kinetic = state.P.squaredNorm() / (2.0 * params.mass);
  e.elastic = 0.5 * params.spring_k * state.Q.squaredNorm();
  e.total = e.electronic + e.kinetic + e.elastic;
  return e;
}

inline double hermiticity_error(const ComplexMatrix& rho) {
  return (rho - rho.adjoint()).cwiseAbs().maxCoeff();
}

/// Eigenvalues of the Hermitian part of rho, sorted descending.
inline RealVector density_spectrum(const ComplexMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
  RealVector ev = solver.eigenvalues().reverse();
  return ev;
}

/// Throws IntegrityError when a state violates the LatticeState contract.
inline void check_state(const LatticeState& s, const PhysicsParams& params, double herm_tol = 1e-12,
                        double trace_tol = 1e-10, double spectrum_tol = 1e-10) {
  const int L = params.L;
  if (s.Q.size() != L || s.P.size() != L || s.rho.rows() != L || s.rho.cols() != L)
    throw IntegrityError("state shape does not match lattice size");
  if (!s.Q.allFinite() || !s.P.allFinite() || !detail::all_finite(s.rho))
    throw IntegrityError("state contains non-finite values");
  if (hermiticity_error(s.rho) > herm_tol) throw IntegrityError("density matrix is not Hermitian");
  const double tr = s.rho.trace().real();
  if (std::abs(tr - params.n_electrons) > trace_tol) throw IntegrityError("density matrix trace is off");
  const RealVector ev = density_spectrum(s.rho);
  if (ev.maxCoeff() > 1.0 + spectrum_tol || ev.minCoeff() < -spectrum_tol)
    throw IntegrityError("density matrix eigenvalues outside [0, 1]");
}

struct Trajectory {
  std::vector<LatticeState> snapshots;
  std::vector<LatticeState> midpoints;  // empty unless requested
};

struct SimulateOptions {
  bool record_midpoints = false;
  double max_trace_drift = 1e-6;
};

/// Integrates n_steps RK4 steps and records every record_stride-th state
/// (including step 0). With record_midpoints, also stores the state half a
/// stride after every recorded snapshot but the last.
inline Trajectory simulate(const LatticeState& state0, const PhysicsParams& params, double dt,
                           std::size_t n_steps, std::size_t record_stride,
                           const SimulateOptions& opts = {}) {
  if (record_stride == 0) throw InvalidArgument("simulate: record_stride must be >= 1");
  if (n_steps % record_stride != 0) throw InvalidArgument("simulate: record_stride must divide n_steps");
  if (opts.record_midpoints && record_stride % 2 != 0)
    throw InvalidArgument("simulate: midpoints need an even record_stride");
  const double trace0 = state0.rho.trace().real();
  Trajectory traj;
  traj.snapshots.reserve(n_steps / record_stride + 1);
  traj.snapshots.push_back(state0);
  LatticeState s = state0;
  for (std::size_t step = 1; step <= n_steps; ++step) {
    s = rk4_step(s, params, dt);
    const double tr = s.rho.trace().real();
    if (!std::isfinite(tr) || std::abs(tr - trace0) > opts.max_trace_drift)
      throw IntegrityError("trace drift exceeded tolerance", step);
    if (step % record_stride == 0) {
      traj.snapshots.push_back(s);
    } else if (opts.record_midpoints && step % record_stride == record_stride / 2) {
      traj.midpoints.push_back(s);
    }
  }
  return traj;
}

/// Advances `state` in place by n_steps RK4 steps.
inline void propagate(LatticeState& state, const PhysicsParams& params, double dt, std::size_t n_steps) {
  for (std::size_t k = 0; k < n_steps; ++k) state = rk4_step(state, params, dt);
}

/// Cyclic lattice translation by s sites: Q_i -> Q_{i-s}, rho_ij -> rho_{i-s, j-s}.
inline LatticeState shift_state(const LatticeState& s, int shift) {
  const int L = s.size();
  LatticeState out = s;
  for (int i = 0; i < L; ++i) {
    const int src = detail::wrap(i - shift, L);
    out.Q(i) = s.Q(src);
    out.P(i) = s.P(src);
    for (int j = 0; j < L; ++j) out.rho(i, j) = s.rho(src, detail::wrap(j - shift, L));
  }
  return out;
}

}  // namespace holstein
