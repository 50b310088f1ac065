#pragma once

// Recurrent lattice surrogates.
//
// A state (rho, Q, P) becomes a [4, L, L] tensor: Re rho, Im rho, diag(Q),
// diag(P). Inputs are scaled by (1/r, 1/q, 1/p). A standard model maps the
// scaled state to an update scaled by (r_delta, q_delta, p_delta). A PARC
// model first estimates the time derivative (scaled by r_d, q_d, p_d) with a
// differentiator network and then maps that derivative to the update with a
// structurally identical integrator network.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "holstein/dataset.hpp"
#include "holstein/ops.hpp"
#include "holstein/physics.hpp"
#include "holstein/tensor.hpp"

namespace holstein::model {

using ad::Mode;
using ad::Tensor;
using data::ScalingCoefficients;
using json = nlohmann::json;

enum class Variant { standard, parc };

inline std::string to_string(Variant v) { return v == Variant::standard ? "standard" : "parc"; }
inline Variant variant_from(const std::string& s) {
  if (s == "standard") return Variant::standard;
  if (s == "parc") return Variant::parc;
  throw InvalidArgument("unknown model variant '" + s + "'");
}

struct ModelConfig {
  int L = 16;
  int hidden_channels = 12;
  int n_blocks = 2;
  int kernel = 3;
  double dropout_p = 0.1;
  Variant variant = Variant::standard;
  double prediction_dt = 0.0;  // informational; advances LatticeState::time
  std::uint64_t seed = 0;      // parameter init and dropout masks
  double ln_eps = 1e-5;

  void validate() const {
    if (L < 4) throw InvalidArgument("ModelConfig: L must be >= 4");
    if (hidden_channels < 1 || n_blocks < 0) throw InvalidArgument("ModelConfig: bad channel/block counts");
    if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("ModelConfig: kernel must be odd");
    if (!(dropout_p >= 0 && dropout_p < 1)) throw InvalidArgument("ModelConfig: dropout_p must be in [0, 1)");
  }
};

inline json to_json(const ModelConfig& c) {
  return json{{"L", c.L},
              {"hidden_channels", c.hidden_channels},
              {"n_blocks", c.n_blocks},
              {"kernel", c.kernel},
              {"dropout_p", c.dropout_p},
              {"variant", to_string(c.variant)},
              {"prediction_dt", c.prediction_dt},
              {"seed", c.seed},
              {"ln_eps", c.ln_eps}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.L = j.at("L").get<int>();
  c.hidden_channels = j.at("hidden_channels").get<int>();
  c.n_blocks = j.at("n_blocks").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.variant = variant_from(j.at("variant").get<std::string>());
  c.prediction_dt = j.at("prediction_dt").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.ln_eps = j.at("ln_eps").get<double>();
  return c;
}

// ---------------------------------------------------------------------------
// Network

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // [C_out, C_in, k, k]
  Tensor<T> bias;    // [C_out]
};

template <typename T>
struct NormParams {
  Tensor<T> gain;
  Tensor<T> shift;
};

template <typename T>
struct ResidualBlock {
  NormParams<T> norm1;
  ConvParams<T> conv1;
  NormParams<T> norm2;
  ConvParams<T> conv2;
};

/// out = x + conv2(dropout(tanh(LN2(conv1(tanh(LN1(x)))))))
template <typename T, typename Rng>
Tensor<T> residual_block_forward(const Tensor<T>& x, const ResidualBlock<T>& blk, double dropout_p, Mode mode,
                                 Rng& rng, T eps = T(1e-5)) {
  auto h = ad::layer_norm(x, blk.norm1.gain, blk.norm1.shift, eps);
  h = ad::tanh(h);
  h = ad::conv2d_circular(h, blk.conv1.weight, blk.conv1.bias);
  h = ad::layer_norm(h, blk.norm2.gain, blk.norm2.shift, eps);
  h = ad::tanh(h);
  h = ad::channel_dropout(h, dropout_p, mode, rng);
  h = ad::conv2d_circular(h, blk.conv2.weight, blk.conv2.bias);
  return ad::add(x, h);
}

/// stem conv (4 -> hidden), pre-activation residual blocks, head conv
/// (hidden -> 4).
template <typename T>
class Network {
 public:
  Network() = default;

  Network(const ModelConfig& cfg, std::mt19937_64& init_rng) : cfg_(cfg) {
    const int H = cfg.hidden_channels;
    stem_ = make_conv(H, 4, init_rng);
    for (int b = 0; b < cfg.n_blocks; ++b) {
      ResidualBlock<T> blk;
      blk.norm1 = make_norm(H);
      blk.conv1 = make_conv(H, H, init_rng);
      blk.norm2 = make_norm(H);
      blk.conv2 = make_conv(H, H, init_rng);
      blocks_.push_back(std::move(blk));
    }
    head_ = make_conv(4, H, init_rng);
  }

  template <typename Rng>
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng) const {
    auto h = ad::conv2d_circular(x, stem_.weight, stem_.bias);
    for (const auto& blk : blocks_) h = residual_block_forward(h, blk, cfg_.dropout_p, mode, rng, T(cfg_.ln_eps));
    return ad::conv2d_circular(h, head_.weight, head_.bias);
  }

  std::vector<std::pair<std::string, Tensor<T>>> named_parameters(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    out.emplace_back(prefix + "stem.weight", stem_.weight);
    out.emplace_back(prefix + "stem.bias", stem_.bias);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const std::string p = prefix + "block" + std::to_string(b) + ".";
      const auto& blk = blocks_[b];
      out.emplace_back(p + "norm1.gain", blk.norm1.gain);
      out.emplace_back(p + "norm1.shift", blk.norm1.shift);
      out.emplace_back(p + "conv1.weight", blk.conv1.weight);
      out.emplace_back(p + "conv1.bias", blk.conv1.bias);
      out.emplace_back(p + "norm2.gain", blk.norm2.gain);
      out.emplace_back(p + "norm2.shift", blk.norm2.shift);
      out.emplace_back(p + "conv2.weight", blk.conv2.weight);
      out.emplace_back(p + "conv2.bias", blk.conv2.bias);
    }
    out.emplace_back(prefix + "head.weight", head_.weight);
    out.emplace_back(prefix + "head.bias", head_.bias);
    return out;
  }

  ConvParams<T>& head() { return head_; }
  ConvParams<T>& stem() { return stem_; }
  std::vector<ResidualBlock<T>>& blocks() { return blocks_; }

 private:
  ConvParams<T> make_conv(int cout, int cin, std::mt19937_64& rng) const {
    const int k = cfg_.kernel;
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<T> w(static_cast<std::size_t>(cout) * cin * k * k);
    for (auto& v : w) v = static_cast<T>(u(rng));
    return {Tensor<T>::from({cout, cin, k, k}, std::move(w), true), Tensor<T>::zeros({cout}, true)};
  }
  NormParams<T> make_norm(int c) const {
    return {Tensor<T>::from({c}, std::vector<T>(c, T(1)), true), Tensor<T>::zeros({c}, true)};
  }

  ModelConfig cfg_;
  ConvParams<T> stem_;
  std::vector<ResidualBlock<T>> blocks_;
  ConvParams<T> head_;
};

// ---------------------------------------------------------------------------
// Embedding

/// Channels: Re rho, Im rho, diag(Q), diag(P); zeros elsewhere. Shape [4, L, L].
template <typename T = double>
Tensor<T> embed_state(const ComplexMatrix& rho, const RealVector& Q, const RealVector& P) {
  const int L = static_cast<int>(Q.size());
  if (P.size() != L || rho.rows() != L || rho.cols() != L)
    throw InvalidArgument("embed_state: rho, Q and P sizes disagree");
  const std::size_t plane = static_cast<std::size_t>(L) * L;
  std::vector<T> v(4 * plane, T(0));
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      v[0 * plane + i * L + j] = static_cast<T>(rho(i, j).real());
      v[1 * plane + i * L + j] = static_cast<T>(rho(i, j).imag());
    }
  for (int i = 0; i < L; ++i) {
    v[2 * plane + i * L + i] = static_cast<T>(Q(i));
    v[3 * plane + i * L + i] = static_cast<T>(P(i));
  }
  return Tensor<T>::from({4, L, L}, std::move(v));
}

struct ExtractedState {
  ComplexMatrix rho;
  RealVector Q;
  RealVector P;
};

/// Reverse of embed_state: rho = ch0 + i ch1 (full matrix), Q and P from the
/// diagonals of ch2 and ch3. Off-diagonal content of ch2/ch3 is discarded.
/// Accepts [4, L, L] or [1, 4, L, L] (or a pointer to one sample).
template <typename T>
ExtractedState extract_state(const T* v, int L, double r_scale = 1.0, double q_scale = 1.0, double p_scale = 1.0) {
  const std::size_t plane = static_cast<std::size_t>(L) * L;
  ExtractedState out{ComplexMatrix(L, L), RealVector(L), RealVector(L)};
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      out.rho(i, j) = cplx(r_scale * static_cast<double>(v[i * L + j]),
                           r_scale * static_cast<double>(v[plane + i * L + j]));
  for (int i = 0; i < L; ++i) {
    out.Q(i) = q_scale * static_cast<double>(v[2 * plane + i * L + i]);
    out.P(i) = p_scale * static_cast<double>(v[3 * plane + i * L + i]);
  }
  return out;
}

template <typename T>
ExtractedState extract_state(const Tensor<T>& t) {
  const auto& s = t.shape();
  const bool ok = (s.size() == 3 && s[0] == 4 && s[1] == s[2]) ||
                  (s.size() == 4 && s[0] == 1 && s[1] == 4 && s[2] == s[3]);
  if (!ok) throw InvalidArgument("extract_state: expected a 4-channel L x L tensor, got " + ad::shape_str(s));
  return extract_state(t.data(), s.back());
}

/// Writes the scaled embedding of `s` into out[0 .. 4*L*L).
template <typename T>
void embed_scaled_into(const LatticeState& s, double r, double q, double p, T* out) {
  const int L = s.size();
  const std::size_t plane = static_cast<std::size_t>(L) * L;
  std::fill(out, out + 4 * plane, T(0));
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      out[i * L + j] = static_cast<T>(s.rho(i, j).real() / r);
      out[plane + i * L + j] = static_cast<T>(s.rho(i, j).imag() / r);
    }
  for (int i = 0; i < L; ++i) {
    out[2 * plane + i * L + i] = static_cast<T>(s.Q(i) / q);
    out[3 * plane + i * L + i] = static_cast<T>(s.P(i) / p);
  }
}

/// Loss components of the state vector: 0 = rho diagonal, 1 = rho
/// off-diagonal (real and imaginary channels), 2 = Q, 3 = P; -1 = unused
/// off-diagonal slots of the Q/P channels.
inline std::shared_ptr<const std::vector<int>> component_groups(int L) {
  const std::size_t plane = static_cast<std::size_t>(L) * L;
  auto g = std::make_shared<std::vector<int>>(4 * plane, -1);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) {
        int& slot = (*g)[c * plane + i * L + j];
        if (c < 2) slot = (i == j) ? 0 : 1;
        else if (i == j) slot = c;
      }
  return g;
}
inline constexpr int kComponentCount = 4;

/// Per-channel factors over one [4, L, L] sample: a on ch0/ch1, b on the
/// diagonal of ch2, c on the diagonal of ch3, 0 on the ch2/ch3 off-diagonals.
template <typename T>
std::shared_ptr<const std::vector<T>> channel_pattern(int L, double a, double b, double c) {
  const std::size_t plane = static_cast<std::size_t>(L) * L;
  auto v = std::make_shared<std::vector<T>>(4 * plane, T(0));
  for (std::size_t k = 0; k < 2 * plane; ++k) (*v)[k] = static_cast<T>(a);
  for (int i = 0; i < L; ++i) {
    (*v)[2 * plane + i * L + i] = static_cast<T>(b);
    (*v)[3 * plane + i * L + i] = static_cast<T>(c);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Model

template <typename T = float>
class Model {
 public:
  Model(ModelConfig cfg, ScalingCoefficients scaling) : cfg_(std::move(cfg)), scaling_(scaling) {
    cfg_.validate();
    if (!scaling_.all_positive()) throw InvalidArgument("Model: scaling coefficients must be strictly positive");
    std::mt19937_64 init_rng(cfg_.seed);
    primary_ = Network<T>(cfg_, init_rng);
    if (cfg_.variant == Variant::parc) integrator_ = Network<T>(cfg_, init_rng);
    dropout_rng_.seed(data::mix64(cfg_.seed ^ 0xD50D50ULL));
    step_pattern_ = channel_pattern<T>(cfg_.L, scaling_.r_delta / scaling_.r, scaling_.q_delta / scaling_.q,
                                       scaling_.p_delta / scaling_.p);
    mask_pattern_ = channel_pattern<T>(cfg_.L, 1.0, 1.0, 1.0);
  }

  const ModelConfig& config() const { return cfg_; }
  const ScalingCoefficients& scaling() const { return scaling_; }
  Variant variant() const { return cfg_.variant; }
  int L() const { return cfg_.L; }

  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }
  void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

  /// Standard: the single network. PARC: the differentiator.
  Network<T>& primary() { return primary_; }
  const Network<T>& primary() const { return primary_; }
  Network<T>& integrator() { return integrator_; }
  const Network<T>& integrator() const { return integrator_; }
  /// Final conv of the network that produces the state update.
  ConvParams<T>& update_head() { return cfg_.variant == Variant::parc ? integrator_.head() : primary_.head(); }

  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const {
    if (cfg_.variant == Variant::standard) return primary_.named_parameters("net.");
    auto out = primary_.named_parameters("differentiator.");
    auto integ = integrator_.named_parameters("integrator.");
    out.insert(out.end(), integ.begin(), integ.end());
    return out;
  }
  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t.numel();
    return n;
  }

  // Tensor-level passes on scaled [B, 4, L, L] inputs (recorded on the tape
  // when gradient mode is on).
  Tensor<T> update_raw(const Tensor<T>& scaled_state) {
    require(Variant::standard);
    return primary_.forward(scaled_state, mode_, dropout_rng_);
  }
  Tensor<T> derivative_raw(const Tensor<T>& scaled_state) {
    require(Variant::parc);
    return primary_.forward(scaled_state, mode_, dropout_rng_);
  }
  /// Integrator applied to a scaled derivative estimate; the off-diagonal
  /// Q/P slots are cleared first, as extraction would.
  Tensor<T> integrate_raw(const Tensor<T>& scaled_derivative) {
    require(Variant::parc);
    return integrator_.forward(ad::mul_pattern(scaled_derivative, mask_pattern_), mode_, dropout_rng_);
  }
  /// Next scaled input from a scaled input and a raw update.
  Tensor<T> advance_scaled(const Tensor<T>& scaled_state, const Tensor<T>& raw_update) const {
    return ad::add(scaled_state, ad::mul_pattern(raw_update, step_pattern_));
  }

  Tensor<T> embed_scaled(const LatticeState& s) const {
    check_size(s);
    const int L = cfg_.L;
    std::vector<T> v(4 * static_cast<std::size_t>(L) * L);
    embed_scaled_into(s, scaling_.r, scaling_.q, scaling_.p, v.data());
    return Tensor<T>::from({1, 4, L, L}, std::move(v));
  }

  void check_size(const LatticeState& s) const {
    if (s.size() != cfg_.L || s.rho.rows() != cfg_.L)
      throw InvalidArgument("model expects L=" + std::to_string(cfg_.L) + ", got state of size " +
                            std::to_string(s.size()));
  }

  void require(Variant v) const {
    if (cfg_.variant != v) throw InvalidArgument("operation needs a " + to_string(v) + " model");
  }

 private:
  ModelConfig cfg_;
  ScalingCoefficients scaling_;
  Network<T> primary_;
  Network<T> integrator_;
  Mode mode_ = Mode::eval;
  std::mt19937_64 dropout_rng_;
  std::shared_ptr<const std::vector<T>> step_pattern_;
  std::shared_ptr<const std::vector<T>> mask_pattern_;
};

namespace detail {

inline LatticeState add_update(const LatticeState& s, const ExtractedState& u, double dt) {
  LatticeState out;
  out.rho = s.rho + u.rho;
  out.Q = s.Q + u.Q;
  out.P = s.P + u.P;
  out.time = s.time + dt;
  return out;
}

}  // namespace detail

/// One standard-model step: state + N[state].
template <typename T>
LatticeState standard_step(Model<T>& m, const LatticeState& s) {
  ad::NoGradGuard guard;
  const auto raw = m.update_raw(m.embed_scaled(s));
  const auto& c = m.scaling();
  return detail::add_update(s, extract_state(raw.data(), m.L(), c.r_delta, c.q_delta, c.p_delta),
                            m.config().prediction_dt);
}

/// Differentiator estimate of (drho/dt, dQ/dt, dP/dt) in physical units.
template <typename T>
StateDerivative parc_differentiate(Model<T>& m, const LatticeState& s) {
  ad::NoGradGuard guard;
  const auto raw = m.derivative_raw(m.embed_scaled(s));
  const auto& c = m.scaling();
  auto e = extract_state(raw.data(), m.L(), c.r_d, c.q_d, c.p_d);
  return {std::move(e.Q), std::move(e.P), std::move(e.rho)};
}

/// Integrator: derivative (physical units) -> update (physical units).
template <typename T>
ExtractedState parc_integrate(Model<T>& m, const StateDerivative& d) {
  ad::NoGradGuard guard;
  const int L = m.L();
  if (d.dQ.size() != L) throw InvalidArgument("parc_integrate: derivative size does not match model L");
  const auto& c = m.scaling();
  std::vector<T> v(4 * static_cast<std::size_t>(L) * L);
  LatticeState as_state{d.dQ, d.dP, d.drho, 0.0};
  embed_scaled_into(as_state, c.r_d, c.q_d, c.p_d, v.data());
  const auto raw = m.integrate_raw(Tensor<T>::from({1, 4, L, L}, std::move(v)));
  return extract_state(raw.data(), L, c.r_delta, c.q_delta, c.p_delta);
}

template <typename T>
LatticeState parc_step(Model<T>& m, const LatticeState& s) {
  m.check_size(s);
  return detail::add_update(s, parc_integrate(m, parc_differentiate(m, s)), m.config().prediction_dt);
}

template <typename T>
LatticeState model_step(Model<T>& m, const LatticeState& s) {
  return m.variant() == Variant::standard ? standard_step(m, s) : parc_step(m, s);
}

inline bool state_finite(const LatticeState& s) {
  return s.Q.allFinite() && s.P.allFinite() && holstein::detail::all_finite(s.rho);
}

/// Relative L2 error of `pred` against `truth` after dividing rho, Q and P
/// by the state coefficients r, q, p.
inline double normalized_state_error(const LatticeState& pred, const LatticeState& truth,
                                     const ScalingCoefficients& c) {
  const double num = (pred.rho - truth.rho).squaredNorm() / (c.r * c.r) +
                     (pred.Q - truth.Q).squaredNorm() / (c.q * c.q) + (pred.P - truth.P).squaredNorm() / (c.p * c.p);
  const double den = truth.rho.squaredNorm() / (c.r * c.r) + truth.Q.squaredNorm() / (c.q * c.q) +
                     truth.P.squaredNorm() / (c.p * c.p);
  if (!(den > 0)) throw InvalidArgument("normalized_state_error: reference state is zero");
  return std::sqrt(num / den);
}

using Stepper = std::function<LatticeState(const LatticeState&)>;

/// Applies `step` n_steps times; returns all n_steps + 1 states.
inline std::vector<LatticeState> rollout(const Stepper& step, const LatticeState& initial, std::size_t n_steps) {
  std::vector<LatticeState> out;
  out.reserve(n_steps + 1);
  out.push_back(initial);
  for (std::size_t k = 1; k <= n_steps; ++k) {
    LatticeState next;
    try {
      next = step(out.back());
    } catch (const NonFiniteError& e) {
      throw DivergenceError(std::string("non-finite prediction: ") + e.what(), k);
    }
    if (!state_finite(next)) throw DivergenceError("non-finite predicted state", k);
    out.push_back(std::move(next));
  }
  return out;
}

template <typename T>
std::vector<LatticeState> rollout(Model<T>& m, const LatticeState& initial, std::size_t n_steps) {
  m.check_size(initial);
  return rollout([&m](const LatticeState& s) { return model_step(m, s); }, initial, n_steps);
}

/// The ground-truth integrator packaged as a stepper: `stride` RK4 steps of
/// size dt per call.
inline Stepper exact_stepper(const PhysicsParams& params, double dt, std::size_t stride) {
  return [params, dt, stride](const LatticeState& s) {
    LatticeState out = s;
    propagate(out, params, dt, stride);
    return out;
  };
}

}  // namespace holstein::model
