#pragma once

// Quench datasets: generation, scaling statistics, and the on-disk container.
//
// Layout of a dataset directory:
//   metadata.json           protocol, physics constants, per-trajectory
//                           offsets/seeds/start times, train/test split
//   traj_00000.bin, ...     one blob per trajectory
//
// Blob layout (little-endian):
//   "HOLSTEIN" | u32 version | u32 L | u64 n_snapshots | u64 n_midpoints
//   then per state: Q[L] P[L] Re rho[L*L] Im rho[L*L] (row-major, float64),
//   snapshots first, then midpoints; trailer u64 CRC-64/XZ of all prior bytes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "holstein/binary_io.hpp"
#include "holstein/errors.hpp"
#include "holstein/physics.hpp"

namespace holstein::data {

using json = nlohmann::json;

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr char kDatasetMagic[8] = {'H', 'O', 'L', 'S', 'T', 'E', 'I', 'N'};
inline constexpr int kDatasetSchema = 1;

enum class QuenchKind { shallow, deep };

inline std::string to_string(QuenchKind k) { return k == QuenchKind::shallow ? "shallow" : "deep"; }
inline QuenchKind quench_kind_from(const std::string& s) {
  if (s == "shallow") return QuenchKind::shallow;
  if (s == "deep") return QuenchKind::deep;
  throw InvalidArgument("unknown quench kind '" + s + "'");
}

struct QuenchProtocol {
  QuenchKind kind = QuenchKind::shallow;
  int L = 16;
  double g_initial = 0.5;
  double g_final = 0.8;
  double dt_integration = 0.01;
  int prediction_stride = 64;
  int n_prediction_steps = 1200;
  int n_trajectories = 64;
  double transient_skip = 0.0;
  double q_noise_sigma = 0.0;
  bool record_midpoints = false;
  std::uint64_t seed = 0;

  double prediction_dt() const { return prediction_stride * dt_integration; }
  int transient_steps() const { return static_cast<int>(std::llround(transient_skip / dt_integration)); }

  /// g 0.5 -> 0.8, dt_pred = 64 * 0.01, 1201 snapshots, 64 trajectories.
  static QuenchProtocol shallow_default(int L = 16) {
    QuenchProtocol p;
    p.L = L;
    return p;
  }

  /// g 0 -> 1, dt_pred = 256 * 0.01, 64 time units skipped, 1001 snapshots
  /// plus midpoints. Desk-scale trajectory count.
  static QuenchProtocol deep_default(int L = 16, int n_trajectories = 8) {
    QuenchProtocol p;
    p.kind = QuenchKind::deep;
    p.L = L;
    p.g_initial = 0.0;
    p.g_final = 1.0;
    p.prediction_stride = 256;
    p.n_prediction_steps = 1000;
    p.n_trajectories = n_trajectories;
    p.transient_skip = 64.0;
    p.q_noise_sigma = 1e-4;
    p.record_midpoints = true;
    return p;
  }

  static QuenchProtocol deep_full_scale(int L = 16) { return deep_default(L, 1228); }

  void validate() const {
    PhysicsParams::half_filled(L, g_final);
    if (prediction_stride < 1) throw InvalidArgument("prediction_stride must be >= 1");
    if (n_prediction_steps < 0) throw InvalidArgument("n_prediction_steps must be >= 0");
    if (n_trajectories < 1) throw InvalidArgument("n_trajectories must be >= 1");
    if (!(dt_integration > 0)) throw InvalidArgument("dt_integration must be positive");
    if (!(q_noise_sigma >= 0)) throw InvalidArgument("q_noise_sigma must be >= 0");
    if (!(transient_skip >= 0)) throw InvalidArgument("transient_skip must be >= 0");
    if (record_midpoints && prediction_stride % 2 != 0)
      throw InvalidArgument("midpoints require an even prediction_stride");
    if (kind == QuenchKind::shallow && !(g_initial > 0))
      throw InvalidArgument("shallow quench needs g_initial > 0 (CDW initial state)");
    if (kind == QuenchKind::deep && g_initial != 0.0)
      throw InvalidArgument("deep quench starts from the decoupled state (g_initial = 0)");
  }

  PhysicsParams final_params() const { return PhysicsParams::half_filled(L, g_final); }
};

inline json to_json(const QuenchProtocol& p) {
  return json{{"kind", to_string(p.kind)},
              {"L", p.L},
              {"g_initial", p.g_initial},
              {"g_final", p.g_final},
              {"dt_integration", p.dt_integration},
              {"prediction_stride", p.prediction_stride},
              {"n_prediction_steps", p.n_prediction_steps},
              {"n_trajectories", p.n_trajectories},
              {"transient_skip", p.transient_skip},
              {"q_noise_sigma", p.q_noise_sigma},
              {"record_midpoints", p.record_midpoints},
              {"seed", p.seed}};
}

inline QuenchProtocol protocol_from_json(const json& j) {
  QuenchProtocol p;
  p.kind = quench_kind_from(j.at("kind").get<std::string>());
  p.L = j.at("L").get<int>();
  p.g_initial = j.at("g_initial").get<double>();
  p.g_final = j.at("g_final").get<double>();
  p.dt_integration = j.at("dt_integration").get<double>();
  p.prediction_stride = j.at("prediction_stride").get<int>();
  p.n_prediction_steps = j.at("n_prediction_steps").get<int>();
  p.n_trajectories = j.at("n_trajectories").get<int>();
  p.transient_skip = j.at("transient_skip").get<double>();
  p.q_noise_sigma = j.at("q_noise_sigma").get<double>();
  p.record_midpoints = j.at("record_midpoints").get<bool>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

struct TrajectoryRecord {
  std::vector<LatticeState> snapshots;
  std::vector<LatticeState> midpoints;
  int offset = 0;             // integration-step phase offset
  std::uint64_t seed = 0;     // initial-noise seed
  double start_time = 0.0;    // time of snapshot 0 after the quench
  bool test = false;
};

struct Dataset {
  QuenchProtocol protocol;
  std::vector<TrajectoryRecord> trajectories;

  PhysicsParams params() const { return protocol.final_params(); }
  double prediction_dt() const { return protocol.prediction_dt(); }
  std::vector<std::size_t> indices(bool test) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < trajectories.size(); ++i)
      if (trajectories[i].test == test) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> train_indices() const { return indices(false); }
  std::vector<std::size_t> test_indices() const { return indices(true); }
};

/// SplitMix64 finalizer; used to derive independent per-trajectory seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t trajectory_seed(std::uint64_t base, std::size_t index) {
  return mix64(base ^ mix64(static_cast<std::uint64_t>(index)));
}

/// Deterministic ~90/10 split: the round(n/10) trajectories with the
/// smallest index hash (at least one when n >= 2) go to the test set.
inline std::vector<bool> split_by_hash(std::size_t n, std::uint64_t seed) {
  std::vector<bool> test(n, false);
  if (n < 2) return test;
  const std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n / 10.0)));
  std::vector<std::pair<std::uint64_t, std::size_t>> h;
  for (std::size_t i = 0; i < n; ++i) h.emplace_back(mix64(seed ^ (0xA5A5A5A5ULL + i)), i);
  std::sort(h.begin(), h.end());
  for (std::size_t k = 0; k < n_test; ++k) test[h[k].second] = true;
  return test;
}

namespace detail {

inline void stamp_times(TrajectoryRecord& rec, double dt_pred) {
  for (std::size_t k = 0; k < rec.snapshots.size(); ++k) rec.snapshots[k].time = rec.start_time + k * dt_pred;
  for (std::size_t k = 0; k < rec.midpoints.size(); ++k)
    rec.midpoints[k].time = rec.start_time + (k + 0.5) * dt_pred;
}

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < n; i += static_cast<std::size_t>(jobs)) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline TrajectoryRecord run_trajectory(const LatticeState& initial, const QuenchProtocol& p, int offset,
                                       int pre_steps) {
  const PhysicsParams params = p.final_params();
  LatticeState s = initial;
  propagate(s, params, p.dt_integration, static_cast<std::size_t>(offset + pre_steps));
  const auto n_steps = static_cast<std::size_t>(p.n_prediction_steps) * p.prediction_stride;
  SimulateOptions opts;
  opts.record_midpoints = p.record_midpoints;
  Trajectory t = simulate(s, params, p.dt_integration, n_steps, static_cast<std::size_t>(p.prediction_stride), opts);
  TrajectoryRecord rec;
  rec.snapshots = std::move(t.snapshots);
  rec.midpoints = std::move(t.midpoints);
  rec.offset = offset;
  rec.start_time = (offset + pre_steps) * p.dt_integration;
  stamp_times(rec, p.prediction_dt());
  return rec;
}

}  // namespace detail

/// CDW ground state at g_initial, evolved at g_final. Trajectory k starts k
/// integration steps after the quench.
inline Dataset generate_shallow_dataset(const QuenchProtocol& protocol, int jobs = 1) {
  protocol.validate();
  if (protocol.kind != QuenchKind::shallow) throw InvalidArgument("generate_shallow_dataset: protocol is not shallow");
  const LatticeState ground = cdw_ground_state(PhysicsParams::half_filled(protocol.L, protocol.g_initial));
  Dataset ds;
  ds.protocol = protocol;
  ds.trajectories.resize(static_cast<std::size_t>(protocol.n_trajectories));
  detail::parallel_for(ds.trajectories.size(), jobs, [&](std::size_t k) {
    ds.trajectories[k] = detail::run_trajectory(ground, protocol, static_cast<int>(k), 0);
    ds.trajectories[k].seed = protocol.seed;
  });
  const auto split = split_by_hash(ds.trajectories.size(), protocol.seed);
  for (std::size_t k = 0; k < split.size(); ++k) ds.trajectories[k].test = split[k];
  return ds;
}

/// Free electron gas plus Gaussian Q noise (per-trajectory seed), evolved at
/// g_final. Offsets cycle mod prediction_stride and are applied before the
/// transient skip.
inline Dataset generate_deep_dataset(const QuenchProtocol& protocol, int jobs = 1) {
  protocol.validate();
  if (protocol.kind != QuenchKind::deep) throw InvalidArgument("generate_deep_dataset: protocol is not deep");
  const LatticeState ground = free_fermi_ground_state(PhysicsParams::half_filled(protocol.L, 0.0));
  Dataset ds;
  ds.protocol = protocol;
  ds.trajectories.resize(static_cast<std::size_t>(protocol.n_trajectories));
  detail::parallel_for(ds.trajectories.size(), jobs, [&](std::size_t k) {
    const std::uint64_t seed = trajectory_seed(protocol.seed, k);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, protocol.q_noise_sigma);
    LatticeState init = ground;
    if (protocol.q_noise_sigma > 0)
      for (int i = 0; i < protocol.L; ++i) init.Q(i) = noise(rng);
    const int offset = static_cast<int>(k % static_cast<std::size_t>(protocol.prediction_stride));
    ds.trajectories[k] = detail::run_trajectory(init, protocol, offset, protocol.transient_steps());
    ds.trajectories[k].seed = seed;
  });
  const auto split = split_by_hash(ds.trajectories.size(), protocol.seed);
  for (std::size_t k = 0; k < split.size(); ++k) ds.trajectories[k].test = split[k];
  return ds;
}

inline Dataset generate_dataset(const QuenchProtocol& protocol, int jobs = 1) {
  return protocol.kind == QuenchKind::shallow ? generate_shallow_dataset(protocol, jobs)
                                              : generate_deep_dataset(protocol, jobs);
}

/// Supervision target for the differentiator at a stored mid-interval state.
inline StateDerivative midpoint_derivative(const LatticeState& midstate, const PhysicsParams& params) {
  return eval_rhs(midstate, params);
}

/// Largest magnitudes of the state, its time derivative, and its per-step
/// update over a dataset.
struct ScalingCoefficients {
  double r = 1, q = 1, p = 1;
  double r_d = 1, q_d = 1, p_d = 1;
  double r_delta = 1, q_delta = 1, p_delta = 1;

  std::array<double, 9> as_array() const { return {r, q, p, r_d, q_d, p_d, r_delta, q_delta, p_delta}; }
  static ScalingCoefficients from_array(const std::array<double, 9>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]};
  }
  static ScalingCoefficients unit() { return {}; }
  bool all_positive() const {
    for (double v : as_array())
      if (!(v > 0) || !std::isfinite(v)) return false;
    return true;
  }
  friend bool operator==(const ScalingCoefficients&, const ScalingCoefficients&) = default;
};

inline json to_json(const ScalingCoefficients& s) {
  return json{{"r", s.r},     {"q", s.q},     {"p", s.p},           {"r_d", s.r_d},       {"q_d", s.q_d},
              {"p_d", s.p_d}, {"r_delta", s.r_delta}, {"q_delta", s.q_delta}, {"p_delta", s.p_delta}};
}

namespace detail {
inline double max_abs(const ComplexMatrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }
inline double max_abs(const RealVector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }
}  // namespace detail

/// Computes the nine coefficients over the selected trajectories (all when
/// `subset` is empty). Derivative maxima use eval_rhs on every stored state.
inline ScalingCoefficients compute_scaling_coefficients(const Dataset& ds, const std::vector<std::size_t>& subset = {}) {
  std::vector<std::size_t> idx = subset;
  if (idx.empty())
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) idx.push_back(i);
  bool any_state = false;
  for (auto i : idx) any_state = any_state || !ds.trajectories.at(i).snapshots.empty();
  if (!any_state) throw DegenerateDataError("compute_scaling_coefficients: empty dataset");

  const PhysicsParams params = ds.params();
  ScalingCoefficients s{0, 0, 0, 0, 0, 0, 0, 0, 0};
  auto absorb_state = [&](const LatticeState& x) {
    s.r = std::max(s.r, detail::max_abs(x.rho));
    s.q = std::max(s.q, detail::max_abs(x.Q));
    s.p = std::max(s.p, detail::max_abs(x.P));
    const StateDerivative d = eval_rhs(x, params);
    s.r_d = std::max(s.r_d, detail::max_abs(d.drho));
    s.q_d = std::max(s.q_d, detail::max_abs(d.dQ));
    s.p_d = std::max(s.p_d, detail::max_abs(d.dP));
  };
  for (auto i : idx) {
    const auto& tr = ds.trajectories[i];
    for (const auto& x : tr.snapshots) absorb_state(x);
    for (const auto& x : tr.midpoints) absorb_state(x);
    for (std::size_t k = 0; k + 1 < tr.snapshots.size(); ++k) {
      s.r_delta = std::max(s.r_delta, detail::max_abs(ComplexMatrix(tr.snapshots[k + 1].rho - tr.snapshots[k].rho)));
      s.q_delta = std::max(s.q_delta, detail::max_abs(RealVector(tr.snapshots[k + 1].Q - tr.snapshots[k].Q)));
      s.p_delta = std::max(s.p_delta, detail::max_abs(RealVector(tr.snapshots[k + 1].P - tr.snapshots[k].P)));
    }
  }
  if (!s.all_positive())
    throw DegenerateDataError("compute_scaling_coefficients: a coefficient is zero (constant or too-short data)");
  return s;
}

// ---------------------------------------------------------------------------
// Binary container

inline std::vector<std::uint8_t> encode_trajectory(const TrajectoryRecord& rec, int L) {
  io::ByteWriter w;
  w.put_bytes(std::string_view(kDatasetMagic, 8));
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(L));
  w.put<std::uint64_t>(rec.snapshots.size());
  w.put<std::uint64_t>(rec.midpoints.size());
  auto put_state = [&](const LatticeState& s) {
    if (s.size() != L || s.rho.rows() != L || s.rho.cols() != L)
      throw InvalidArgument("encode_trajectory: state shape does not match L");
    for (int i = 0; i < L; ++i) w.put<double>(s.Q(i));
    for (int i = 0; i < L; ++i) w.put<double>(s.P(i));
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) w.put<double>(s.rho(i, j).real());
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) w.put<double>(s.rho(i, j).imag());
  };
  for (const auto& s : rec.snapshots) put_state(s);
  for (const auto& s : rec.midpoints) put_state(s);
  w.put_crc();
  return w.bytes();
}

struct DecodedBlob {
  int L = 0;
  std::vector<LatticeState> snapshots;
  std::vector<LatticeState> midpoints;
};

inline DecodedBlob decode_trajectory(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  constexpr std::size_t kHeader = 32;
  if (bytes.size() < kHeader) throw TruncationError(what + ": shorter than the 32-byte header");
  io::ByteReader r(bytes.data(), bytes.size(), what);
  if (r.get_bytes(8) != std::string(kDatasetMagic, 8)) throw FormatError(what + ": bad magic (not a trajectory blob)");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion)
    throw VersionMismatchError(what + fmt::format(": blob version {} but reader supports {}", version, kDatasetVersion));
  DecodedBlob out;
  out.L = static_cast<int>(r.get<std::uint32_t>());
  const auto n_snap = r.get<std::uint64_t>();
  const auto n_mid = r.get<std::uint64_t>();
  const std::size_t L = static_cast<std::size_t>(out.L);
  const std::size_t record = (2 * L + 2 * L * L) * sizeof(double);
  const long double expected = kHeader + static_cast<long double>(n_snap + n_mid) * record + 8;
  if (static_cast<long double>(bytes.size()) < expected)
    throw TruncationError(what + fmt::format(": {} bytes, header promises {}", bytes.size(), static_cast<double>(expected)));
  if (static_cast<long double>(bytes.size()) > expected)
    throw PayloadIntegrityError(what + ": payload larger than header L/counts imply");
  io::verify_crc_trailer(bytes, what);
  auto get_state = [&]() {
    LatticeState s;
    s.Q.resize(out.L);
    s.P.resize(out.L);
    s.rho.resize(out.L, out.L);
    for (int i = 0; i < out.L; ++i) s.Q(i) = r.get<double>();
    for (int i = 0; i < out.L; ++i) s.P(i) = r.get<double>();
    Eigen::MatrixXd re(out.L, out.L), im(out.L, out.L);
    for (int i = 0; i < out.L; ++i)
      for (int j = 0; j < out.L; ++j) re(i, j) = r.get<double>();
    for (int i = 0; i < out.L; ++i)
      for (int j = 0; j < out.L; ++j) im(i, j) = r.get<double>();
    for (int i = 0; i < out.L; ++i)
      for (int j = 0; j < out.L; ++j) s.rho(i, j) = cplx(re(i, j), im(i, j));
    return s;
  };
  for (std::uint64_t k = 0; k < n_snap; ++k) out.snapshots.push_back(get_state());
  for (std::uint64_t k = 0; k < n_mid; ++k) out.midpoints.push_back(get_state());
  return out;
}

inline std::string blob_name(std::size_t k) { return fmt::format("traj_{:05d}.bin", k); }

inline json metadata_json(const Dataset& ds) {
  json trajs = json::array();
  for (std::size_t k = 0; k < ds.trajectories.size(); ++k) {
    const auto& t = ds.trajectories[k];
    trajs.push_back({{"file", blob_name(k)},
                     {"offset", t.offset},
                     {"seed", t.seed},
                     {"start_time", t.start_time},
                     {"n_snapshots", t.snapshots.size()},
                     {"n_midpoints", t.midpoints.size()},
                     {"split", t.test ? "test" : "train"}});
  }
  const PhysicsParams p = ds.params();
  return json{{"schema_version", kDatasetSchema},
              {"format", "holstein-dataset"},
              {"protocol", to_json(ds.protocol)},
              {"L", ds.protocol.L},
              {"prediction_dt", ds.prediction_dt()},
              {"physics",
               {{"t_nn", p.t_nn}, {"hbar", p.hbar}, {"omega", p.omega}, {"mass", p.mass}, {"spring_k", p.spring_k}}},
              {"n_trajectories", ds.trajectories.size()},
              {"trajectories", trajs}};
}

/// Writes the dataset into `dir` (created if missing).
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
  for (std::size_t k = 0; k < ds.trajectories.size(); ++k)
    io::write_file(dir / blob_name(k), encode_trajectory(ds.trajectories[k], ds.protocol.L));
  io::write_text(dir / "metadata.json", metadata_json(ds).dump(2) + "\n");
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  json meta;
  try {
    meta = json::parse(io::read_text(dir / "metadata.json"));
  } catch (const json::exception& e) {
    throw FormatError("metadata.json in " + dir.string() + " is malformed: " + e.what());
  }
  if (meta.value("schema_version", -1) != kDatasetSchema)
    throw VersionMismatchError("dataset schema version " + meta.value("schema_version", json(-1)).dump() +
                               " not supported");
  Dataset ds;
  try {
    ds.protocol = protocol_from_json(meta.at("protocol"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("metadata.json protocol block: ") + e.what());
  }
  const int L = meta.at("L").get<int>();
  for (const auto& t : meta.at("trajectories")) {
    const std::string file = t.at("file").get<std::string>();
    DecodedBlob blob = decode_trajectory(io::read_file(dir / file), file);
    if (blob.L != L)
      throw PayloadIntegrityError(file + fmt::format(": header L={} but dataset L={}", blob.L, L));
    if (blob.snapshots.size() != t.at("n_snapshots").get<std::size_t>() ||
        blob.midpoints.size() != t.at("n_midpoints").get<std::size_t>())
      throw PayloadIntegrityError(file + ": snapshot counts disagree with metadata");
    TrajectoryRecord rec;
    rec.snapshots = std::move(blob.snapshots);
    rec.midpoints = std::move(blob.midpoints);
    rec.offset = t.at("offset").get<int>();
    rec.seed = t.at("seed").get<std::uint64_t>();
    rec.start_time = t.at("start_time").get<double>();
    rec.test = t.at("split").get<std::string>() == "test";
    detail::stamp_times(rec, ds.prediction_dt());
    ds.trajectories.push_back(std::move(rec));
  }
  return ds;
}

/// Validates every stored state against the LatticeState contract.
inline void check_dataset(const Dataset& ds, double herm_tol = 1e-12) {
  const PhysicsParams p = ds.params();
  for (std::size_t k = 0; k < ds.trajectories.size(); ++k) {
    const auto& t = ds.trajectories[k];
    if (!t.midpoints.empty() && t.midpoints.size() + 1 != t.snapshots.size())
      throw IntegrityError("trajectory " + std::to_string(k) + ": midpoint count must be snapshots - 1");
    for (const auto& s : t.snapshots) check_state(s, p, herm_tol, 1e-8, 1e-8);
    for (const auto& s : t.midpoints) check_state(s, p, herm_tol, 1e-8, 1e-8);
  }
}

}  // namespace holstein::data
