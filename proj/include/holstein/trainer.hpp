#pragma once

// Multi-step rollout training with curriculum stages.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "holstein/checkpoint.hpp"
#include "holstein/dataset.hpp"
#include "holstein/models.hpp"
#include "holstein/optim.hpp"

namespace holstein::train {

using ad::Tensor;
using data::Dataset;
using data::ScalingCoefficients;
using json = nlohmann::json;
using model::Model;
using model::Variant;
using ad::Mode;

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(const std::string& what, std::size_t stage, std::size_t step)
      : Error(fmt::format("{} (stage {}, optimizer step {})", what, stage, step)), stage_(stage), step_(step) {}
  std::size_t stage() const noexcept { return stage_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t stage_, step_;
};

struct CurriculumStage {
  int rollout_steps = 1;
  double noise_sigma = 0.0;  // normalized units
  int n_epochs = 1;
  std::size_t max_batches_per_epoch = 0;  // 0: every window once per epoch
};

struct TrainingConfig {
  std::vector<CurriculumStage> stages;
  int batch_size = 16;
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  std::size_t warmup_steps = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double clip_max_norm = 1.0;
  std::uint64_t seed = 0;
  std::string precision = "single";
  int validation_horizon = 10;
  int validation_starts = 4;

  /// N = 1, 2, 4, 8 with sigma = 0, 2e-3, 5e-3, 1e-2 and equal budgets.
  static std::vector<CurriculumStage> default_curriculum(int epochs_per_stage = 1, std::size_t max_batches = 0) {
    return {{1, 0.0, epochs_per_stage, max_batches},
            {2, 2e-3, epochs_per_stage, max_batches},
            {4, 5e-3, epochs_per_stage, max_batches},
            {8, 1e-2, epochs_per_stage, max_batches}};
  }

  void validate() const {
    if (stages.empty()) throw InvalidArgument("TrainingConfig: at least one curriculum stage is required");
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const auto& st = stages[s];
      if (st.rollout_steps < 1 || st.n_epochs < 1 || !(st.noise_sigma >= 0))
        throw InvalidArgument(fmt::format("TrainingConfig: stage {} needs N >= 1, epochs >= 1, sigma >= 0", s));
      if (s > 0 && (st.rollout_steps < stages[s - 1].rollout_steps || st.noise_sigma < stages[s - 1].noise_sigma))
        throw InvalidArgument("TrainingConfig: stages must be non-decreasing in N and noise");
    }
    if (batch_size < 1 || !(lr_max > 0) || !(lr_min >= 0) || lr_min > lr_max || !(clip_max_norm > 0) ||
        !(weight_decay >= 0))
      throw InvalidArgument("TrainingConfig: batch size, learning rates, clip norm must be positive");
  }
};

inline json to_json(const TrainingConfig& c) {
  json stages = json::array();
  for (const auto& s : c.stages)
    stages.push_back({{"rollout_steps", s.rollout_steps},
                      {"noise_sigma", s.noise_sigma},
                      {"n_epochs", s.n_epochs},
                      {"max_batches_per_epoch", s.max_batches_per_epoch}});
  return json{{"stages", stages},           {"batch_size", c.batch_size},
              {"lr_max", c.lr_max},         {"lr_min", c.lr_min},
              {"warmup_steps", c.warmup_steps}, {"beta1", c.beta1},
              {"beta2", c.beta2},           {"eps", c.eps},
              {"weight_decay", c.weight_decay}, {"clip_max_norm", c.clip_max_norm},
              {"seed", c.seed},             {"precision", c.precision},
              {"validation_horizon", c.validation_horizon}, {"validation_starts", c.validation_starts}};
}

inline TrainingConfig training_config_from_json(const json& j) {
  TrainingConfig c;
  if (j.contains("stages")) {
    c.stages.clear();
    for (const auto& s : j.at("stages"))
      c.stages.push_back({s.value("rollout_steps", 1), s.value("noise_sigma", 0.0), s.value("n_epochs", 1),
                          s.value("max_batches_per_epoch", std::size_t{0})});
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_max = j.value("lr_max", c.lr_max);
  c.lr_min = j.value("lr_min", c.lr_min);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.clip_max_norm = j.value("clip_max_norm", c.clip_max_norm);
  c.seed = j.value("seed", c.seed);
  c.precision = j.value("precision", c.precision);
  c.validation_horizon = j.value("validation_horizon", c.validation_horizon);
  c.validation_starts = j.value("validation_starts", c.validation_starts);
  return c;
}

// ---------------------------------------------------------------------------
// Batching and noise

/// N + 1 consecutive snapshots (and the N midpoints between them, if any).
struct Segment {
  std::span<const LatticeState> states;
  std::span<const LatticeState> midpoints;
};

struct Window {
  std::size_t trajectory;
  std::size_t start;
  friend bool operator==(const Window&, const Window&) = default;
};

inline Segment segment_of(const Dataset& ds, const Window& w, int n_steps) {
  const auto& t = ds.trajectories.at(w.trajectory);
  Segment s;
  s.states = std::span<const LatticeState>(t.snapshots).subspan(w.start, static_cast<std::size_t>(n_steps) + 1);
  if (!t.midpoints.empty())
    s.midpoints = std::span<const LatticeState>(t.midpoints).subspan(w.start, static_cast<std::size_t>(n_steps));
  return s;
}

/// Every (trajectory, start) window of N + 1 snapshots over `trajectories`,
/// shuffled and cut into batches. Each window appears exactly once.
template <typename Rng>
std::vector<std::vector<Window>> make_batches(const Dataset& ds, const std::vector<std::size_t>& trajectories,
                                              int n_steps, int batch_size, Rng& rng) {
  if (n_steps < 1 || batch_size < 1) throw InvalidArgument("make_batches: N and batch_size must be >= 1");
  std::vector<Window> windows;
  for (std::size_t t : trajectories) {
    const std::size_t len = ds.trajectories.at(t).snapshots.size();
    if (len < static_cast<std::size_t>(n_steps) + 1)
      throw InvalidArgument(fmt::format("make_batches: trajectory {} has {} snapshots, N+1 = {} needed", t, len,
                                        n_steps + 1));
    for (std::size_t s = 0; s + n_steps < len; ++s) windows.push_back({t, s});
  }
  std::shuffle(windows.begin(), windows.end(), rng);
  std::vector<std::vector<Window>> batches;
  for (std::size_t i = 0; i < windows.size(); i += static_cast<std::size_t>(batch_size))
    batches.emplace_back(windows.begin() + static_cast<std::ptrdiff_t>(i),
                         windows.begin() + static_cast<std::ptrdiff_t>(std::min(windows.size(), i + batch_size)));
  return batches;
}

/// Adds i.i.d. N(0, sigma^2) noise in normalized units: rho entries (real and
/// imaginary parts) by sigma*r, Q by sigma*q, P by sigma*p.
template <typename Rng>
std::vector<LatticeState> add_input_noise(std::span<const LatticeState> states, double sigma,
                                          const ScalingCoefficients& c, Rng& rng) {
  if (!(sigma >= 0)) throw InvalidArgument("add_input_noise: sigma must be >= 0");
  std::vector<LatticeState> out(states.begin(), states.end());
  if (sigma == 0.0) return out;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (auto& s : out) {
    for (Eigen::Index k = 0; k < s.rho.size(); ++k) {
      const double re = n01(rng), im = n01(rng);
      s.rho.data()[k] += cplx(sigma * c.r * re, sigma * c.r * im);
    }
    for (Eigen::Index i = 0; i < s.Q.size(); ++i) s.Q(i) += sigma * c.q * n01(rng);
    for (Eigen::Index i = 0; i < s.P.size(); ++i) s.P(i) += sigma * c.p * n01(rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses

namespace detail {

template <typename T>
void embed_difference(const LatticeState& a, const LatticeState& b, const ScalingCoefficients& c, T* out) {
  LatticeState d{b.Q - a.Q, b.P - a.P, b.rho - a.rho, 0.0};
  model::embed_scaled_into(d, c.r_delta, c.q_delta, c.p_delta, out);
}

template <typename T>
void embed_derivative(const StateDerivative& d, const ScalingCoefficients& c, T* out) {
  LatticeState s{d.dQ, d.dP, d.drho, 0.0};
  model::embed_scaled_into(s, c.r_d, c.q_d, c.p_d, out);
}

}  // namespace detail

/// Rollout loss over a batch of segments, averaged over segments.
///
/// Update term: sum_k sum_m || (w_m(t_k+1) - w_m(t_k)) - dw_m(k) ||_2 in units
/// of the update coefficients, where dw(k) is predicted from the model's own
/// k-th rolled-out input and w is ground truth. PARC adds the derivative term
/// sum_k sum_m || dw_m/dt(midpoint k) - D(k) ||_2 in units of the derivative
/// coefficients. `first_inputs` (possibly noisy) replaces segment.states[0]
/// as the first model input when given.
template <typename T>
struct BatchLoss {
  Tensor<T> total;
  double derivative_term = 0.0;
  double update_term = 0.0;
};

template <typename T>
BatchLoss<T> rollout_loss(Model<T>& m, const PhysicsParams& physics, const std::vector<Segment>& segments,
                          int n_steps, const std::vector<LatticeState>* first_inputs = nullptr) {
  if (segments.empty()) throw InvalidArgument("rollout_loss: empty batch");
  if (n_steps < 1) throw InvalidArgument("rollout_loss: N must be >= 1");
  if (first_inputs && first_inputs->size() != segments.size())
    throw InvalidArgument("rollout_loss: one first input per segment is required");
  const bool parc = m.variant() == Variant::parc;
  const int L = m.L();
  const std::size_t per = 4 * static_cast<std::size_t>(L) * L;
  const int B = static_cast<int>(segments.size());
  const auto& c = m.scaling();
  for (const auto& s : segments) {
    if (s.states.size() < static_cast<std::size_t>(n_steps) + 1)
      throw InvalidArgument(fmt::format("rollout loss: segment has {} states, N+1 = {} needed", s.states.size(),
                                        n_steps + 1));
    if (parc && s.midpoints.size() < static_cast<std::size_t>(n_steps))
      throw InvalidArgument("PARC loss needs the mid-interval states of every step");
  }

  std::vector<T> x0(B * per);
  for (int b = 0; b < B; ++b) {
    const LatticeState& s0 = first_inputs ? (*first_inputs)[b] : segments[b].states[0];
    m.check_size(s0);
    model::embed_scaled_into(s0, c.r, c.q, c.p, x0.data() + b * per);
  }
  auto groups = model::component_groups(L);
  Tensor<T> x = Tensor<T>::from({B, 4, L, L}, std::move(x0));
  std::vector<Tensor<T>> terms;
  BatchLoss<T> out;
  for (int k = 0; k < n_steps; ++k) {
    std::vector<T> target(B * per);
    for (int b = 0; b < B; ++b)
      detail::embed_difference(segments[b].states[k], segments[b].states[k + 1], c, target.data() + b * per);
    Tensor<T> update;
    if (parc) {
      std::vector<T> dtarget(B * per);
      for (int b = 0; b < B; ++b)
        detail::embed_derivative(data::midpoint_derivative(segments[b].midpoints[k], physics), c,
                                 dtarget.data() + b * per);
      Tensor<T> deriv = m.derivative_raw(x);
      auto dterm = ad::grouped_l2_distance(deriv, dtarget, groups, model::kComponentCount);
      out.derivative_term += static_cast<double>(dterm.item());
      terms.push_back(dterm);
      update = m.integrate_raw(deriv);
    } else {
      update = m.update_raw(x);
    }
    auto uterm = ad::grouped_l2_distance(update, target, groups, model::kComponentCount);
    out.update_term += static_cast<double>(uterm.item());
    terms.push_back(uterm);
    if (k + 1 < n_steps) x = m.advance_scaled(x, update);
  }
  out.total = ad::scale(ad::add_scalars(terms), T(1) / T(B));
  out.derivative_term /= B;
  out.update_term /= B;
  return out;
}

/// Single-segment standard loss (eval-mode forward, no noise).
template <typename T>
BatchLoss<T> loss_standard(Model<T>& m, const Segment& segment, int n_steps) {
  m.require(Variant::standard);
  return rollout_loss(m, PhysicsParams::half_filled(m.L(), 0.0), {segment}, n_steps);
}

template <typename T>
BatchLoss<T> loss_parc(Model<T>& m, const PhysicsParams& physics, const Segment& segment, int n_steps) {
  m.require(Variant::parc);
  return rollout_loss(m, physics, {segment}, n_steps);
}

// ---------------------------------------------------------------------------
// Validation

/// Mean relative error of `horizon`-step rollouts from several start points
/// of each held-out trajectory, in scaled units.
template <typename T>
double validation_error(Model<T>& m, const Dataset& ds, const std::vector<std::size_t>& trajectories, int horizon,
                        int starts_per_trajectory) {
  const Mode saved = m.mode();
  m.set_mode(Mode::eval);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t : trajectories) {
    const auto& snaps = ds.trajectories.at(t).snapshots;
    if (snaps.size() < static_cast<std::size_t>(horizon) + 1) continue;
    const std::size_t span = snaps.size() - horizon;
    for (int k = 0; k < starts_per_trajectory; ++k) {
      const std::size_t s0 = span * static_cast<std::size_t>(k) / static_cast<std::size_t>(starts_per_trajectory);
      double err = 0.0;
      try {
        const auto pred = model::rollout(m, snaps[s0], static_cast<std::size_t>(horizon));
        for (int j = 1; j <= horizon; ++j) err += model::normalized_state_error(pred[j], snaps[s0 + j], m.scaling());
        err /= horizon;
      } catch (const DivergenceError&) {
        err = std::numeric_limits<double>::infinity();
      }
      total += err;
      ++count;
    }
  }
  m.set_mode(saved);
  return count ? total / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Training loop

struct MetricsRow {
  std::size_t step;
  std::size_t stage;
  double lr;
  double loss_total;
  double loss_diff_term;
  double loss_int_term;
  double grad_norm;
};

struct TrainingResult {
  std::vector<MetricsRow> metrics;
  std::vector<double> stage_validation;  // one per stage; NaN without held-out data
  std::size_t best_stage = 0;
  std::size_t optimizer_steps = 0;
  double seconds = 0.0;
};

struct TrainingOutputs {
  std::optional<std::filesystem::path> metrics_csv;     // appended
  std::optional<std::filesystem::path> checkpoint_dir;  // stage_<k>.ckpt and best.ckpt
};

inline constexpr const char* kMetricsHeader = "step,stage,lr,loss_total,loss_diff_term,loss_int_term,grad_norm";

inline std::string format_metrics_row(const MetricsRow& r) {
  return fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}", r.step, r.stage, r.lr, r.loss_total,
                     r.loss_diff_term, r.loss_int_term, r.grad_norm);
}

/// Number of optimizer steps per epoch for a stage.
inline std::size_t batches_per_epoch(const Dataset& ds, const std::vector<std::size_t>& trajectories,
                                     const CurriculumStage& st, int batch_size) {
  std::size_t windows = 0;
  for (std::size_t t : trajectories) {
    const std::size_t len = ds.trajectories.at(t).snapshots.size();
    if (len >= static_cast<std::size_t>(st.rollout_steps) + 1) windows += len - st.rollout_steps;
  }
  std::size_t n = (windows + batch_size - 1) / batch_size;
  if (st.max_batches_per_epoch) n = std::min(n, st.max_batches_per_epoch);
  return n;
}

/// Trains `m` in place. Learning rate restarts at each stage; the parameters
/// with the lowest held-out rollout error across stages are kept.
template <typename T>
TrainingResult train(Model<T>& m, const Dataset& ds, const TrainingConfig& cfg, const TrainingOutputs& outputs = {}) {
  cfg.validate();
  if (cfg.precision != "single" && cfg.precision != "double")
    throw InvalidArgument("TrainingConfig: precision must be 'single' or 'double'");
  if (ds.protocol.L != m.L()) throw InvalidArgument("train: dataset L does not match model L");
  if (m.variant() == Variant::parc)
    for (const auto& t : ds.trajectories)
      if (t.midpoints.size() + 1 < t.snapshots.size())
        throw InvalidArgument("train: PARC training needs mid-interval states in the dataset");
  const auto train_idx = ds.train_indices();
  const auto test_idx = ds.test_indices();
  if (train_idx.empty()) throw InvalidArgument("train: dataset has no training trajectories");
  const PhysicsParams physics = ds.params();

  std::vector<std::size_t> cycles;
  for (const auto& st : cfg.stages)
    cycles.push_back(static_cast<std::size_t>(st.n_epochs) * batches_per_epoch(ds, train_idx, st, cfg.batch_size));
  ad::LrSchedule schedule{cfg.lr_max, cfg.lr_min, cfg.warmup_steps, cycles};

  auto params = m.parameters();
  ad::AdamW<T> opt(params, {cfg.lr_max, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
  std::mt19937_64 batch_rng(data::mix64(cfg.seed ^ 0xBA7C4ULL));
  std::mt19937_64 noise_rng(data::mix64(cfg.seed ^ 0x4015EULL));
  m.reseed_dropout(data::mix64(cfg.seed ^ 0xD50D50ULL));

  std::optional<std::ofstream> csv;
  if (outputs.metrics_csv) {
    if (outputs.metrics_csv->has_parent_path()) std::filesystem::create_directories(outputs.metrics_csv->parent_path());
    const bool fresh = !std::filesystem::exists(*outputs.metrics_csv) || std::filesystem::file_size(*outputs.metrics_csv) == 0;
    csv.emplace(*outputs.metrics_csv, std::ios::app);
    if (!*csv) throw IoError("cannot open " + outputs.metrics_csv->string() + " for appending");
    if (fresh) *csv << kMetricsHeader << "\n";
  }
  if (outputs.checkpoint_dir) std::filesystem::create_directories(*outputs.checkpoint_dir);

  TrainingResult result;
  const auto t0 = std::chrono::steady_clock::now();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<T>> best_params = model::snapshot_parameters(m);
  std::size_t step = 0;

  for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
    const auto& st = cfg.stages[si];
    for (int epoch = 0; epoch < st.n_epochs; ++epoch) {
      auto batches = make_batches(ds, train_idx, st.rollout_steps, cfg.batch_size, batch_rng);
      if (st.max_batches_per_epoch && batches.size() > st.max_batches_per_epoch)
        batches.resize(st.max_batches_per_epoch);
      for (const auto& batch : batches) {
        std::vector<Segment> segs;
        std::vector<LatticeState> firsts;
        for (const auto& w : batch) {
          segs.push_back(segment_of(ds, w, st.rollout_steps));
          firsts.push_back(segs.back().states[0]);
        }
        if (st.noise_sigma > 0) firsts = add_input_noise<std::mt19937_64>(firsts, st.noise_sigma, m.scaling(), noise_rng);
        const double lr = ad::lr_at(step, schedule);
        m.set_mode(Mode::train);
        double grad_norm = 0.0;
        BatchLoss<T> loss;
        try {
          loss = rollout_loss(m, physics, segs, st.rollout_steps, &firsts);
          if (!std::isfinite(static_cast<double>(loss.total.item())))
            throw TrainingDivergedError("loss is not finite", si, step);
          loss.total.backward();
          grad_norm = ad::global_grad_norm(params);
          ad::clip_gradients(params, cfg.clip_max_norm);
          if (!std::isfinite(grad_norm)) throw TrainingDivergedError("gradient norm is not finite", si, step);
          opt.step(lr);
        } catch (const NonFiniteError& e) {
          throw TrainingDivergedError(std::string("non-finite value during training: ") + e.what(), si, step);
        }
        MetricsRow row{step, si, lr, static_cast<double>(loss.total.item()), loss.derivative_term, loss.update_term,
                       grad_norm};
        if (csv) *csv << format_metrics_row(row) << "\n";
        result.metrics.push_back(row);
        ++step;
      }
    }
    m.set_mode(Mode::eval);
    const double v = validation_error(m, ds, test_idx, cfg.validation_horizon, cfg.validation_starts);
    result.stage_validation.push_back(v);
    const bool better = test_idx.empty() ? true : (std::isfinite(v) && v < best);
    if (better) {
      best = test_idx.empty() ? best : v;
      best_params = model::snapshot_parameters(m);
      result.best_stage = si;
    }
    if (outputs.checkpoint_dir)
      model::write_checkpoint(m, *outputs.checkpoint_dir / fmt::format("stage_{}.ckpt", si),
                              json{{"stage", si}, {"validation_error", std::isfinite(v) ? json(v) : json(nullptr)}});
  }
  model::restore_parameters(m, best_params);
  m.set_mode(Mode::eval);
  if (outputs.checkpoint_dir)
    model::write_checkpoint(m, *outputs.checkpoint_dir / "best.ckpt",
                            json{{"stage", result.best_stage}, {"training", to_json(cfg)}});
  if (csv) csv->flush();
  result.optimizer_steps = step;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace holstein::train
