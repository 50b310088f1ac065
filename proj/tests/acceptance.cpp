// Runs the ten acceptance criteria and prints one PASS/FAIL line each.
//
//   acceptance [work_dir [criteria]]
//
// `criteria` is an optional comma-separated list of criterion numbers.
// Datasets and checkpoints go to work_dir (default ./acceptance_work). With
// HOLSTEIN_ACCEPTANCE_REUSE=1 previously generated datasets and trained
// checkpoints in work_dir are reused instead of rebuilt.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <iostream>
#include <random>
#include <sstream>

#include <fmt/core.h>

#include "holstein/analysis.hpp"
#include "holstein/checkpoint.hpp"
#include "holstein/trainer.hpp"

using namespace holstein;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same_files(const fs::path& a, const fs::path& b) {
  return fs::exists(a) && fs::exists(b) && file_bytes(a) == file_bytes(b);
}

bool same_dataset_dirs(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (!same_files(e.path(), b / e.path().filename())) return false;
    ++n;
  }
  return n > 0 && n == static_cast<std::size_t>(std::distance(fs::directory_iterator(b), {}));
}

double state_distance(const LatticeState& a, const LatticeState& b) {
  return std::sqrt((a.rho - b.rho).squaredNorm() + (a.Q - b.Q).squaredNorm() + (a.P - b.P).squaredNorm());
}

// Training wall time is stored next to the checkpoints so reused models
// still report it.
void save_seconds(const fs::path& dir, double seconds) { std::ofstream(dir / "train_seconds.txt") << seconds << "\n"; }

double load_seconds(const fs::path& dir) {
  double s = std::numeric_limits<double>::infinity();
  std::ifstream(dir / "train_seconds.txt") >> s;
  return s;
}

template <typename A>
double max_abs_diff(const A& a, const A& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// Full oscillations of a trace about `mean`.
double oscillations(const std::vector<double>& v, double mean) {
  int crossings = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if ((v[i - 1] - mean) * (v[i] - mean) < 0) ++crossings;
  return crossings / 2.0;
}

class Context {
 public:
  explicit Context(fs::path work) : work_(std::move(work)) {
    const char* r = std::getenv("HOLSTEIN_ACCEPTANCE_REUSE");
    reuse_ = r && std::string(r) == "1";
    fs::create_directories(work_);
  }

  const fs::path& work() const { return work_; }
  bool reuse() const { return reuse_; }

  const data::Dataset& shallow() { return cached(shallow_, "shallow", data::QuenchProtocol::shallow_default(16)); }

  const data::Dataset& deep_train() {
    auto p = data::QuenchProtocol::deep_default(16, 40);
    p.seed = 1;
    return cached(deep_train_, "deep_train", p);
  }

  // Seed-disjoint from deep_train; used only as climate ground truth.
  const data::Dataset& deep_climate() {
    auto p = data::QuenchProtocol::deep_default(16, 32);
    p.seed = 777;
    return cached(deep_climate_, "deep_climate", p);
  }

 private:
  const data::Dataset& cached(std::optional<data::Dataset>& slot, const std::string& name,
                              const data::QuenchProtocol& p) {
    if (slot) return *slot;
    const fs::path dir = work_ / name;
    if (reuse_ && fs::exists(dir / "metadata.json")) {
      slot = data::read_dataset(dir);
      fmt::print("  reused {}\n", name);
    } else {
      const auto t0 = std::chrono::steady_clock::now();
      slot = data::generate_dataset(p, 1);
      fs::remove_all(dir);
      data::write_dataset(*slot, dir);
      fmt::print("  generated {} ({} trajectories, {:.0f} s)\n", name, slot->trajectories.size(), seconds_since(t0));
      std::fflush(stdout);
    }
    return *slot;
  }

  fs::path work_;
  bool reuse_ = false;
  std::optional<data::Dataset> shallow_, deep_train_, deep_climate_;
};

// ---------------------------------------------------------------------------

Outcome integrator_order() {
  // Error accumulated over one prediction interval of 0.64 with step dt,
  // against a dt/10 reference over the same interval.
  const auto p = PhysicsParams::half_filled(16, 0.8);
  LatticeState s = cdw_ground_state(p.with_coupling(0.5));
  propagate(s, p, 0.01, 300);
  const double interval = 0.64;
  auto error = [&](double dt) {
    const auto n = static_cast<std::size_t>(std::llround(interval / dt));
    LatticeState a = s, ref = s;
    propagate(a, p, dt, n);
    propagate(ref, p, dt / 10, 10 * n);
    return state_distance(a, ref);
  };
  const double e1 = error(0.08), e2 = error(0.04);
  const double ratio = std::log2(e1 / e2);
  return {ratio >= 3.5 && ratio <= 4.5, fmt::format("log2 ratio {:.3f} (errors {:.3e}, {:.3e})", ratio, e1, e2)};
}

Outcome conservation() {
  const auto p = PhysicsParams::half_filled(16, 0.8);
  const LatticeState s0 = cdw_ground_state(p.with_coupling(0.5));
  const double e0 = total_energy(s0, p).total;
  const RealVector ev0 = density_spectrum(s0.rho);
  const double tr0 = s0.rho.trace().real();
  LatticeState s = s0;
  double herm = 0.0, trace = 0.0, energy = 0.0, spectrum = 0.0;
  for (int k = 1; k <= 10000; ++k) {
    LatticeState raw = rk4_step_unsymmetrized(s, p, 0.01);
    herm = std::max(herm, hermiticity_error(raw.rho));
    hermitize(raw.rho);
    s = std::move(raw);
    trace = std::max(trace, std::abs(s.rho.trace().real() - tr0));
    energy = std::max(energy, std::abs(total_energy(s, p).total - e0) / std::abs(e0));
    if (k % 100 == 0) spectrum = std::max(spectrum, (density_spectrum(s.rho) - ev0).cwiseAbs().maxCoeff());
  }
  const bool ok = trace < 1e-8 && herm < 1e-9 && energy < 1e-6 && spectrum < 1e-6;
  return {ok, fmt::format("trace {:.2e}, hermiticity {:.2e}, energy {:.2e}, spectrum {:.2e}", trace, herm, energy,
                          spectrum)};
}

Outcome free_gas() {
  const auto p = PhysicsParams::half_filled(16, 0.0);
  const LatticeState s0 = free_fermi_ground_state(p);
  LatticeState s = s0;
  propagate(s, p, 0.01, 1000);
  const double d = max_abs_diff(s.rho, s0.rho);
  return {d < 1e-10, fmt::format("max |rho(t) - rho(0)| = {:.2e}", d)};
}

Outcome autodiff(Context& ctx) {
  const auto& ds = ctx.shallow();
  model::ModelConfig cfg;
  cfg.L = 16;
  cfg.seed = 5;
  model::Model<double> m(cfg, data::compute_scaling_coefficients(ds, ds.train_indices()));
  m.set_mode(ad::Mode::eval);
  // Move off the zero-initialised heads so every path carries gradient.
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n01;
  auto params = m.named_parameters();
  std::size_t total = 0;
  for (auto& [name, t] : params) {
    for (auto& v : t.values()) v += 0.05 * n01(rng);
    total += t.numel();
  }
  const std::vector<train::Segment> segments = {train::segment_of(ds, {0, 10}, 2),
                                                train::segment_of(ds, {1, 300}, 2)};
  auto loss = [&] { return train::rollout_loss(m, ds.params(), segments, 2).total; };

  loss().backward();
  // Sample 1500 entries; every tensor contributes at least one.
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t k = 0; k < params.size(); ++k) picks.emplace_back(k, 0);
  std::uniform_int_distribution<std::size_t> pick_tensor(0, params.size() - 1);
  while (picks.size() < 1500) {
    const std::size_t k = pick_tensor(rng);
    picks.emplace_back(k, std::uniform_int_distribution<std::size_t>(0, params[k].second.numel() - 1)(rng));
  }
  std::vector<double> analytic;
  for (auto [k, i] : picks) analytic.push_back(params[k].second.grad()[i]);

  // Fourth-order central stencil; keeps truncation and roundoff both far
  // below the tolerance.
  ad::NoGradGuard ng;
  const double h = 1e-4;
  double worst = 0.0;
  for (std::size_t j = 0; j < picks.size(); ++j) {
    auto v = params[picks[j].first].second.values();
    const std::size_t i = picks[j].second;
    const double x0 = v[i];
    auto at = [&](double x) {
      v[i] = x;
      return loss().item();
    };
    const double fd = (at(x0 - 2 * h) - 8 * at(x0 - h) + 8 * at(x0 + h) - at(x0 + 2 * h)) / (12 * h);
    v[i] = x0;
    const double denom = std::max({std::abs(fd), std::abs(analytic[j]), 1e-3});
    worst = std::max(worst, std::abs(fd - analytic[j]) / denom);
  }
  return {worst < 1e-6 && picks.size() >= 1000,
          fmt::format("{} of {} parameters sampled, max relative error {:.2e}", picks.size(), total, worst)};
}

Outcome equivariance(Context& ctx) {
  const auto& ds = ctx.shallow();
  const auto sc = data::compute_scaling_coefficients(ds, ds.train_indices());
  const auto& s = ds.trajectories[0].snapshots[37];
  double worst = 0.0;
  for (auto v : {model::Variant::standard, model::Variant::parc}) {
    model::ModelConfig cfg;
    cfg.L = 16;
    cfg.variant = v;
    cfg.seed = 3;
    model::Model<float> m(cfg, sc);
    m.set_mode(ad::Mode::eval);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01;
    for (auto& [name, t] : m.named_parameters())
      for (auto& x : t.values()) x += static_cast<float>(0.05 * n01(rng));
    for (int shift = 1; shift < 16; ++shift) {
      const auto a = shift_state(model::model_step(m, s), shift);
      const auto b = model::model_step(m, shift_state(s, shift));
      worst = std::max({worst, max_abs_diff(a.rho, b.rho), max_abs_diff(a.Q, b.Q), max_abs_diff(a.P, b.P)});
    }
  }
  return {worst < 1e-4, fmt::format("max |shift(f(u)) - f(shift(u))| = {:.2e} over 15 shifts, both variants", worst)};
}

// Supplementary checks are reported but do not count toward the criteria.
void report_check(const std::string& name, bool ok, const std::string& detail) {
  fmt::print("check: {} {} ({})\n", ok ? "PASS" : "FAIL", name, detail);
}

Outcome shallow_quench(Context& ctx) {
  const auto& ds = ctx.shallow();
  const auto sc = data::compute_scaling_coefficients(ds, ds.train_indices());
  model::ModelConfig mc;
  mc.L = 16;
  mc.prediction_dt = ds.prediction_dt();
  model::Model<float> m(mc, sc);

  const fs::path ckpt_dir = ctx.work() / "shallow_model";
  double train_seconds = 0.0;
  if (ctx.reuse() && fs::exists(ckpt_dir / "best.ckpt")) {
    m = model::read_checkpoint<float>(ckpt_dir / "best.ckpt");
    train_seconds = load_seconds(ckpt_dir);
    fmt::print("  reused shallow_model\n");
  } else {
    train::TrainingConfig tc;
    tc.lr_max = 3e-3;
    tc.warmup_steps = 100;
    tc.stages = train::TrainingConfig::default_curriculum(1, 2000);
    tc.stages.resize(3);
    fs::remove_all(ckpt_dir);
    train_seconds = train::train(m, ds, tc, {std::nullopt, ckpt_dir}).seconds;
    save_seconds(ckpt_dir, train_seconds);
  }
  m.set_mode(ad::Mode::eval);

  double worst_err = 0.0, worst_osc = 0.0, worst_update = 0.0, mean_update = 0.0;
  for (std::size_t t : ds.test_indices()) {
    const auto& truth = ds.trajectories[t].snapshots;
    const auto pred = model::rollout(m, truth[0], 100);
    std::vector<double> a, b;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k <= 100; ++k) {
      a.push_back(analysis::order_param_rho(pred[k].rho));
      b.push_back(analysis::order_param_rho(truth[k].rho));
      num += (a.back() - b.back()) * (a.back() - b.back());
      den += b.back() * b.back();
    }
    double mean = 0.0;
    for (double y : b) mean += y;
    mean /= static_cast<double>(b.size());
    worst_err = std::max(worst_err, std::sqrt(num / den));
    worst_osc = std::max(worst_osc, std::abs(oscillations(a, mean) - oscillations(b, mean)));
    const ComplexMatrix du_pred = pred[1].rho - truth[0].rho, du_true = truth[1].rho - truth[0].rho;
    const double update_err = (du_pred - du_true).norm() / du_true.norm();
    worst_update = std::max(worst_update, update_err);
    mean_update += update_err / static_cast<double>(ds.test_indices().size());
  }
  report_check("shallow one-step rho update", worst_update < 0.1,
               fmt::format("relative L2 worst {:.3f}, mean {:.3f} over held-out offsets", worst_update, mean_update));
  const bool budget = train_seconds <= 1800.0;
  return {worst_err < 0.1 && worst_osc <= 1.0 && budget && m.parameter_count() < 7000,
          fmt::format("{} params, trained {:.0f} s; worst over {} held-out offsets: Delta_rho rel L2 {:.4f}, "
                      "oscillation count off by {}",
                      m.parameter_count(), train_seconds, ds.test_indices().size(), worst_err, worst_osc)};
}

// Deep PARC model shared by criteria 7 and 8.
struct DeepModel {
  std::optional<model::Model<float>> model;
  double train_seconds = 0.0;
};

DeepModel& deep_model(Context& ctx) {
  static DeepModel dm;
  if (dm.model) return dm;
  const auto& ds = ctx.deep_train();
  const auto sc = data::compute_scaling_coefficients(ds, ds.train_indices());
  model::ModelConfig mc;
  mc.L = 16;
  mc.prediction_dt = ds.prediction_dt();
  mc.variant = model::Variant::parc;
  dm.model.emplace(mc, sc);
  const fs::path ckpt_dir = ctx.work() / "deep_parc";
  if (ctx.reuse() && fs::exists(ckpt_dir / "best.ckpt")) {
    *dm.model = model::read_checkpoint<float>(ckpt_dir / "best.ckpt");
    dm.train_seconds = load_seconds(ckpt_dir);
    fmt::print("  reused deep_parc\n");
  } else {
    train::TrainingConfig tc;
    tc.lr_max = 3e-3;
    tc.warmup_steps = 100;
    tc.stages = train::TrainingConfig::default_curriculum();
    // Optimizer-step budget per stage; weighted toward the long-horizon stages.
    const std::size_t budget[] = {12000, 8000, 8000, 8000};
    for (std::size_t k = 0; k < tc.stages.size(); ++k) {
      auto& st = tc.stages[k];
      const std::size_t per_epoch =
          train::batches_per_epoch(ds, ds.train_indices(), {st.rollout_steps, 0, 1, 0}, tc.batch_size);
      st.n_epochs = static_cast<int>((budget[k] + per_epoch - 1) / per_epoch);
      st.max_batches_per_epoch = budget[k] / static_cast<std::size_t>(st.n_epochs);
    }
    fs::remove_all(ckpt_dir);
    dm.train_seconds = train::train(*dm.model, ds, tc, {std::nullopt, ckpt_dir}).seconds;
    save_seconds(ckpt_dir, dm.train_seconds);
  }
  dm.model->set_mode(ad::Mode::eval);
  return dm;
}

Outcome deep_fidelity(Context& ctx) {
  const auto& ds = ctx.deep_train();
  auto& dm = deep_model(ctx);
  auto& m = *dm.model;
  double worst = 0.0;
  std::string diverged;
  for (std::size_t t : ds.test_indices()) {
    const auto& truth = ds.trajectories[t].snapshots;
    const auto short_run = model::rollout(m, truth[0], 40);
    for (std::size_t j = 1; j <= 10; ++j)
      worst = std::max(worst, model::normalized_state_error(short_run[j], truth[j], m.scaling()));
    try {
      model::rollout(m, truth[0], 1000);
    } catch (const DivergenceError& e) {
      diverged += fmt::format(" trajectory {} at step {};", t, e.step());
    }
  }
  const bool budget = dm.train_seconds <= 4 * 3600.0;
  // Pooled check of the trained differentiator on the exact g = 1 fixed point:
  // uniform half filling with Q = g n / K.
  {
    const auto p = ds.params();
    LatticeState fixed = free_fermi_ground_state(p);
    fixed.Q = RealVector::Constant(16, p.g * 0.5 / p.spring_k);
    const auto d = model::parc_differentiate(m, fixed);
    const auto& c = m.scaling();
    const double norm = std::max({d.drho.cwiseAbs().maxCoeff() / c.r_d, d.dQ.cwiseAbs().maxCoeff() / c.q_d,
                                  d.dP.cwiseAbs().maxCoeff() / c.p_d});
    const double floor = ds.protocol.q_noise_sigma / c.q;
    report_check("differentiator on stationary free-gas state", norm < 10 * floor,
                 fmt::format("normalized derivative {:.2e}, 10x noise floor {:.2e}", norm, 10 * floor));
  }
  return {worst < 0.3 && diverged.empty() && budget && ds.trajectories.size() >= 32,
          fmt::format("{} trajectories, trained {:.0f} s; worst 10-step error {:.4f} over {} test states; "
                      "1000-step rollouts {}",
                      ds.trajectories.size(), dm.train_seconds, worst, ds.test_indices().size(),
                      diverged.empty() ? "divergence-free" : "diverged:" + diverged)};
}

Outcome climate(Context& ctx) {
  const auto& gt_ds = ctx.deep_climate();
  auto& m = *deep_model(ctx).model;
  std::vector<std::vector<LatticeState>> gt;
  for (const auto& t : gt_ds.trajectories) gt.push_back(t.snapshots);
  const auto rep = analysis::climate_report(gt, m, 300, 50);
  const auto oracle = analysis::climate_report(
      gt, model::exact_stepper(gt_ds.params(), gt_ds.protocol.dt_integration, gt_ds.protocol.prediction_stride),
      300, 50, gt_ds.prediction_dt());
  const bool unit = !rep.delta_rho.a_pred.empty() && rep.delta_rho.a_pred[0] == 1.0 && rep.delta_q.a_pred[0] == 1.0;
  const double oracle_dev = std::max(oracle.delta_rho.max_abs_deviation, oracle.delta_q.max_abs_deviation);
  const bool ok = unit && rep.delta_rho.max_abs_deviation < 0.2 && rep.delta_q.max_abs_deviation < 0.2 &&
                  oracle_dev <= 1e-12 && gt.size() == 32;
  return {ok, fmt::format("{} trajectories x 300 steps, tau <= 50: A_pred(0) {}; deviation Delta_rho {:.4f}, "
                          "Delta_Q {:.4f}; {} diverged; oracle deviation {:.1e}",
                          gt.size(), unit ? "= 1" : "!= 1", rep.delta_rho.max_abs_deviation,
                          rep.delta_q.max_abs_deviation, rep.diverged.size(), oracle_dev)};
}

Outcome dataset_contracts(Context& ctx) {
  std::vector<std::string> fails;
  const auto& sh = ctx.shallow();
  bool shallow_ok = sh.trajectories.size() == 64;
  for (const auto& t : sh.trajectories)
    shallow_ok = shallow_ok && t.snapshots.size() == 1201 &&
                 std::abs(t.snapshots.back().time - t.snapshots.front().time - 768.0) < 1e-9;
  if (!shallow_ok) fails.push_back("shallow shape");

  try {
    data::QuenchProtocol::deep_full_scale(16).validate();
  } catch (const std::exception& e) {
    fails.push_back(std::string("full-scale deep config rejected: ") + e.what());
  }
  auto dp = data::QuenchProtocol::deep_default(16, 8);
  dp.seed = 2;
  const auto deep = data::generate_dataset(dp, 1);
  bool deep_ok = deep.trajectories.size() == 8;
  for (const auto& t : deep.trajectories) deep_ok = deep_ok && t.snapshots.size() == 1001 && t.midpoints.size() == 1000;
  if (!deep_ok) fails.push_back("deep shape");

  data::Dataset synth;
  synth.protocol = data::QuenchProtocol::shallow_default(8);
  data::TrajectoryRecord rec;
  for (double f : {1.0, 0.5, -0.25}) {
    LatticeState s;
    s.rho = ComplexMatrix::Identity(8, 8) * cplx(0.5 * f, 0);
    s.rho(0, 0) = 0.88 * f;
    s.Q = RealVector::Constant(8, 0.3 * f);
    s.Q(3) = -1.62 * f;
    s.P = RealVector::Constant(8, 0.1 * f);
    s.P(6) = 0.75 * f;
    rec.snapshots.push_back(s);
  }
  synth.trajectories.push_back(rec);
  const auto c = data::compute_scaling_coefficients(synth);
  if (!(c.r == 0.88 && c.q == 1.62 && c.p == 0.75)) fails.push_back("scaling example");

  const fs::path dir = ctx.work() / "roundtrip";
  fs::remove_all(dir);
  data::write_dataset(deep, dir);
  const auto back = data::read_dataset(dir);
  bool bitwise = back.trajectories.size() == deep.trajectories.size();
  for (std::size_t k = 0; bitwise && k < deep.trajectories.size(); ++k)
    bitwise = data::encode_trajectory(back.trajectories[k], 16) == data::encode_trajectory(deep.trajectories[k], 16);
  const fs::path dir2 = ctx.work() / "roundtrip2";
  fs::remove_all(dir2);
  data::write_dataset(back, dir2);
  bitwise = bitwise && same_dataset_dirs(dir, dir2);
  if (!bitwise) fails.push_back("round trip");

  std::string detail = fmt::format("shallow 64 x 1201 over 768; deep 8 x (1001 + 1000 midpoints); scaling {}/{}/{}",
                                   c.r, c.q, c.p);
  for (const auto& f : fails) detail += "; failed: " + f;
  return {fails.empty(), detail};
}

Outcome determinism(Context& ctx) {
  auto p = data::QuenchProtocol::shallow_default(16);
  p.n_trajectories = 6;
  p.n_prediction_steps = 60;
  p.seed = 11;
  const fs::path a = ctx.work() / "det_a", b = ctx.work() / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const auto ds = data::generate_dataset(p, 1);
  data::write_dataset(ds, a);
  data::write_dataset(data::generate_dataset(p, 3), b);
  const bool data_same = same_dataset_dirs(a, b);

  auto train_once = [&](const fs::path& out) {
    model::ModelConfig mc;
    mc.L = 16;
    mc.seed = 8;
    mc.prediction_dt = ds.prediction_dt();
    model::Model<float> m(mc, data::compute_scaling_coefficients(ds, ds.train_indices()));
    train::TrainingConfig tc;
    tc.seed = 8;
    tc.batch_size = 4;
    tc.stages = train::TrainingConfig::default_curriculum(1, 15);
    tc.stages.resize(2);
    fs::remove_all(out);
    train::train(m, ds, tc, {out / "metrics.csv", out});
  };
  const fs::path ma = ctx.work() / "det_model_a", mb = ctx.work() / "det_model_b";
  train_once(ma);
  train_once(mb);
  const bool model_same = same_files(ma / "best.ckpt", mb / "best.ckpt") &&
                          same_files(ma / "stage_0.ckpt", mb / "stage_0.ckpt") &&
                          same_files(ma / "stage_1.ckpt", mb / "stage_1.ckpt") &&
                          same_files(ma / "metrics.csv", mb / "metrics.csv");
  return {data_same && model_same, fmt::format("datasets (jobs 1 vs 3) {}; checkpoints and metrics {}",
                                               data_same ? "identical" : "differ",
                                               model_same ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx(argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work"));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"integrator order", integrator_order},
      {"conservation", conservation},
      {"free-gas stationarity", free_gas},
      {"autodiff gradient check", [&] { return autodiff(ctx); }},
      {"translation equivariance", [&] { return equivariance(ctx); }},
      {"shallow quench", [&] { return shallow_quench(ctx); }},
      {"deep-quench fidelity", [&] { return deep_fidelity(ctx); }},
      {"climate", [&] { return climate(ctx); }},
      {"dataset contracts", [&] { return dataset_contracts(ctx); }},
      {"determinism", [&] { return determinism(ctx); }},
  };
  std::vector<bool> selected(criteria.size(), argc <= 2);
  if (argc > 2) {
    std::stringstream list(argv[2]);
    for (std::string item; std::getline(list, item, ',');) {
      const auto k = std::stoul(item);
      if (k < 1 || k > criteria.size()) {
        fmt::print(stderr, "unknown criterion {}\n", item);
        return 2;
      }
      selected[k - 1] = true;
    }
  }
  int failed = 0, run = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!selected[k]) continue;
    ++run;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    fmt::print("{} {:2d} {}: {} [{:.1f} s]\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail,
               seconds_since(t0));
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", run - failed, run);
  return failed == 0 ? 0 : 1;
}
