// holstein: simulate, gen-data, train, rollout, climate.
//
// Exit codes: 0 ok, 1 other failure (I/O, corrupt files), 2 usage,
// 3 numeric integrity (non-finite state, conservation breach, divergence).
// Option precedence: flags > --config JSON > defaults. --jobs falls back to
// HOLSTEIN_JOBS. Every run writes manifest.json into its output directory.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "holstein/analysis.hpp"
#include "holstein/checkpoint.hpp"
#include "holstein/dataset.hpp"
#include "holstein/trainer.hpp"

namespace fs = std::filesystem;
using namespace holstein;
using json = nlohmann::json;

namespace {

constexpr const char* kToolVersion = "holstein 1.0.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Typed options whose resolved values live in one JSON object.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file with option values (a manifest.json also works)");
  }

  template <typename T>
  CLI::Option* add(const std::string& name, T fallback, const std::string& help) {
    const std::string key = key_of(name);
    defaults_[key] = fallback;
    auto holder = std::make_shared<T>(fallback);
    CLI::Option* opt = app_->add_option("--" + name, *holder, help);
    setters_.push_back([opt, holder, key](json& j) {
      if (opt->count()) j[key] = *holder;
    });
    return opt;
  }

  CLI::Option* add_flag(const std::string& name, const std::string& help) {
    const std::string key = key_of(name);
    defaults_[key] = false;
    auto holder = std::make_shared<bool>(false);
    CLI::Option* opt = app_->add_flag("--" + name, *holder, help);
    setters_.push_back([opt, holder, key](json& j) {
      if (opt->count()) j[key] = *holder;
    });
    return opt;
  }

  /// Overrides defaults that depend on an earlier choice (e.g. quench kind).
  void set_default(const std::string& name, json v) { defaults_[key_of(name)] = std::move(v); }

  json config_file() const {
    if (config_path_.empty()) return json::object();
    json j;
    try {
      j = json::parse(io::read_text(config_path_));
    } catch (const json::exception& e) {
      throw UsageError("--config " + config_path_ + ": " + e.what());
    }
    if (j.contains("command") && j.contains("config")) j = j["config"];
    if (!j.is_object()) throw UsageError("--config must hold a JSON object");
    for (const auto& [k, v] : j.items())
      if (!defaults_.contains(k)) throw UsageError("--config: unknown option '" + k + "'");
    return j;
  }

  json resolve() const {
    json out = defaults_;
    out.merge_patch(config_file());
    for (const auto& s : setters_) s(out);
    return out;
  }

 private:
  static std::string key_of(std::string name) {
    for (char& c : name)
      if (c == '-') c = '_';
    return name;
  }

  CLI::App* app_;
  std::string config_path_;
  json defaults_ = json::object();
  std::vector<std::function<void(json&)>> setters_;
};

int jobs_from(const json& cfg) {
  if (!cfg["jobs"].is_null()) return std::max(1, cfg["jobs"].get<int>());
  if (const char* env = std::getenv("HOLSTEIN_JOBS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw UsageError(std::string("HOLSTEIN_JOBS is not an integer: ") + env);
    }
  }
  return 1;
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError("output path " + dir.string() + " is a file");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw UsageError("output directory " + dir.string() + " is not empty (use --force to replace it)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void write_manifest(const fs::path& dir, const std::string& command, const json& cfg, const json& inputs,
                    const json& outputs, double seconds) {
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  const json m{{"command", command},       {"config", cfg},          {"seed", cfg.value("seed", json(nullptr))},
               {"inputs", inputs},         {"outputs", outputs},     {"tool_version", kToolVersion},
               {"finished_at", stamp},     {"wall_clock_seconds", seconds}};
  io::write_text(dir / "manifest.json", m.dump(2) + "\n");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

data::Dataset load_dataset(const std::string& dir) {
  if (dir.empty()) throw UsageError("--dataset is required");
  if (!fs::is_directory(dir)) throw UsageError("dataset directory " + dir + " does not exist");
  return data::read_dataset(dir);
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateCmd {
  explicit SimulateCmd(CLI::App& root) : app(root.add_subcommand("simulate", "integrate one quench trajectory")), opts(app) {
    opts.add<int>("L", 16, "lattice sites (even)");
    opts.add<double>("g-initial", 0.5, "coupling of the initial state (0: free electrons plus Q noise)");
    opts.add<double>("g-final", 0.8, "coupling after the quench");
    opts.add<double>("dt", 0.01, "integration step");
    opts.add<long>("steps", 76800, "integration steps to record (multiple of --record-stride)");
    opts.add<int>("record-stride", 64, "integration steps between snapshots");
    opts.add<double>("skip", 0.0, "time integrated before the first snapshot");
    opts.add<double>("q-noise", 0.0, "std of initial Q noise for g-initial = 0");
    opts.add_flag("midpoints", "also store mid-interval states");
    opts.add<std::uint64_t>("seed", 0, "noise seed");
    opts.add<std::string>("out", "", "output dataset directory");
    opts.add_flag("force", "replace a non-empty output directory");
  }

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    const json cfg = opts.resolve();
    const auto out = cfg["out"].get<std::string>();
    if (out.empty()) throw UsageError("simulate: --out is required");
    const long steps = cfg["steps"].get<long>();
    const int stride = cfg["record_stride"].get<int>();
    if (steps < 0 || stride < 1 || steps % stride != 0)
      throw UsageError("simulate: --steps must be a non-negative multiple of --record-stride");
    data::QuenchProtocol p;
    p.g_initial = cfg["g_initial"].get<double>();
    p.kind = p.g_initial == 0.0 ? data::QuenchKind::deep : data::QuenchKind::shallow;
    p.L = cfg["L"].get<int>();
    p.g_final = cfg["g_final"].get<double>();
    p.dt_integration = cfg["dt"].get<double>();
    p.prediction_stride = stride;
    p.n_prediction_steps = static_cast<int>(steps / stride);
    p.n_trajectories = 1;
    p.transient_skip = cfg["skip"].get<double>();
    p.q_noise_sigma = cfg["q_noise"].get<double>();
    p.record_midpoints = cfg["midpoints"].get<bool>();
    p.seed = cfg["seed"].get<std::uint64_t>();
    p.validate();
    prepare_output_dir(out, cfg["force"].get<bool>());

    const auto ds = data::generate_dataset(p);
    data::write_dataset(ds, out);
    const auto& snaps = ds.trajectories[0].snapshots;
    const auto params = ds.params();
    const double e0 = total_energy(snaps.front(), params).total, e1 = total_energy(snaps.back(), params).total;
    const double trace_drift = std::abs((snaps.back().rho.trace() - snaps.front().rho.trace()).real());
    fmt::print("snapshots {}  span {:.6g}  energy drift {:.3e}  trace drift {:.3e}  hermiticity {:.3e}\n",
               snaps.size(), (snaps.size() - 1) * ds.prediction_dt(), std::abs(e1 - e0) / std::max(1.0, std::abs(e0)),
               trace_drift, hermiticity_error(snaps.back().rho));
    write_manifest(out, "simulate", cfg, json::object(), {{"dataset", out}}, seconds_since(t0));
    return 0;
  }

  CLI::App* app;
  Options opts;
};

// ---------------------------------------------------------------------------
// gen-data

struct GenDataCmd {
  explicit GenDataCmd(CLI::App& root) : app(root.add_subcommand("gen-data", "generate a quench dataset")), opts(app) {
    opts.add<std::string>("kind", "shallow", "shallow (g 0.5 -> 0.8) or deep (g 0 -> 1)");
    opts.add<int>("L", 16, "lattice sites");
    opts.add<int>("trajectories", 64, "number of trajectories");
    opts.add<int>("steps", 1200, "prediction steps per trajectory");
    opts.add<int>("stride", 64, "integration steps per prediction step");
    opts.add<double>("dt", 0.01, "integration step");
    opts.add<double>("g-initial", 0.5, "initial coupling");
    opts.add<double>("g-final", 0.8, "final coupling");
    opts.add<double>("skip", 0.0, "transient time skipped before recording");
    opts.add<double>("q-noise", 0.0, "initial Q noise std (deep)");
    opts.add<bool>("midpoints", false, "store mid-interval states");
    opts.add<std::uint64_t>("seed", 0, "dataset seed");
    opts.add<int>("jobs", 0, "worker threads (fallback HOLSTEIN_JOBS)");
    opts.add<std::string>("out", "", "output dataset directory");
    opts.add_flag("force", "replace a non-empty output directory");
  }

  static json kind_defaults(const data::QuenchProtocol& p) {
    return {{"L", p.L},
            {"trajectories", p.n_trajectories},
            {"steps", p.n_prediction_steps},
            {"stride", p.prediction_stride},
            {"dt", p.dt_integration},
            {"g_initial", p.g_initial},
            {"g_final", p.g_final},
            {"skip", p.transient_skip},
            {"q_noise", p.q_noise_sigma},
            {"midpoints", p.record_midpoints}};
  }

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string kind = opts.resolve()["kind"].get<std::string>();
    const auto base = data::quench_kind_from(kind) == data::QuenchKind::shallow ? data::QuenchProtocol::shallow_default()
                                                                                : data::QuenchProtocol::deep_default();
    const json kind_cfg = kind_defaults(base);
    for (const auto& [k, v] : kind_cfg.items()) opts.set_default(k, v);
    opts.set_default("jobs", nullptr);
    json cfg = opts.resolve();
    const auto out = cfg["out"].get<std::string>();
    if (out.empty()) throw UsageError("gen-data: --out is required");

    data::QuenchProtocol p = base;
    p.L = cfg["L"].get<int>();
    p.n_trajectories = cfg["trajectories"].get<int>();
    p.n_prediction_steps = cfg["steps"].get<int>();
    p.prediction_stride = cfg["stride"].get<int>();
    p.dt_integration = cfg["dt"].get<double>();
    p.g_initial = cfg["g_initial"].get<double>();
    p.g_final = cfg["g_final"].get<double>();
    p.transient_skip = cfg["skip"].get<double>();
    p.q_noise_sigma = cfg["q_noise"].get<double>();
    p.record_midpoints = cfg["midpoints"].get<bool>();
    p.seed = cfg["seed"].get<std::uint64_t>();
    p.validate();
    const int jobs = jobs_from(cfg);
    cfg["jobs"] = jobs;
    prepare_output_dir(out, cfg["force"].get<bool>());

    const auto ds = data::generate_dataset(p, jobs);
    data::write_dataset(ds, out);
    fmt::print("{} trajectories x {} snapshots ({} test) -> {}\n", ds.trajectories.size(),
               ds.trajectories.front().snapshots.size(), ds.test_indices().size(), out);
    write_manifest(out, "gen-data", cfg, json::object(), {{"dataset", out}}, seconds_since(t0));
    return 0;
  }

  CLI::App* app;
  Options opts;
};

// ---------------------------------------------------------------------------
// train

std::vector<train::CurriculumStage> parse_stages(const std::string& text, int epochs, std::size_t max_batches) {
  if (text == "default") return train::TrainingConfig::default_curriculum(epochs, max_batches);
  // N:sigma[,N:sigma...]
  std::vector<train::CurriculumStage> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    try {
      const int n = std::stoi(item.substr(0, colon));
      const double sigma = colon == std::string::npos ? 0.0 : std::stod(item.substr(colon + 1));
      out.push_back({n, sigma, epochs, max_batches});
    } catch (const std::exception&) {
      throw UsageError("--stages: cannot parse '" + item + "' (expected N:sigma)");
    }
  }
  if (out.empty()) throw UsageError("--stages is empty");
  return out;
}

struct TrainCmd {
  explicit TrainCmd(CLI::App& root) : app(root.add_subcommand("train", "train a recurrent model")), opts(app) {
    const model::ModelConfig mc;
    const train::TrainingConfig tc;
    opts.add<std::string>("dataset", "", "dataset directory");
    opts.add<std::string>("out", "", "output directory (checkpoints, metrics.csv)");
    opts.add<std::string>("variant", "standard", "standard or parc");
    opts.add<int>("hidden", mc.hidden_channels, "hidden channels");
    opts.add<int>("blocks", mc.n_blocks, "residual blocks");
    opts.add<int>("kernel", mc.kernel, "convolution kernel size (odd)");
    opts.add<double>("dropout", mc.dropout_p, "channel dropout probability");
    opts.add<std::string>("stages", "default", "'default' or N:sigma list, e.g. 1:0,2:0.002");
    opts.add<int>("epochs", 1, "epochs per stage");
    opts.add<std::size_t>("max-batches", 0, "cap on batches per epoch (0: all windows)");
    opts.add<int>("batch-size", tc.batch_size, "segments per batch");
    opts.add<double>("lr-max", tc.lr_max, "peak learning rate");
    opts.add<double>("lr-min", tc.lr_min, "floor learning rate");
    opts.add<std::size_t>("warmup", tc.warmup_steps, "warmup steps per stage");
    opts.add<double>("weight-decay", tc.weight_decay, "AdamW weight decay");
    opts.add<double>("clip", tc.clip_max_norm, "gradient clip norm");
    opts.add<std::string>("precision", tc.precision, "single or double");
    opts.add<std::uint64_t>("seed", 0, "initialization, batching, noise and dropout seed");
    opts.add_flag("force", "replace a non-empty output directory");
  }

  template <typename T>
  void fit(const data::Dataset& ds, const model::ModelConfig& mc, const train::TrainingConfig& tc, const fs::path& out) {
    model::Model<T> m(mc, data::compute_scaling_coefficients(ds, ds.train_indices()));
    const auto r = train::train(m, ds, tc, {out / "metrics.csv", out});
    fmt::print("{} optimizer steps in {:.1f} s; best stage {}", r.optimizer_steps, r.seconds, r.best_stage);
    for (double v : r.stage_validation) fmt::print("  val {:.4g}", v);
    fmt::print("\n");
  }

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    const json cfg = opts.resolve();
    const auto out = cfg["out"].get<std::string>();
    if (out.empty()) throw UsageError("train: --out is required");
    const auto dataset = cfg["dataset"].get<std::string>();
    const auto ds = load_dataset(dataset);

    model::ModelConfig mc;
    mc.L = ds.protocol.L;
    mc.variant = model::variant_from(cfg["variant"].get<std::string>());
    mc.hidden_channels = cfg["hidden"].get<int>();
    mc.n_blocks = cfg["blocks"].get<int>();
    mc.kernel = cfg["kernel"].get<int>();
    mc.dropout_p = cfg["dropout"].get<double>();
    mc.prediction_dt = ds.prediction_dt();
    mc.seed = cfg["seed"].get<std::uint64_t>();
    mc.validate();

    train::TrainingConfig tc;
    tc.stages = parse_stages(cfg["stages"].get<std::string>(), cfg["epochs"].get<int>(),
                             cfg["max_batches"].get<std::size_t>());
    tc.batch_size = cfg["batch_size"].get<int>();
    tc.lr_max = cfg["lr_max"].get<double>();
    tc.lr_min = cfg["lr_min"].get<double>();
    tc.warmup_steps = cfg["warmup"].get<std::size_t>();
    tc.weight_decay = cfg["weight_decay"].get<double>();
    tc.clip_max_norm = cfg["clip"].get<double>();
    tc.precision = cfg["precision"].get<std::string>();
    tc.seed = cfg["seed"].get<std::uint64_t>();
    tc.validate();
    if (tc.precision != "single" && tc.precision != "double") throw UsageError("--precision must be single or double");
    prepare_output_dir(out, cfg["force"].get<bool>());
    io::write_text(fs::path(out) / "config.json",
                   json{{"model", model::to_json(mc)}, {"training", train::to_json(tc)}}.dump(2) + "\n");

    if (tc.precision == "double")
      fit<double>(ds, mc, tc, out);
    else
      fit<float>(ds, mc, tc, out);
    write_manifest(out, "train", cfg, {{"dataset", dataset}},
                   {{"checkpoint", (fs::path(out) / "best.ckpt").string()},
                    {"metrics", (fs::path(out) / "metrics.csv").string()}},
                   seconds_since(t0));
    return 0;
  }

  CLI::App* app;
  Options opts;
};

// ---------------------------------------------------------------------------
// rollout / climate shared model loading

struct LoadedStepper {
  model::Stepper step;
  std::shared_ptr<model::Model<float>> net;
  double stride = 0.0;
};

LoadedStepper load_stepper(const std::string& which, const data::Dataset& ds) {
  LoadedStepper out;
  if (which.empty()) throw UsageError("--model is required (checkpoint path or 'exact')");
  if (which == "exact") {
    out.step = model::exact_stepper(ds.params(), ds.protocol.dt_integration,
                                    static_cast<std::size_t>(ds.protocol.prediction_stride));
    out.stride = ds.prediction_dt();
    return out;
  }
  if (!fs::is_regular_file(which)) throw UsageError("checkpoint " + which + " does not exist");
  out.net = std::make_shared<model::Model<float>>(model::read_checkpoint<float>(which));
  if (out.net->L() != ds.protocol.L)
    throw UsageError(fmt::format("checkpoint L={} but dataset L={}", out.net->L(), ds.protocol.L));
  out.net->set_mode(ad::Mode::eval);
  auto net = out.net;
  out.step = [net](const LatticeState& s) { return model::model_step(*net, s); };
  out.stride = ds.prediction_dt();
  return out;
}

struct RolloutCmd {
  explicit RolloutCmd(CLI::App& root) : app(root.add_subcommand("rollout", "roll a model out from a stored state")), opts(app) {
    opts.add<std::string>("model", "", "checkpoint path or 'exact'");
    opts.add<std::string>("dataset", "", "dataset directory holding the initial state");
    opts.add<long>("trajectory", -1, "trajectory index (-1: first test trajectory, else 0)");
    opts.add<std::size_t>("start", 0, "snapshot index of the initial state");
    opts.add<std::size_t>("steps", 1000, "prediction steps");
    opts.add<std::string>("format", "csv", "trace format: csv or json");
    opts.add<std::string>("out", "", "output directory");
    opts.add_flag("force", "replace a non-empty output directory");
  }

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    json cfg = opts.resolve();
    const auto out = cfg["out"].get<std::string>();
    if (out.empty()) throw UsageError("rollout: --out is required");
    const auto format = analysis::export_format_from(cfg["format"].get<std::string>());
    const auto ds = load_dataset(cfg["dataset"].get<std::string>());
    long traj = cfg["trajectory"].get<long>();
    if (traj < 0) {
      const auto test = ds.test_indices();
      traj = test.empty() ? 0 : static_cast<long>(test.front());
      cfg["trajectory"] = traj;
    }
    if (static_cast<std::size_t>(traj) >= ds.trajectories.size()) throw UsageError("--trajectory out of range");
    const auto& snaps = ds.trajectories[traj].snapshots;
    const auto start = cfg["start"].get<std::size_t>();
    if (start >= snaps.size()) throw UsageError("--start out of range");
    const auto stepper = load_stepper(cfg["model"].get<std::string>(), ds);
    prepare_output_dir(out, cfg["force"].get<bool>());

    const auto steps = cfg["steps"].get<std::size_t>();
    std::vector<LatticeState> pred;
    try {
      pred = model::rollout(stepper.step, snaps[start], steps);
    } catch (const DivergenceError& e) {
      write_manifest(out, "rollout", cfg, {{"dataset", cfg["dataset"]}}, {{"diverged_step", e.step()}},
                     seconds_since(t0));
      throw;
    }
    data::Dataset result;
    result.protocol = ds.protocol;
    result.protocol.n_trajectories = 1;
    result.protocol.n_prediction_steps = static_cast<int>(steps);
    result.protocol.record_midpoints = false;
    data::TrajectoryRecord rec;
    rec.snapshots = pred;
    rec.start_time = snaps[start].time;
    rec.offset = ds.trajectories[traj].offset;
    rec.seed = ds.trajectories[traj].seed;
    result.trajectories.push_back(std::move(rec));
    const fs::path pred_dir = fs::path(out) / "prediction";
    data::write_dataset(result, pred_dir);

    std::vector<analysis::OrderParamTrace> traces;
    for (auto o : {analysis::Observable::delta_rho, analysis::Observable::delta_q})
      traces.push_back(analysis::order_param_trace(pred, o, analysis::Source::predicted,
                                                   static_cast<std::size_t>(traj), stepper.stride));
    const fs::path trace_file = fs::path(out) / (format == analysis::ExportFormat::csv ? "traces.csv" : "traces.json");
    analysis::export_traces(traces, trace_file, format);
    fmt::print("{} states -> {}\n", pred.size(), pred_dir.string());
    write_manifest(out, "rollout", cfg, {{"dataset", cfg["dataset"]}},
                   {{"prediction", pred_dir.string()}, {"traces", trace_file.string()}}, seconds_since(t0));
    return 0;
  }

  CLI::App* app;
  Options opts;
};

// ---------------------------------------------------------------------------
// climate

struct ClimateCmd {
  explicit ClimateCmd(CLI::App& root)
      : app(root.add_subcommand("climate", "compare autocorrelations of predicted and true order parameters")),
        opts(app) {
    opts.add<std::string>("model", "", "checkpoint path or 'exact'");
    opts.add<std::string>("dataset", "", "ground-truth dataset directory");
    opts.add<std::string>("split", "test", "trajectories to use: test or all");
    opts.add<std::size_t>("trajectories", 0, "cap on trajectories used (0: all of the split)");
    opts.add<std::size_t>("steps", 300, "rollout steps");
    opts.add<std::size_t>("tau-max", 50, "largest lag");
    opts.add<std::string>("format", "csv", "trace format: csv or json");
    opts.add<int>("jobs", 0, "worker threads (fallback HOLSTEIN_JOBS)");
    opts.add<std::string>("out", "", "output directory");
    opts.add_flag("force", "replace a non-empty output directory");
  }

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    opts.set_default("jobs", nullptr);
    json cfg = opts.resolve();
    const auto out = cfg["out"].get<std::string>();
    if (out.empty()) throw UsageError("climate: --out is required");
    const auto steps = cfg["steps"].get<std::size_t>();
    const auto tau_max = cfg["tau_max"].get<std::size_t>();
    if (tau_max >= steps) throw UsageError("--tau-max must be smaller than --steps");
    const auto format = analysis::export_format_from(cfg["format"].get<std::string>());
    const auto ds = load_dataset(cfg["dataset"].get<std::string>());
    const auto split = cfg["split"].get<std::string>();
    if (split != "test" && split != "all") throw UsageError("--split must be test or all");
    std::vector<std::size_t> idx = ds.test_indices();
    if (split == "all") {
      idx.clear();
      for (std::size_t i = 0; i < ds.trajectories.size(); ++i) idx.push_back(i);
    }
    if (const auto cap = cfg["trajectories"].get<std::size_t>(); cap && idx.size() > cap) idx.resize(cap);
    if (idx.empty()) throw UsageError("no trajectories in the selected split");
    std::vector<std::vector<LatticeState>> gt;
    for (auto i : idx) {
      if (ds.trajectories[i].snapshots.size() < steps + 1)
        throw UsageError(fmt::format("trajectory {} has fewer than --steps + 1 snapshots", i));
      gt.push_back(ds.trajectories[i].snapshots);
    }
    const auto stepper = load_stepper(cfg["model"].get<std::string>(), ds);
    const int jobs = jobs_from(cfg);
    cfg["jobs"] = jobs;
    prepare_output_dir(out, cfg["force"].get<bool>());

    const auto report = analysis::climate_report(gt, stepper.step, steps, tau_max, stepper.stride, jobs);
    const fs::path dir(out);
    io::write_text(dir / "report.json", analysis::to_json(report).dump(2) + "\n");
    io::write_text(dir / "curves.csv", analysis::curves_to_csv(report));
    const fs::path trace_file = dir / (format == analysis::ExportFormat::csv ? "traces.csv" : "traces.json");
    analysis::export_traces(report, trace_file, format);
    fmt::print("{} trajectories ({} diverged)  max|dA| delta_rho {:.4g}  delta_q {:.4g}\n", report.n_ground_truth,
               report.diverged.size(), report.delta_rho.max_abs_deviation, report.delta_q.max_abs_deviation);
    write_manifest(out, "climate", cfg, {{"dataset", cfg["dataset"]}},
                   {{"report", (dir / "report.json").string()}, {"curves", (dir / "curves.csv").string()},
                    {"traces", trace_file.string()}},
                   seconds_since(t0));
    return 0;
  }

  CLI::App* app;
  Options opts;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Holstein quench simulation and recurrent surrogate models"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  SimulateCmd simulate(app);
  GenDataCmd gen(app);
  TrainCmd trainer(app);
  RolloutCmd rollout(app);
  ClimateCmd climate(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (simulate.app->parsed()) return simulate.run();
    if (gen.app->parsed()) return gen.run();
    if (trainer.app->parsed()) return trainer.run();
    if (rollout.app->parsed()) return rollout.run();
    if (climate.app->parsed()) return climate.run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "numeric error: " << e.what() << " (step " << e.step() << ")\n";
    return 3;
  } catch (const IntegrityError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const NonFiniteError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const ConvergenceError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const train::TrainingDivergedError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
