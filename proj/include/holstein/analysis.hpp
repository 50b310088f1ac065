#pragma once

// Order parameters, autocorrelation climate statistics, trace export.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "holstein/binary_io.hpp"
#include "holstein/dataset.hpp"
#include "holstein/models.hpp"

namespace holstein::analysis {

using json = nlohmann::json;

class DegenerateSeriesError : public Error {
 public:
  using Error::Error;
};

/// Staggered electron density, origin x_0 = 0.
inline double order_param_rho(const ComplexMatrix& rho) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < rho.rows(); ++i) s += (i % 2 == 0 ? 1.0 : -1.0) * rho(i, i).real();
  return s / static_cast<double>(rho.rows());
}

/// Staggered lattice distortion, origin x_0 = 0.
inline double order_param_q(const RealVector& Q) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < Q.size(); ++i) s += (i % 2 == 0 ? 1.0 : -1.0) * Q(i);
  return s / static_cast<double>(Q.size());
}

enum class Observable { delta_rho, delta_q };
enum class Source { ground_truth, predicted };

inline std::string to_string(Observable o) { return o == Observable::delta_rho ? "delta_rho" : "delta_q"; }
inline std::string to_string(Source s) { return s == Source::ground_truth ? "ground_truth" : "predicted"; }
inline Observable observable_from(const std::string& s) {
  if (s == "delta_rho") return Observable::delta_rho;
  if (s == "delta_q") return Observable::delta_q;
  throw FormatError("unknown observable '" + s + "'");
}
inline Source source_from(const std::string& s) {
  if (s == "ground_truth") return Source::ground_truth;
  if (s == "predicted") return Source::predicted;
  throw FormatError("unknown trace source '" + s + "'");
}

struct OrderParamTrace {
  Observable observable = Observable::delta_rho;
  Source source = Source::ground_truth;
  std::size_t trajectory_id = 0;
  double stride = 0.0;  // time between samples
  std::vector<double> values;

  void validate() const {
    if (!(stride > 0)) throw InvalidArgument("OrderParamTrace: stride must be positive");
    for (double v : values)
      if (!std::isfinite(v)) throw NonFiniteError("OrderParamTrace: non-finite value");
  }
  friend bool operator==(const OrderParamTrace&, const OrderParamTrace&) = default;
};

inline OrderParamTrace order_param_trace(const std::vector<LatticeState>& states, Observable o, Source src,
                                         std::size_t id, double stride) {
  OrderParamTrace t{o, src, id, stride, {}};
  t.values.reserve(states.size());
  for (const auto& s : states) t.values.push_back(o == Observable::delta_rho ? order_param_rho(s.rho) : order_param_q(s.Q));
  t.validate();
  return t;
}

/// Normalized autocovariance pooled over all start times of all traces.
/// Mean and variance come from the pooled sample; the lag-tau covariance
/// divides by the number of lag-tau pairs. Returns tau_max + 1 values.
inline std::vector<double> autocorrelation(const std::vector<std::vector<double>>& ensemble, std::size_t tau_max) {
  if (ensemble.empty()) throw InvalidArgument("autocorrelation: empty ensemble");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& x : ensemble) {
    if (x.size() < tau_max + 1)
      throw InvalidArgument(fmt::format("autocorrelation: trace of length {} is shorter than tau_max + 1 = {}",
                                        x.size(), tau_max + 1));
    for (double v : x) sum += v;
    n += x.size();
  }
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto& x : ensemble)
    for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  double scale = 0.0;
  for (const auto& x : ensemble)
    for (double v : x) scale = std::max(scale, std::abs(v));
  if (!(var > 1e-28 * std::max(1.0, scale * scale)))
    throw DegenerateSeriesError("autocorrelation: ensemble has zero variance");
  std::vector<double> a(tau_max + 1);
  for (std::size_t tau = 0; tau <= tau_max; ++tau) {
    double c = 0.0;
    std::size_t pairs = 0;
    for (const auto& x : ensemble) {
      for (std::size_t t = 0; t + tau < x.size(); ++t) c += (x[t] - mean) * (x[t + tau] - mean);
      pairs += x.size() - tau;
    }
    a[tau] = (c / static_cast<double>(pairs)) / var;
  }
  a[0] = 1.0;
  return a;
}

struct ClimateCurves {
  std::vector<double> a_gt, a_pred;
  double max_abs_deviation = 0.0;
};

struct ClimateReport {
  std::size_t tau_max = 0;
  std::size_t n_steps = 0;
  std::size_t n_ground_truth = 0;
  std::size_t n_predicted = 0;
  std::vector<std::size_t> diverged;        // trajectory ids excluded from A_pred
  std::vector<std::size_t> diverged_step;   // first non-finite step of each
  ClimateCurves delta_rho, delta_q;
  std::vector<OrderParamTrace> traces;

  const ClimateCurves& curves(Observable o) const { return o == Observable::delta_rho ? delta_rho : delta_q; }
};

inline double max_abs_deviation(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Rolls `stepper` out from each ground-truth trajectory's first state for
/// n_steps and compares autocorrelations of Delta_rho and Delta_Q. Diverged
/// rollouts are excluded from A_pred and listed.
inline ClimateReport climate_report(const std::vector<std::vector<LatticeState>>& ground_truth,
                                    const model::Stepper& stepper, std::size_t n_steps, std::size_t tau_max,
                                    double stride, int jobs = 1) {
  if (ground_truth.empty()) throw InvalidArgument("climate_report: no ground-truth trajectories");
  if (tau_max >= n_steps) throw InvalidArgument("climate_report: tau_max must be smaller than n_steps");
  for (const auto& g : ground_truth)
    if (g.size() < n_steps + 1) throw InvalidArgument("climate_report: ground-truth trajectory shorter than n_steps + 1");
  const std::size_t n = ground_truth.size();
  std::vector<std::vector<LatticeState>> pred(n);
  std::vector<long> div_step(n, -1);
  data::detail::parallel_for(n, jobs, [&](std::size_t k) {
    try {
      pred[k] = model::rollout(stepper, ground_truth[k][0], n_steps);
    } catch (const DivergenceError& e) {
      div_step[k] = static_cast<long>(e.step());
    }
  });

  ClimateReport r;
  r.tau_max = tau_max;
  r.n_steps = n_steps;
  r.n_ground_truth = n;
  std::vector<std::vector<double>> gt_rho, gt_q, pr_rho, pr_q;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<LatticeState> head(ground_truth[k].begin(), ground_truth[k].begin() + static_cast<long>(n_steps) + 1);
    r.traces.push_back(order_param_trace(head, Observable::delta_rho, Source::ground_truth, k, stride));
    gt_rho.push_back(r.traces.back().values);
    r.traces.push_back(order_param_trace(head, Observable::delta_q, Source::ground_truth, k, stride));
    gt_q.push_back(r.traces.back().values);
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (div_step[k] >= 0) {
      r.diverged.push_back(k);
      r.diverged_step.push_back(static_cast<std::size_t>(div_step[k]));
      continue;
    }
    r.traces.push_back(order_param_trace(pred[k], Observable::delta_rho, Source::predicted, k, stride));
    pr_rho.push_back(r.traces.back().values);
    r.traces.push_back(order_param_trace(pred[k], Observable::delta_q, Source::predicted, k, stride));
    pr_q.push_back(r.traces.back().values);
  }
  r.n_predicted = pr_rho.size();
  r.delta_rho.a_gt = autocorrelation(gt_rho, tau_max);
  r.delta_q.a_gt = autocorrelation(gt_q, tau_max);
  if (!pr_rho.empty()) {
    r.delta_rho.a_pred = autocorrelation(pr_rho, tau_max);
    r.delta_q.a_pred = autocorrelation(pr_q, tau_max);
    r.delta_rho.max_abs_deviation = max_abs_deviation(r.delta_rho.a_gt, r.delta_rho.a_pred);
    r.delta_q.max_abs_deviation = max_abs_deviation(r.delta_q.a_gt, r.delta_q.a_pred);
  } else {
    r.delta_rho.max_abs_deviation = r.delta_q.max_abs_deviation = std::numeric_limits<double>::infinity();
  }
  return r;
}

/// Model rollouts in eval mode.
template <typename T>
ClimateReport climate_report(const std::vector<std::vector<LatticeState>>& ground_truth, model::Model<T>& m,
                             std::size_t n_steps, std::size_t tau_max, int jobs = 1) {
  m.set_mode(ad::Mode::eval);
  return climate_report(
      ground_truth, [&m](const LatticeState& s) { return model::model_step(m, s); }, n_steps, tau_max,
      m.config().prediction_dt, jobs);
}

// ---------------------------------------------------------------------------
// Export
//
// traces CSV: observable,source,trajectory_id,stride,values
//   values are ';'-separated, printed with 17 significant digits.
// curves CSV: tau,A_gt_delta_rho,A_pred_delta_rho,A_gt_delta_q,A_pred_delta_q

enum class ExportFormat { csv, json };

inline ExportFormat export_format_from(const std::string& s) {
  if (s == "csv") return ExportFormat::csv;
  if (s == "json") return ExportFormat::json;
  throw InvalidArgument("export format must be 'csv' or 'json'");
}

inline constexpr const char* kTraceCsvHeader = "observable,source,trajectory_id,stride,values";

inline json to_json(const OrderParamTrace& t) {
  return json{{"observable", to_string(t.observable)},
              {"source", to_string(t.source)},
              {"trajectory_id", t.trajectory_id},
              {"stride", t.stride},
              {"values", t.values}};
}

inline std::string traces_to_csv(const std::vector<OrderParamTrace>& traces) {
  std::string out = std::string(kTraceCsvHeader) + "\n";
  for (const auto& t : traces) {
    out += fmt::format("{},{},{},{:.17g},", to_string(t.observable), to_string(t.source), t.trajectory_id, t.stride);
    for (std::size_t i = 0; i < t.values.size(); ++i) out += fmt::format("{}{:.17g}", i ? ";" : "", t.values[i]);
    out += "\n";
  }
  return out;
}

inline void export_traces(const std::vector<OrderParamTrace>& traces, const std::filesystem::path& path,
                          ExportFormat format) {
  if (format == ExportFormat::csv) {
    io::write_text(path, traces_to_csv(traces));
  } else {
    json arr = json::array();
    for (const auto& t : traces) arr.push_back(to_json(t));
    io::write_text(path, json{{"traces", arr}}.dump(1) + "\n");
  }
}

inline void export_traces(const ClimateReport& r, const std::filesystem::path& path, ExportFormat format) {
  export_traces(r.traces, path, format);
}

inline std::vector<OrderParamTrace> parse_traces_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTraceCsvHeader) throw FormatError("trace CSV: missing header");
  std::vector<OrderParamTrace> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (int k = 0; k < 4; ++k) {
      const auto c = line.find(',', pos);
      if (c == std::string::npos) throw FormatError("trace CSV: too few fields");
      f.push_back(line.substr(pos, c - pos));
      pos = c + 1;
    }
    OrderParamTrace t;
    t.observable = observable_from(f[0]);
    t.source = source_from(f[1]);
    t.trajectory_id = std::stoull(f[2]);
    t.stride = std::stod(f[3]);
    const std::string vals = line.substr(pos);
    std::size_t p = 0;
    while (p < vals.size()) {
      auto q = vals.find(';', p);
      if (q == std::string::npos) q = vals.size();
      t.values.push_back(std::stod(vals.substr(p, q - p)));
      p = q + 1;
    }
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<OrderParamTrace> parse_traces_json(const std::string& text) {
  std::vector<OrderParamTrace> out;
  try {
    const json doc = json::parse(text);
    for (const auto& j : doc.at("traces")) {
      OrderParamTrace t;
      t.observable = observable_from(j.at("observable").get<std::string>());
      t.source = source_from(j.at("source").get<std::string>());
      t.trajectory_id = j.at("trajectory_id").get<std::size_t>();
      t.stride = j.at("stride").get<double>();
      t.values = j.at("values").get<std::vector<double>>();
      out.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("trace JSON: ") + e.what());
  }
  return out;
}

inline std::vector<OrderParamTrace> read_traces(const std::filesystem::path& path, ExportFormat format) {
  const std::string text = io::read_text(path);
  return format == ExportFormat::csv ? parse_traces_csv(text) : parse_traces_json(text);
}

inline json to_json(const ClimateReport& r) {
  auto curves = [](const ClimateCurves& c) {
    return json{{"A_gt", c.a_gt}, {"A_pred", c.a_pred}, {"max_abs_deviation", c.max_abs_deviation}};
  };
  return json{{"tau_max", r.tau_max},
              {"n_steps", r.n_steps},
              {"n_ground_truth", r.n_ground_truth},
              {"n_predicted", r.n_predicted},
              {"n_diverged", r.diverged.size()},
              {"diverged", r.diverged},
              {"diverged_step", r.diverged_step},
              {"delta_rho", curves(r.delta_rho)},
              {"delta_q", curves(r.delta_q)}};
}

inline std::string curves_to_csv(const ClimateReport& r) {
  std::string out = "tau,A_gt_delta_rho,A_pred_delta_rho,A_gt_delta_q,A_pred_delta_q\n";
  auto at = [](const std::vector<double>& v, std::size_t i) {
    return i < v.size() ? fmt::format("{:.17g}", v[i]) : std::string();
  };
  for (std::size_t tau = 0; tau < r.delta_rho.a_gt.size(); ++tau)
    out += fmt::format("{},{},{},{},{}\n", tau, at(r.delta_rho.a_gt, tau), at(r.delta_rho.a_pred, tau),
                       at(r.delta_q.a_gt, tau), at(r.delta_q.a_pred, tau));
  return out;
}

}  // namespace holstein::analysis
