#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>

#include "holstein/analysis.hpp"
#include "holstein/dataset.hpp"

using namespace holstein;
using namespace holstein::analysis;
namespace fs = std::filesystem;

namespace {

ComplexMatrix diag_density(const std::vector<double>& n) {
  ComplexMatrix rho = ComplexMatrix::Zero(static_cast<int>(n.size()), static_cast<int>(n.size()));
  for (std::size_t i = 0; i < n.size(); ++i) rho(i, i) = n[i];
  return rho;
}

const data::Dataset& shallow_traj() {
  static const data::Dataset ds = [] {
    auto p = data::QuenchProtocol::shallow_default(8);
    p.n_trajectories = 4;
    p.n_prediction_steps = 60;
    return data::generate_dataset(p);
  }();
  return ds;
}

std::vector<std::vector<LatticeState>> gt_states() {
  std::vector<std::vector<LatticeState>> out;
  for (const auto& t : shallow_traj().trajectories) out.push_back(t.snapshots);
  return out;
}

}  // namespace

TEST(OrderParam, RhoExamples) {
  const double dn = 0.137;
  std::vector<double> n(8);
  for (int i = 0; i < 8; ++i) n[i] = 0.5 + dn * (i % 2 ? -1 : 1);
  EXPECT_NEAR(order_param_rho(diag_density(n)), dn, 1e-15);
  EXPECT_EQ(order_param_rho(diag_density(std::vector<double>(8, 0.5))), 0.0);
  EXPECT_DOUBLE_EQ(order_param_rho(diag_density({1, 0, 1, 0})), 0.5);
  // Off-diagonal entries do not contribute.
  ComplexMatrix rho = diag_density({1, 0, 1, 0});
  rho(0, 1) = cplx(0.3, 0.2);
  rho(1, 0) = std::conj(rho(0, 1));
  EXPECT_DOUBLE_EQ(order_param_rho(rho), 0.5);
}

TEST(OrderParam, QExamplesAndLinearity) {
  RealVector q(6);
  for (int i = 0; i < 6; ++i) q(i) = -0.7 * (i % 2 ? -1 : 1);
  EXPECT_NEAR(order_param_q(q), -0.7, 1e-15);
  EXPECT_EQ(order_param_q(RealVector::Constant(6, 2.5)), 0.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  RealVector r(16);
  for (int i = 0; i < 16; ++i) r(i) = n01(rng);
  long double brute = 0;
  for (int i = 0; i < 16; ++i) brute += r(i) * std::cos(std::numbers::pi * i);
  EXPECT_NEAR(order_param_q(r), static_cast<double>(brute / 16), 1e-14);
  EXPECT_EQ(order_param_q(RealVector(2.0 * r)), 2.0 * order_param_q(r));
}

TEST(OrderParam, CdwGroundStateHasMatchingSigns) {
  const auto s = cdw_ground_state(PhysicsParams::half_filled(16, 0.8));
  EXPECT_GT(std::abs(order_param_rho(s.rho)), 0.05);
  EXPECT_GT(order_param_rho(s.rho) * order_param_q(s.Q), 0.0);  // Q_i = g n_i / K at equilibrium
}

TEST(Trace, BuildsAndValidates) {
  const auto& t = shallow_traj().trajectories[0];
  const auto tr = order_param_trace(t.snapshots, Observable::delta_q, Source::ground_truth, 3, 0.64);
  ASSERT_EQ(tr.values.size(), t.snapshots.size());
  EXPECT_EQ(tr.values[5], order_param_q(t.snapshots[5].Q));
  EXPECT_THROW(order_param_trace(t.snapshots, Observable::delta_q, Source::ground_truth, 0, 0.0), InvalidArgument);
  auto bad = t.snapshots;
  bad[2].Q(0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(order_param_trace(bad, Observable::delta_q, Source::predicted, 0, 0.64), NonFiniteError);
}

TEST(Autocorrelation, UnitAtZeroLag) {
  const std::vector<std::vector<double>> e = {{1, 3, 2, 5, 4}, {0, 1, -1, 2, 7}};
  const auto a = autocorrelation(e, 3);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0], 1.0);
}

TEST(Autocorrelation, HandComputedEstimator) {
  // Pooled mean 2, pooled variance 2/3; lag-1 pairs: (1,2),(2,3),(3,2),(2,1).
  const std::vector<std::vector<double>> e = {{1, 2, 3}, {3, 2, 1}};
  const auto a = autocorrelation(e, 1);
  const double c1 = ((-1) * 0 + 0 * 1 + 1 * 0 + 0 * (-1)) / 4.0;
  EXPECT_NEAR(a[1], c1 / (4.0 / 6.0), 1e-15);
  const std::vector<std::vector<double>> alt = {{0, 1, 0, 1, 0, 1}};
  // mean 1/2, var 1/4, lag-1 products all -1/4.
  EXPECT_NEAR(autocorrelation(alt, 2)[1], -1.0, 1e-15);
  EXPECT_NEAR(autocorrelation(alt, 2)[2], 1.0, 1e-15);
}

TEST(Autocorrelation, WhiteNoiseIsUncorrelated) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01;
  std::vector<std::vector<double>> e(1, std::vector<double>(10000));
  for (auto& v : e[0]) v = n01(rng);
  const auto a = autocorrelation(e, 20);
  for (std::size_t tau = 1; tau <= 20; ++tau) EXPECT_LT(std::abs(a[tau]), 0.05) << tau;
}

TEST(Autocorrelation, RandomPhaseCosine) {
  const double w = 0.3;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> phase(0, 2 * std::numbers::pi);
  std::vector<std::vector<double>> e(64, std::vector<double>(2000));
  for (auto& x : e) {
    const double ph = phase(rng);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = std::cos(w * t + ph);
  }
  const auto a = autocorrelation(e, 50);
  for (std::size_t tau = 0; tau <= 50; ++tau) EXPECT_NEAR(a[tau], std::cos(w * tau), 0.02) << tau;
}

TEST(Autocorrelation, AffineInvariance) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  std::vector<std::vector<double>> x(3, std::vector<double>(300)), y = x;
  double acc = 0;
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t t = 0; t < 300; ++t) {
      acc = 0.9 * acc + n01(rng);
      x[k][t] = acc;
      y[k][t] = -2.5 * acc + 7.0;
    }
  const auto ax = autocorrelation(x, 40), ay = autocorrelation(y, 40);
  for (std::size_t tau = 0; tau <= 40; ++tau) EXPECT_NEAR(ax[tau], ay[tau], 1e-12);
}

TEST(Autocorrelation, Errors) {
  EXPECT_THROW(autocorrelation({{2, 2, 2, 2}}, 1), DegenerateSeriesError);
  EXPECT_THROW(autocorrelation({}, 1), InvalidArgument);
  EXPECT_THROW(autocorrelation({{1, 2, 3}}, 3), InvalidArgument);
}

TEST(Climate, OracleModelHasZeroDeviation) {
  const auto& ds = shallow_traj();
  const auto stepper = model::exact_stepper(ds.params(), ds.protocol.dt_integration, ds.protocol.prediction_stride);
  const auto r = climate_report(gt_states(), stepper, 60, 20, ds.prediction_dt(), 2);
  EXPECT_EQ(r.n_ground_truth, 4u);
  EXPECT_EQ(r.n_predicted, 4u);
  EXPECT_TRUE(r.diverged.empty());
  EXPECT_EQ(r.delta_rho.a_pred, r.delta_rho.a_gt);
  EXPECT_EQ(r.delta_q.a_pred, r.delta_q.a_gt);
  EXPECT_EQ(r.delta_rho.max_abs_deviation, 0.0);
  EXPECT_EQ(r.delta_q.max_abs_deviation, 0.0);
  EXPECT_EQ(r.delta_rho.a_pred[0], 1.0);
  EXPECT_EQ(r.traces.size(), 16u);
}

TEST(Climate, DivergedRolloutsAreExcludedAndCounted) {
  const auto& ds = shallow_traj();
  const auto exact = model::exact_stepper(ds.params(), 0.01, 64);
  model::Stepper flaky = [&](const LatticeState& s) {
    LatticeState n = exact(s);
    if (s.Q(0) == ds.trajectories[2].snapshots[4].Q(0)) n.P(1) = std::numeric_limits<double>::quiet_NaN();
    return n;
  };
  const auto r = climate_report(gt_states(), flaky, 30, 10, ds.prediction_dt());
  ASSERT_EQ(r.diverged.size(), 1u);
  EXPECT_EQ(r.diverged[0], 2u);
  EXPECT_EQ(r.diverged_step[0], 5u);
  EXPECT_EQ(r.n_predicted, 3u);
  EXPECT_GT(r.delta_rho.max_abs_deviation, 0.0);
}

TEST(Climate, ArgumentChecks) {
  const auto& ds = shallow_traj();
  const auto exact = model::exact_stepper(ds.params(), 0.01, 64);
  EXPECT_THROW(climate_report(gt_states(), exact, 30, 30, 0.64), InvalidArgument);
  EXPECT_THROW(climate_report(gt_states(), exact, 61, 10, 0.64), InvalidArgument);
  EXPECT_THROW(climate_report({}, exact, 30, 10, 0.64), InvalidArgument);
}

TEST(Export, CsvAndJsonRoundTrip) {
  const auto& ds = shallow_traj();
  const auto r = climate_report(gt_states(), model::exact_stepper(ds.params(), 0.01, 64), 20, 5, 0.64);
  const auto dir = fs::temp_directory_path() / "holstein_export_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  export_traces(r, dir / "t.csv", ExportFormat::csv);
  export_traces(r, dir / "t.json", ExportFormat::json);
  EXPECT_EQ(read_traces(dir / "t.csv", ExportFormat::csv), r.traces);
  EXPECT_EQ(read_traces(dir / "t.json", ExportFormat::json), r.traces);
  const auto text = io::read_text(dir / "t.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), kTraceCsvHeader);
  const auto j = to_json(r);
  EXPECT_EQ(j["tau_max"], 5);
  EXPECT_EQ(j["delta_rho"]["A_gt"].size(), 6u);
}

TEST(Export, EmptyIsHeaderOnlyAndBadPathFails) {
  const auto dir = fs::temp_directory_path() / "holstein_export_empty";
  fs::remove_all(dir);
  fs::create_directories(dir);
  export_traces(std::vector<OrderParamTrace>{}, dir / "e.csv", ExportFormat::csv);
  EXPECT_EQ(io::read_text(dir / "e.csv"), std::string(kTraceCsvHeader) + "\n");
  EXPECT_TRUE(read_traces(dir / "e.csv", ExportFormat::csv).empty());
  export_traces(std::vector<OrderParamTrace>{}, dir / "e.json", ExportFormat::json);
  EXPECT_TRUE(read_traces(dir / "e.json", ExportFormat::json).empty());
  EXPECT_THROW(export_traces(std::vector<OrderParamTrace>{}, dir / "no" / "such" / "x.csv", ExportFormat::csv), IoError);
  EXPECT_THROW(export_format_from("xml"), InvalidArgument);
}

TEST(Export, MalformedCsvIsFormatError) {
  EXPECT_THROW(parse_traces_csv("wrong,header\n"), FormatError);
  EXPECT_THROW(parse_traces_csv(std::string(kTraceCsvHeader) + "\ndelta_rho,ground_truth,0\n"), FormatError);
  EXPECT_THROW(parse_traces_csv(std::string(kTraceCsvHeader) + "\ndelta_x,ground_truth,0,0.64,1;2\n"), Error);
}
