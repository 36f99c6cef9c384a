#include <gtest/gtest.h>

#include <random>

#include "windgrid/baselines.hpp"
#include "windgrid/synth.hpp"

using namespace windgrid;

namespace {

TelemetrySeries series_of(std::vector<std::vector<double>> rows) {
  TelemetrySeries s;
  s.variable = Variable::Power;
  for (auto& r : rows) {
    std::vector<std::optional<double>> v(r.begin(), r.end());
    s.values.push_back(std::move(v));
  }
  return s;
}

// Brute force: every distance, stable sort, mean of the first k labels in sorted order.
double knn_oracle(const std::vector<double>& X, const std::vector<double>& y, std::size_t d, std::size_t k,
                  const std::vector<double>& q, KnnMetric metric) {
  std::vector<std::pair<double, double>> all;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double s = 0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = X[i * d + c] - q[c];
      s += metric == KnnMetric::Manhattan ? std::abs(diff) : diff * diff;
    }
    all.emplace_back(metric == KnnMetric::Manhattan ? s : std::sqrt(s), y[i]);
  }
  std::stable_sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first < b.first; });
  double sum = 0;
  for (std::size_t i = 0; i < k; ++i) sum += all[i].second;
  return sum / double(k);
}

std::pair<std::vector<double>, std::vector<double>> line_data() {
  std::vector<double> X, y;
  for (int x = 0; x <= 10; ++x) {
    X.push_back(x);
    y.push_back(2.0 * x);
  }
  return {X, y};
}

SvrConfig linear_cfg(double C, double eps) {
  SvrConfig c;
  c.kernel = KernelKind::Linear;
  c.C = C;
  c.epsilon = eps;
  return c;
}

}  // namespace

TEST(Features, SingleFeatureWindows) {
  auto reg = lattice_registry(1, 1);
  auto fs = build_features(series_of({{1, 2, 3, 4, 5}}), reg, {FeatureKind::SF, 3, 0, {}}, 1,
                           SplitFractions{1.0, 0.0, 0.0});
  const auto& d = fs.turbines[0];
  ASSERT_EQ(d.rows(), 2u);
  EXPECT_EQ(d.X, (std::vector<double>{1, 2, 3, 2, 3, 4}));
  EXPECT_EQ(d.y, (std::vector<double>{4, 5}));
}

TEST(Features, LocalFeatureLengthAndNeighborOrder) {
  auto reg = lattice_registry(1, 3);  // equally spaced along longitude
  auto s = series_of({{1, 2, 3, 4}, {10, 20, 30, 40}, {100, 200, 300, 400}});
  auto fs = build_features(s, reg, {FeatureKind::LF, 2, 1, {}}, 1, SplitFractions{1.0, 0.0, 0.0});
  EXPECT_EQ(fs.turbines[0].dims, 4u);
  EXPECT_EQ(fs.turbines[0].neighbors, (std::vector<std::size_t>{1}));
  // turbine 1 is equidistant from 0 and 2: tie goes to the lower id
  EXPECT_EQ(fs.turbines[1].neighbors, (std::vector<std::size_t>{0}));
  EXPECT_EQ(fs.turbines[1].X, (std::vector<double>{10, 20, 1, 2, 20, 30, 2, 3}));
  auto two = build_features(s, reg, {FeatureKind::LF, 2, 2, {}}, 1, SplitFractions{1.0, 0.0, 0.0});
  EXPECT_EQ(two.turbines[0].neighbors, (std::vector<std::size_t>{1, 2}));
}

TEST(Features, DistanceThresholdDropsFarNeighbors) {
  auto reg = lattice_registry(1, 3, 41.0, -105.0, 0.03, 0.5);  // ~42 km apart
  auto near = nearest_turbines(reg, 0, 8, 50.0);
  EXPECT_EQ(near, (std::vector<std::size_t>{1}));
  EXPECT_EQ(nearest_turbines(reg, 0, 8).size(), 2u);
}

TEST(Features, ZeroNeighborsIsSingleFeature) {
  auto sc = make_scenario(reference_field(), PowerCurve{}, 0.0, 1);
  auto sf = build_features(sc.power, sc.registry, {FeatureKind::SF, 8, 8, {}}, 3);
  auto lf = build_features(sc.power, sc.registry, {FeatureKind::LF, 8, 0, {}}, 3);
  for (std::size_t i = 0; i < sf.turbines.size(); i += 37) {
    EXPECT_EQ(sf.turbines[i].X, lf.turbines[i].X);
    EXPECT_EQ(sf.turbines[i].y, lf.turbines[i].y);
  }
  auto a = run_knn(sf, {}), b = run_knn(lf, {});
  EXPECT_EQ(a[5].prediction, b[5].prediction);
}

TEST(Features, SharesSplitsWithScenes) {
  auto sc = reference_scenario();
  auto fs = build_features(sc.power, sc.registry, {FeatureKind::SF, 8, 0, {}}, 3);
  auto set = build_samples(sc.grid, {sc.power}, 8, 3, Variable::Power, SplitFractions{});
  EXPECT_EQ(fs.fingerprint, set.fingerprint);
  EXPECT_EQ(fs.turbines[0].rows(), set.samples.size());
  EXPECT_EQ(fs.turbines[0].split[413], Split::Val);
}

TEST(Features, ShortSeriesRejected) {
  auto reg = lattice_registry(1, 1);
  try {
    build_features(series_of({{1, 2, 3}}), reg, {FeatureKind::SF, 3, 0, {}}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientHistory);
  }
}

TEST(Knn, WorkedExample) {
  auto m = knn_fit({0, 0, 1, 1, 2, 2}, {0, 2, 4}, 2, {2, KnnMetric::Euclidean, KnnAggregator::Mean});
  const double q[] = {1.9, 1.9};
  EXPECT_EQ(knn_predict(m, q), 3.0);
}

TEST(Knn, FullKIsGlobalMeanAndExactHitWithKOne) {
  std::vector<double> X{0, 5, 9, 2}, y{1, 2, 3, 6};
  auto all = knn_fit(X, y, 1, {4, KnnMetric::Euclidean, KnnAggregator::Mean});
  for (double q : {-100.0, 3.0, 77.0}) EXPECT_EQ(knn_predict(all, &q), 3.0);
  auto one = knn_fit(X, y, 1, {1, KnnMetric::Manhattan, KnnAggregator::Mean});
  const double q = 9;
  EXPECT_EQ(knn_predict(one, &q), 3.0);
}

TEST(Knn, DistanceTiesFollowTrainingOrder) {
  auto m = knn_fit({1, -1, 3}, {10, 20, 30}, 1, {1, KnnMetric::Euclidean, KnnAggregator::Mean});
  const double q = 0;
  EXPECT_EQ(knn_predict(m, &q), 10.0);
}

TEST(Knn, WeightedMean) {
  auto m = knn_fit({0, 1, 3}, {0, 10, 30}, 1, {2, KnnMetric::Euclidean, KnnAggregator::DistanceWeighted});
  const double q = 2;
  EXPECT_DOUBLE_EQ(knn_predict(m, &q), (10.0 / 1 + 30.0 / 1) / 2);
  const double hit = 1;
  EXPECT_EQ(knn_predict(m, &hit), 10.0);
}

TEST(Knn, Errors) {
  EXPECT_THROW(knn_fit({}, {}, 2, {}), Error);
  EXPECT_THROW(knn_fit({1, 2}, {1, 2}, 1, {3}), Error);
}

TEST(Knn, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(2024);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + rng() % 500, d = 1 + rng() % 32, k = 1 + rng() % std::min<std::size_t>(n, 15);
    const bool coarse = inst % 3 == 0;  // integer grid forces distance ties
    std::uniform_real_distribution<double> u(-1, 1);
    auto draw = [&] { return coarse ? double(int(rng() % 3)) : u(rng); };
    std::vector<double> X(n * d), y(n), q(d);
    for (auto& v : X) v = draw();
    for (auto& v : y) v = u(rng) * 10;
    for (auto& v : q) v = draw();
    const auto metric = inst % 2 ? KnnMetric::Manhattan : KnnMetric::Euclidean;
    auto m = knn_fit(X, y, d, {k, metric, KnnAggregator::Mean});
    ASSERT_EQ(knn_predict(m, q.data()), knn_oracle(X, y, d, k, q, metric)) << "instance " << inst;
  }
}

TEST(Svr, NoiselessLineHitsAnalyticOptimum) {
  // flattest w keeping |(2 - w) x - b| <= 0.1 on [0, 10] is w = 1.98, b = 0.1
  auto [X, y] = line_data();
  auto m = svr_fit(X, y, 1, linear_cfg(100, 0.1));
  ASSERT_TRUE(m.diagnostics.converged);
  const double w = svr_linear_weights(m)[0];
  EXPECT_NEAR(w, 1.98, 1e-3);
  EXPECT_NEAR(m.b, 0.1, 1e-2);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_LE(std::abs(svr_predict(m, &X[i]) - y[i]), 0.1 + 1e-3);
  const double five = 5;
  EXPECT_NEAR(svr_predict(m, &five), 10.0, 0.15);
}

TEST(Svr, ConstantLabelsGiveFlatFunction) {
  std::vector<double> X{0, 1, 2, 3, 4}, y(5, 7.5);
  auto m = svr_fit(X, y, 1, linear_cfg(10, 0.5));
  EXPECT_EQ(m.support_count(), 0u);
  EXPECT_DOUBLE_EQ(m.b, 7.5);
  const double q = 100;
  EXPECT_DOUBLE_EQ(svr_predict(m, &q), 7.5);
}

TEST(Svr, RbfCertificatesOnRandomProblems) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0, 1);
  for (int p = 0; p < 20; ++p) {
    const std::size_t n = 50, d = 3;
    std::vector<double> X(n * d), y(n);
    for (auto& v : X) v = g(rng);
    for (std::size_t i = 0; i < n; ++i) y[i] = std::sin(X[i * d]) + 0.5 * X[i * d + 1] + 0.1 * g(rng);
    SvrConfig cfg;
    cfg.C = 1 + p % 5;
    cfg.epsilon = 0.05;
    auto m = svr_fit(X, y, d, cfg);
    auto c = svr_certificate(m, X, y);

    EXPECT_TRUE(m.diagnostics.converged);
    EXPECT_TRUE(c.box_ok);
    EXPECT_LT(c.equality_residual, 1e-9);
    EXPECT_LT(c.kkt_violation, 1e-3);
    EXPECT_GE(c.primal - c.dual, -1e-9);
    // a KKT violation of 1e-3 leaves a relative gap near 1e-3; one more decade of tolerance closes it
    cfg.tolerance = 1e-4;
    EXPECT_LT(svr_certificate(svr_fit(X, y, d, cfg), X, y).relative_gap, 1e-3) << "problem " << p;
  }
}

TEST(Svr, RefitOnSupportVectorsOnly) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  const std::size_t n = 60, d = 2;
  std::vector<double> X(n * d), y(n);
  for (auto& v : X) v = u(rng);
  for (std::size_t i = 0; i < n; ++i) y[i] = X[i * d] * X[i * d + 1] + 0.2 * u(rng);
  SvrConfig cfg;
  cfg.C = 2;
  cfg.epsilon = 0.2;
  cfg.tolerance = 1e-10;
  auto full = svr_fit(X, y, d, cfg);
  std::vector<double> Xs, ys;
  for (std::size_t i = 0; i < n; ++i)
    if (full.alpha[i] != full.alpha_star[i]) {
      Xs.insert(Xs.end(), X.begin() + std::ptrdiff_t(i * d), X.begin() + std::ptrdiff_t((i + 1) * d));
      ys.push_back(y[i]);
    }
  ASSERT_LT(ys.size(), n);
  auto sub = svr_fit(Xs, ys, d, cfg);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(svr_predict(full, &X[i * d]), svr_predict(sub, &X[i * d]), 1e-6);
}

TEST(Svr, IterationCapReportsWarning) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> X(40), y(40);
  for (auto& v : X) v = g(rng);
  for (auto& v : y) v = g(rng);
  SvrConfig cfg;
  cfg.max_iterations = 2;
  auto m = svr_fit(X, y, 1, cfg);
  EXPECT_EQ(m.diagnostics.iterations, 2u);
  EXPECT_FALSE(m.diagnostics.converged);
  EXPECT_NE(m.diagnostics.warning.find("MaxIterations"), std::string::npos);
  EXPECT_THROW(svr_fit(X, y, 1, linear_cfg(0, 0.1)), Error);
  EXPECT_GT(m.diagnostics.kkt_violation, cfg.tolerance);
}

TEST(Persistence, Examples) {
  auto p = persistence_predict({1, 2, 3, 4}, 1);
  EXPECT_EQ(p, (std::vector<double>{1, 2, 3}));
  double mse = 0;
  for (std::size_t i = 0; i < 3; ++i) mse += (p[i] - double(i + 2)) * (p[i] - double(i + 2)) / 3;
  EXPECT_EQ(mse, 1.0);
  auto c = persistence_predict({5, 5, 5, 5, 5}, 2);
  EXPECT_EQ(c, (std::vector<double>{5, 5, 5}));
}

TEST(Persistence, RunnerRepeatsBaseValue) {
  auto reg = lattice_registry(1, 1);
  auto fs = build_features(series_of({{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}}), reg, {FeatureKind::SF, 2, 0, {}}, 2,
                           SplitFractions{0.5, 0.0, 0.5});
  auto p = run_persistence(fs)[0];
  ASSERT_FALSE(p.prediction.empty());
  for (std::size_t i = 0; i < p.prediction.size(); ++i) {
    EXPECT_EQ(p.prediction[i], double(p.base_index[i] + 1));
    EXPECT_EQ(p.actual[i], double(p.base_index[i] + 3));
  }
}

TEST(Parallel, ResultsIndependentOfWorkerCount) {
  auto f = [](std::size_t i) { return std::sqrt(double(i)) * 3; };
  EXPECT_EQ(parallel_map(1000, f, 1), parallel_map(1000, f, 4));
  EXPECT_THROW(parallel_map(
                   10, [](std::size_t i) -> int { if (i == 7) throw Error(ErrorKind::IoError, "x"); return 0; }, 3),
               Error);
}
