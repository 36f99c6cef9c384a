#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "windgrid/eval_report.hpp"

using namespace windgrid;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::FormatError;  // sentinel: nothing thrown
}

/// Four turbines whose MAX/MIN/AVE are exactly (max, min, ave).
MethodResult with_aggregate(std::string name, double max, double min, double ave) {
  const double mid = (4 * ave - max - min) / 2;
  return {std::move(name), {max, mid, min, mid}, 0.0};
}

}  // namespace

TEST(Mse, Examples) {
  EXPECT_EQ(mse({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_EQ(mse({0, 0}, {1, 1}), 1.0);
  EXPECT_EQ(kind_of([] { mse({1, 2}, {1}); }), ErrorKind::LengthError);
  EXPECT_EQ(kind_of([] { mse({}, {}); }), ErrorKind::EmptySeries);
}

TEST(Mse, MatchesTwoPassOracleAndIsTranslationConsistent) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(3, 2);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> r(100), p(100);
    for (auto& v : r) v = g(rng);
    for (auto& v : p) v = g(rng);
    // oracle: residuals first, then a second pass summing squares in reverse order
    std::vector<double> d(100);
    for (std::size_t i = 0; i < 100; ++i) d[i] = r[i] - p[i];
    long double acc = 0;
    for (std::size_t i = 100; i-- > 0;) acc += (long double)d[i] * d[i];
    const double oracle = double(acc / 100);
    const double m = mse(r, p);
    EXPECT_LT(std::abs(m - oracle) / oracle, 1e-12);
    const double c = 0.25 * rep;
    for (auto& v : r) v += c;
    for (auto& v : p) v += c;
    EXPECT_LT(std::abs(mse(r, p) - m) / m, 1e-12);
  }
}

TEST(Aggregate, Examples) {
  auto a = aggregate({1.0, 3.0});
  EXPECT_EQ(a.max, 3.0);
  EXPECT_EQ(a.min, 1.0);
  EXPECT_EQ(a.ave, 2.0);
  auto one = aggregate({4.5});
  EXPECT_EQ(one.max, 4.5);
  EXPECT_EQ(one.min, 4.5);
  EXPECT_EQ(one.ave, 4.5);
  EXPECT_EQ(kind_of([] { aggregate({}); }), ErrorKind::EmptySeries);
}

TEST(Aggregate, AverageWithinExtremes) {
  std::mt19937_64 rng(9);
  std::exponential_distribution<double> e(0.3);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> v(1 + rng() % 50);
    for (auto& x : v) x = e(rng);
    auto a = aggregate(v);
    EXPECT_LE(a.min, a.ave);
    EXPECT_LE(a.ave, a.max);
  }
}

TEST(Improvement, Examples) {
  auto imp = improvement({"ref", {10.0}, 0}, {"cand", {7.5}, 0});
  EXPECT_EQ(*imp.ratio[0], 0.25);
  auto same = improvement({"a", {1, 2, 3}, 0}, {"b", {1, 2, 3}, 0});
  for (auto& p : same.ratio) EXPECT_EQ(*p, 0.0);
  EXPECT_EQ(same.fraction_negative, 0.0);
}

TEST(Improvement, AggregateRatioFromFixture) {
  auto ref = with_aggregate("LF+SVR", 15.84, 6.64, 10.05);
  auto cand = with_aggregate("STF+FC-CNN", 12.23, 5.00, 7.78);
  auto imp = improvement(ref, cand);
  EXPECT_NEAR(imp.ratio_of_means, 0.2259, 1e-4);
}

TEST(Improvement, SignAndExclusions) {
  auto imp = improvement({"r", {0.0, 2.0, 4.0}, 0}, {"c", {1.0, 3.0, 1.0}, 0});
  EXPECT_FALSE(imp.ratio[0].has_value());
  EXPECT_EQ(imp.excluded, 1u);
  EXPECT_LT(*imp.ratio[1], 0.0);  // candidate worse
  EXPECT_GT(*imp.ratio[2], 0.0);
  EXPECT_EQ(imp.fraction_negative, 0.5);
  EXPECT_EQ(imp.max_ratio, 0.75);
  EXPECT_DOUBLE_EQ(imp.mean_ratio, (-0.5 + 0.75) / 2);
  for (int rep = 0; rep < 100; ++rep) {
    const double r = 1 + rep, c = double(rep * 7 % 13);
    auto p = *improvement({"r", {r}, 0}, {"c", {c}, 0}).ratio[0];
    EXPECT_EQ(p < 0, c > r);
    EXPECT_LE(p, 1.0);
  }
  EXPECT_EQ(kind_of([] { improvement({"r", {1, 2}, 0}, {"c", {1}, 0}); }), ErrorKind::LengthError);
}

TEST(Density, IntegratesToOne) {
  std::vector<double> v{-0.12, 0.01, 0.02, 0.31, 0.33};
  auto h = density_histogram(v, 0.1);
  ASSERT_EQ(h.size(), 6u);  // bins from -0.2 up to 0.4, empty ones included
  EXPECT_DOUBLE_EQ(h.front().center, -0.15);
  double area = 0;
  for (auto& b : h) area += b.density * 0.1;
  EXPECT_NEAR(area, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(h[2].density, 2 / (5 * 0.1));
  EXPECT_EQ(h[1].density, 0.0);
}

TEST(Report, FixtureRowsRenderExactly) {
  const std::vector<std::tuple<const char*, double, double, double>> rows{
      {"SF+kNN", 25.44, 8.83, 13.28},   {"LF+kNN", 16.79, 7.30, 10.90},     {"SF+SVR", 18.70, 8.37, 12.50},
      {"LF+SVR", 15.84, 6.64, 10.05},   {"STF+E2E", 11.94, 5.25, 7.91},     {"STF+FC-CNN", 12.23, 5.00, 7.78},
      {"STF-ensemble", 11.39, 5.00, 7.61}};
  std::vector<MethodResult> results;
  for (auto [n, mx, mn, av] : rows) results.push_back(with_aggregate(n, mx, mn, av));
  const std::string expected =
      "|     | SF+kNN | LF+kNN | SF+SVR | LF+SVR | STF+E2E | STF+FC-CNN | STF-ensemble |\n"
      "|-----|---|---|---|---|---|---|---|\n"
      "| MAX | 25.44 | 16.79 | 18.70 | 15.84 | 11.94 | 12.23 | 11.39 |\n"
      "| MIN | 8.83 | 7.30 | 8.37 | 6.64 | 5.25 | 5.00 | 5.00 |\n"
      "| AVE | 13.28 | 10.90 | 12.50 | 10.05 | 7.91 | 7.78 | 7.61 |\n";
  EXPECT_EQ(render_table(results), expected);
}

TEST(Report, FilesAndDeterminism) {
  windgrid::testing::TempDir dir("report");
  std::vector<MethodResult> res{{"A", {1.0, 2.0, 3.0}, 1.5}, {"B", {0.5, 2.5, 0.0}, 0.25}};
  ReportOptions opts;
  opts.comparisons = {{"A", "B"}};
  auto read = [&](const std::string& f) {
    std::string s;
    for (auto& l : detail::read_lines(dir.file(f))) s += l + "\n";
    return s;
  };
  report(res, {10, 20, 30}, dir.path().string(), opts);
  EXPECT_EQ(read("comparison.csv"), "method,max,min,ave\nA,3,1,2\nB,2.5,0,1\n");
  EXPECT_EQ(detail::read_lines(dir.file("mse_distribution.csv")).size(), 7u);
  EXPECT_EQ(read("improvement.csv"),
            "reference,candidate,turbine_id,ratio\nA,B,10,0.5\nA,B,20,-0.25\nA,B,30,1\n");
  EXPECT_EQ(read("timing.csv"), "method,train_seconds\nA,1.5\nB,0.25\n");
  std::map<std::string, std::string> first;
  for (auto& e : std::filesystem::directory_iterator(dir.path())) first[e.path().filename()] = read(e.path().filename());
  report(res, {10, 20, 30}, dir.path().string(), opts);
  for (auto& [f, text] : first) EXPECT_EQ(read(f), text) << f;

  EXPECT_EQ(kind_of([&] { report(res, {10, 20}, dir.path().string()); }), ErrorKind::LengthError);
  EXPECT_EQ(kind_of([&] { report(res, {1, 2, 3}, "/proc/windgrid_no_such/x"); }), ErrorKind::IoError);
  opts.comparisons = {{"A", "missing"}};
  EXPECT_EQ(kind_of([&] { report(res, {1, 2, 3}, dir.path().string(), opts); }), ErrorKind::InvalidConfig);
}

TEST(Report, MethodResultFromPredictions) {
  std::vector<TurbinePredictions> p{{0, {0, 1}, {1, 1}, {1, 3}}, {1, {0, 1}, {0, 0}, {1, 1}}};
  auto r = method_result("m", p);
  EXPECT_EQ(r.turbine_mse, (std::vector<double>{2.0, 1.0}));
  EXPECT_EQ(series_variance({1, 3}), 1.0);
}
