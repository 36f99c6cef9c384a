#include <gtest/gtest.h>

#include "windgrid/scene_stf.hpp"
#include "windgrid/synth.hpp"

using namespace windgrid;

namespace {

FieldConfig small_field(double noise) {
  FieldConfig f;
  f.rows = 6;
  f.cols = 9;
  f.blobs = {{5.0, 2.3, 1.7, 1.5}, {3.0, 4.0, 6.2, 2.0}};
  f.drift_cols = 1.0;
  f.drift_rows = 0.0;
  f.ambient = 5.0;
  f.noise_sd = noise;
  f.steps = 30;
  f.seed = 9;
  return f;
}

}  // namespace

TEST(Generate, NoiselessDriftShiftsOneColumnExactly) {
  auto f = small_field(0.0);
  auto reg = lattice_registry(f.rows, f.cols);
  auto grid = embed(reg);
  auto out = generate(f, make_curves(reg.size(), PowerCurve{}, 0.0, 1), grid);
  for (std::size_t t = 0; t + 1 < f.steps; ++t)
    for (std::size_t r = 0; r < f.rows; ++r)
      for (std::size_t c = 0; c < f.cols; ++c) {
        const int now = grid.at(r, c), next = grid.at(r, (c + 1) % f.cols);
        ASSERT_EQ(*out.speed.values[next][t + 1], *out.speed.values[now][t]) << t << " " << r << " " << c;
      }
}

TEST(Generate, BelowCutInGivesZeroPower) {
  FieldConfig f;
  f.rows = 3;
  f.cols = 4;
  f.ambient = 2.0;
  f.steps = 10;
  auto reg = lattice_registry(3, 4);
  auto out = generate(f, make_curves(reg.size(), PowerCurve{}, 0.0, 1), embed(reg));
  for (const auto& row : out.power.values)
    for (const auto& v : row) ASSERT_EQ(*v, 0.0);
}

TEST(Generate, SameSeedByteIdentical) {
  auto f = small_field(0.4);
  auto reg = lattice_registry(f.rows, f.cols);
  auto grid = embed(reg);
  auto curves = make_curves(reg.size(), PowerCurve{}, 0.1, 3);
  auto a = generate(f, curves, grid);
  auto b = generate(f, curves, grid);
  EXPECT_EQ(format_series(a.speed, reg), format_series(b.speed, reg));
  EXPECT_EQ(format_series(a.power, reg), format_series(b.power, reg));
  f.seed = 10;
  auto c = generate(f, curves, grid);
  EXPECT_NE(format_series(a.speed, reg), format_series(c.speed, reg));
}

TEST(Generate, PowerIsPointwiseCurveOfSpeedWithoutJitter) {
  auto f = small_field(0.3);
  auto reg = lattice_registry(f.rows, f.cols);
  PowerCurve curve;
  auto out = generate(f, make_curves(reg.size(), curve, 0.0, 1), embed(reg));
  for (std::size_t i = 0; i < reg.size(); ++i)
    for (std::size_t t = 0; t < f.steps; ++t) ASSERT_EQ(*out.power.values[i][t], curve(*out.speed.values[i][t]));
}

TEST(Generate, JitterChangesPowerNotSpeed) {
  auto f = small_field(0.3);
  auto reg = lattice_registry(f.rows, f.cols);
  auto grid = embed(reg);
  auto plain = generate(f, make_curves(reg.size(), PowerCurve{}, 0.0, 1), grid);
  auto jit = generate(f, make_curves(reg.size(), PowerCurve{}, 0.2, 1), grid);
  EXPECT_EQ(plain.speed.values, jit.speed.values);
  EXPECT_NE(plain.power.values, jit.power.values);
}

TEST(PowerCurve, Shape) {
  PowerCurve c{3.0, 12.0, 16.0, 1.0};
  EXPECT_EQ(c(2.9), 0.0);
  EXPECT_EQ(c(3.0), 0.0);
  EXPECT_EQ(c(12.0), 16.0);
  EXPECT_EQ(c(30.0), 16.0);
  EXPECT_NEAR(c(9.0), 16.0 * (729.0 - 27.0) / (1728.0 - 27.0), 1e-12);
  EXPECT_THROW((PowerCurve{5.0, 4.0, 1.0, 1.0}.validate()), Error);
}

TEST(Generate, AdvectionPeaksAtDriftOffset) {
  auto f = small_field(0.0);
  f.drift_cols = 2.0;
  f.drift_rows = 1.0;
  auto reg = lattice_registry(f.rows, f.cols);
  auto grid = embed(reg);
  auto out = generate(f, make_curves(reg.size(), PowerCurve{}, 0.0, 1), grid);
  const std::size_t t = 4;
  double best = -1e300;
  int best_dr = 0, best_dc = 0;
  for (int dr = 0; dr < int(f.rows); ++dr)
    for (int dc = 0; dc < int(f.cols); ++dc) {
      double corr = 0;
      for (std::size_t r = 0; r < f.rows; ++r)
        for (std::size_t c = 0; c < f.cols; ++c) {
          const double a = *out.speed.values[grid.at(r, c)][t] - f.ambient;
          const double b =
              *out.speed.values[grid.at((r + std::size_t(dr)) % f.rows, (c + std::size_t(dc)) % f.cols)][t + 1] -
              f.ambient;
          corr += a * b;
        }
      if (corr > best) {
        best = corr;
        best_dr = dr;
        best_dc = dc;
      }
    }
  EXPECT_EQ(best_dr, 1);
  EXPECT_EQ(best_dc, 2);
}

TEST(ReferenceScenario, Shape) {
  auto s = reference_scenario();
  EXPECT_DOUBLE_EQ(occupancy(s.grid), 1.0);
  EXPECT_EQ(s.grid.rows, 16u);
  EXPECT_EQ(s.registry.size(), 256u);
  EXPECT_EQ(s.speed.length(), 600u);
  EXPECT_EQ(s.power.length(), 600u);
  EXPECT_DOUBLE_EQ(s.field.noise_sd, 0.05 * s.field.ambient);
  auto plan = plan_samples(s.power.length(), 8, 3, SplitFractions{});
  EXPECT_EQ(plan.base_indices.size(), 590u);
}

TEST(Config, JsonRoundTripAndValidation) {
  auto f = small_field(0.1);
  auto back = field_from_json(to_json(f));
  EXPECT_EQ(back.rows, f.rows);
  EXPECT_EQ(back.blobs.size(), 2u);
  EXPECT_EQ(back.blobs[1].center_col, 6.2);
  auto bad = to_json(f);
  bad["noise_sd"] = -1.0;
  EXPECT_THROW(field_from_json(bad), Error);
  auto s = scenario_from_json({{"field", to_json(f)}, {"jitter", 0.1}});
  EXPECT_EQ(s.registry.size(), f.rows * f.cols);
}
