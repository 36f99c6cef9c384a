#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "windgrid/grid_embed.hpp"

using namespace windgrid;

namespace {

TurbineRegistry registry_of(const std::vector<std::pair<double, double>>& coords) {
  std::vector<std::tuple<std::int64_t, double, double>> rows;
  for (std::size_t i = 0; i < coords.size(); ++i)
    rows.emplace_back(static_cast<std::int64_t>(i), coords[i].first, coords[i].second);
  return make_registry(rows);
}

// Rasterizes scaled-down coordinates onto a uniform pixel lattice whose pitch is the smallest
// coordinate spacing, the way a plain map rendering would.
double naive_raster_occupancy(const TurbineRegistry& reg) {
  auto pitch = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double best = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      const double d = v[i] - v[i - 1];
      if (d > 0 && (best == 0.0 || d < best)) best = d;
    }
    return std::make_tuple(best, v.front(), v.back());
  };
  std::vector<double> la, lo;
  for (const auto& t : reg.entries) {
    la.push_back(t.latitude);
    lo.push_back(t.longitude);
  }
  auto [pla, la0, la1] = pitch(la);
  auto [plo, lo0, lo1] = pitch(lo);
  const double h = pla > 0 ? std::floor((la1 - la0) / pla + 1e-9) + 1 : 1;
  const double w = plo > 0 ? std::floor((lo1 - lo0) / plo + 1e-9) + 1 : 1;
  return static_cast<double>(reg.size()) / (h * w);
}

}  // namespace

TEST(Embed, ThreeTurbineHandTrace) {
  // unique lats [10.0, 10.5] -> rows; unique lons [20.0, 20.7] -> cols
  // id0 (10.0,20.0)->(0,0); id1 (10.5,20.0)->(1,0); id2 (10.0,20.7)->(0,1)
  auto g = embed(registry_of({{10.0, 20.0}, {10.5, 20.0}, {10.0, 20.7}}));
  EXPECT_EQ(g.rows, 2u);
  EXPECT_EQ(g.cols, 2u);
  EXPECT_EQ(g.cells, (std::vector<int>{0, 2, 1, -1}));
  EXPECT_EQ(g.row_coords, (std::vector<double>{10.0, 10.5}));
  EXPECT_EQ(g.col_coords, (std::vector<double>{20.0, 20.7}));
  EXPECT_DOUBLE_EQ(occupancy(g), 0.75);
}

TEST(Embed, SingleTurbine) {
  auto g = embed(registry_of({{41.4, 105.0}}));
  EXPECT_EQ(g.rows, 1u);
  EXPECT_EQ(g.cols, 1u);
  EXPECT_EQ(g.cells, std::vector<int>{0});
}

TEST(Embed, SharedLatitudeGivesFullRow) {
  std::vector<std::pair<double, double>> coords;
  for (int i = 0; i < 7; ++i) coords.push_back({41.5, -105.0 + 0.01 * (6 - i)});
  auto g = embed(registry_of(coords));
  EXPECT_EQ(g.rows, 1u);
  EXPECT_EQ(g.cols, 7u);
  EXPECT_EQ(std::count(g.cells.begin(), g.cells.end(), -1), 0);
  EXPECT_DOUBLE_EQ(occupancy(g), 1.0);
  EXPECT_EQ(g.cells.front(), 6);  // westernmost turbine lands in column 0
}

TEST(Locate, InverseLookup) {
  auto g = embed(registry_of({{10.0, 20.0}, {10.5, 20.0}, {10.0, 20.7}}));
  EXPECT_EQ(locate(g, 2), std::make_pair(std::size_t{0}, std::size_t{1}));
  EXPECT_EQ(locate(g, 0), std::make_pair(std::size_t{0}, std::size_t{0}));
  try {
    locate(g, 99);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownTurbine);
  }
  EXPECT_THROW(locate(g, -1), Error);
}

TEST(Embed, CollisionSurfacedNotOverwritten) {
  TurbineRegistry reg;
  reg.entries = {{0, 1.0, 2.0}, {1, 1.0, 2.0}};
  reg.original_ids = {0, 1};
  try {
    embed(reg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CellCollision);
  }
}

TEST(Embed, JsonRoundTrip) {
  auto g = embed(registry_of({{10.0, 20.0}, {10.5, 20.0}, {10.0, 20.7}}));
  EXPECT_EQ(grid_from_json(to_json(g)), g);
  EXPECT_THROW(grid_from_json(nlohmann::json{{"cells", {1}}}), Error);
}

TEST(Occupancy, NaiveRasterScoresFarBelowEmbedding) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lat(41.40, 41.90), lon(-105.34, -105.00);
  std::vector<std::pair<double, double>> coords;
  for (int i = 0; i < 60; ++i) coords.push_back({std::round(lat(rng) * 1e4) / 1e4, std::round(lon(rng) * 1e4) / 1e4});
  auto reg = registry_of(coords);
  const double embedded = occupancy(embed(reg));
  const double naive = naive_raster_occupancy(reg);
  EXPECT_LT(naive, embedded);
  EXPECT_LT(naive, 0.1 * embedded);
}

TEST(EmbedProperties, RandomRegistries) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 40);
    // coarse lattice so latitude/longitude values repeat
    std::set<std::pair<double, double>> used;
    std::vector<std::pair<double, double>> coords;
    while (static_cast<int>(coords.size()) < n) {
      std::pair<double, double> c{41.4 + 0.01 * static_cast<double>(rng() % 12),
                                  -105.3 + 0.01 * static_cast<double>(rng() % 12)};
      if (used.insert(c).second) coords.push_back(c);
    }
    auto reg = registry_of(coords);
    auto g = embed(reg);

    std::vector<int> ids;
    for (int v : g.cells)
      if (v != -1) ids.push_back(v);
    std::sort(ids.begin(), ids.end());
    ASSERT_EQ(ids.size(), static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ASSERT_EQ(ids[static_cast<std::size_t>(i)], i);

    for (const auto& a : reg.entries) {
      auto [ra, ca] = locate(g, a.id);
      ASSERT_EQ(g.row_coords[ra], a.latitude);
      ASSERT_EQ(g.col_coords[ca], a.longitude);
      for (const auto& b : reg.entries) {
        auto [rb, cb] = locate(g, b.id);
        if (a.latitude < b.latitude) {
          ASSERT_LT(ra, rb);
        }
        if (a.longitude < b.longitude) {
          ASSERT_LT(ca, cb);
        }
      }
    }
    for (std::size_t r = 0; r < g.rows; ++r) {
      bool any = false;
      for (std::size_t c = 0; c < g.cols; ++c) any |= g.at(r, c) != -1;
      ASSERT_TRUE(any);
    }
    for (std::size_t c = 0; c < g.cols; ++c) {
      bool any = false;
      for (std::size_t r = 0; r < g.rows; ++r) any |= g.at(r, c) != -1;
      ASSERT_TRUE(any);
    }
    ASSERT_EQ(embed(reg), g);
  }
}
