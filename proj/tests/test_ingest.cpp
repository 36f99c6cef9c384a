#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "windgrid/ingest.hpp"

using namespace windgrid;
using windgrid::testing::TempDir;
using windgrid::testing::write_file;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected windgrid::Error";
  return ErrorKind::IoError;
}

TurbineRegistry two_turbines() {
  return parse_registry({"turbine_id,latitude,longitude", "7,10.0,20.0", "9,10.5,20.0"});
}

}  // namespace

TEST(Registry, ReindexesToDenseIds) {
  auto reg = two_turbines();
  ASSERT_EQ(reg.size(), 2u);
  EXPECT_EQ(reg.entries[0].id, 0);
  EXPECT_EQ(reg.entries[1].id, 1);
  EXPECT_EQ(reg.original_ids[0], 7);
  EXPECT_EQ(reg.original_ids[1], 9);
  EXPECT_EQ(reg.canonical_id(9), 1);
  EXPECT_FALSE(reg.canonical_id(8).has_value());
}

TEST(Registry, OrderIndependentOfFileOrder) {
  auto reg = parse_registry({"turbine_id,latitude,longitude", "9,10.5,20.0", "7,10.0,20.0"});
  EXPECT_EQ(reg.original_ids[0], 7);
  EXPECT_DOUBLE_EQ(reg.entries[0].latitude, 10.0);
}

TEST(Registry, Errors) {
  EXPECT_EQ(kind_of([] { parse_registry({"turbine_id,latitude,longitude"}); }), ErrorKind::EmptyRegistry);
  EXPECT_EQ(kind_of([] { parse_registry({"turbine_id,latitude,longitude", "1,10,20", "2,10,20"}); }),
            ErrorKind::DuplicateCoordinate);
  EXPECT_EQ(kind_of([] { parse_registry({"turbine_id,latitude,longitude", "1,10,20", "1,11,20"}); }),
            ErrorKind::DuplicateTurbine);
  try {
    parse_registry({"turbine_id,latitude,longitude", "1,10,20", "2,abc,20"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Registry, LoadFromFile) {
  TempDir dir("reg");
  auto p = write_file(dir, "reg.csv", "turbine_id,latitude,longitude\n7,10.0,20.0\n9,10.5,20.0\n");
  auto reg = load_registry(p);
  EXPECT_EQ(reg.size(), 2u);
  EXPECT_EQ(kind_of([&] { load_registry(dir.file("missing.csv")); }), ErrorKind::IoError);
}

TEST(Series, DenseTableNoGaps) {
  auto reg = two_turbines();
  auto s = parse_series({"timestamp,turbine_id,value", "0,7,1.0", "0,9,2.0", "600,7,1.5", "600,9,2.5", "1200,7,1.7",
                         "1200,9,2.7"},
                        reg, Variable::Power);
  EXPECT_EQ(s.turbine_count(), 2u);
  EXPECT_EQ(s.length(), 3u);
  EXPECT_EQ(s.gap_count(), 0u);
  EXPECT_EQ(s.sampling_period, 600);
  EXPECT_DOUBLE_EQ(s.at(1, 2), 2.7);
}

TEST(Series, MissingRowBecomesAbsent) {
  auto reg = two_turbines();
  auto s = parse_series({"timestamp,turbine_id,value", "0,7,1.0", "0,9,2.0", "600,7,1.5", "1200,7,1.7", "1200,9,2.7"},
                        reg, Variable::Power);
  EXPECT_EQ(s.gap_count(), 1u);
  EXPECT_FALSE(s.values[1][1].has_value());
}

TEST(Series, Errors) {
  auto reg = two_turbines();
  EXPECT_EQ(kind_of([&] {
              parse_series({"timestamp,turbine_id,value", "0,7,1", "600,7,1", "1300,7,1"}, reg, Variable::Power);
            }),
            ErrorKind::IrregularSampling);
  EXPECT_EQ(kind_of([&] { parse_series({"timestamp,turbine_id,value", "0,8,1"}, reg, Variable::Power); }),
            ErrorKind::UnknownTurbine);
  EXPECT_EQ(kind_of([&] { parse_series({"timestamp,turbine_id,value", "0,7,1", "0,7,2"}, reg, Variable::Power); }),
            ErrorKind::ParseError);
}

TEST(Series, WholeMissingTimestampIsGapNotIrregular) {
  auto reg = two_turbines();
  auto s = parse_series({"timestamp,turbine_id,value", "0,7,1", "0,9,1", "1200,7,1", "1200,9,1"}, reg, Variable::Power);
  EXPECT_EQ(s.length(), 2u);  // min spacing defines the lattice
  EXPECT_EQ(s.sampling_period, 1200);
}

TEST(Series, WriteLoadRoundTripOnRandomDenseTables) {
  TempDir dir("series");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> val(-5.0, 40.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 6);
    std::vector<std::tuple<std::int64_t, double, double>> rows;
    for (int i = 0; i < n; ++i) rows.emplace_back(100 + 3 * i, 40.0 + 0.01 * i, -105.0 + 0.013 * i);
    auto reg = make_registry(rows);
    TelemetrySeries s;
    s.variable = Variable::Speed;
    s.start_time = static_cast<std::int64_t>(rng() % 100000);
    s.sampling_period = 600;
    const std::size_t len = 2 + rng() % 10;
    s.values.assign(static_cast<std::size_t>(n), std::vector<std::optional<double>>(len));
    for (auto& row : s.values)
      for (auto& v : row) v = val(rng);
    auto p = dir.file("s.csv");
    write_series(p, s, reg);
    auto back = load_series(p, reg, Variable::Speed);
    EXPECT_EQ(back.start_time, s.start_time);
    EXPECT_EQ(back.sampling_period, s.sampling_period);
    EXPECT_EQ(back.values, s.values);
  }
}

TEST(FillGaps, LinearAndForwardFill) {
  TelemetrySeries s;
  s.values = {{1.0, std::nullopt, 3.0}};
  FillReport rep;
  auto lin = fill_gaps(s, GapPolicy::Linear, &rep);
  EXPECT_EQ(lin.values[0], (std::vector<std::optional<double>>{1.0, 2.0, 3.0}));
  EXPECT_EQ(rep.interpolated, 1u);
  auto ff = fill_gaps(s, GapPolicy::ForwardFill, &rep);
  EXPECT_EQ(ff.values[0], (std::vector<std::optional<double>>{1.0, 1.0, 3.0}));
  EXPECT_EQ(rep.forward_filled, 1u);
}

TEST(FillGaps, Errors) {
  TelemetrySeries lead;
  lead.values = {{std::nullopt, 2.0}};
  EXPECT_EQ(kind_of([&] { fill_gaps(lead, GapPolicy::ForwardFill); }), ErrorKind::LeadingGap);
  TelemetrySeries mid;
  mid.values = {{1.0, std::nullopt, 2.0}};
  EXPECT_EQ(kind_of([&] { fill_gaps(mid, GapPolicy::Fail); }), ErrorKind::GapPresent);
  EXPECT_NO_THROW(fill_gaps(TelemetrySeries{}, GapPolicy::Fail));
}

TEST(FillGaps, TrailingGapHeldUnderLinear) {
  TelemetrySeries s;
  s.values = {{1.0, 4.0, std::nullopt, std::nullopt}};
  FillReport rep;
  auto out = fill_gaps(s, GapPolicy::Linear, &rep);
  EXPECT_EQ(out.values[0], (std::vector<std::optional<double>>{1.0, 4.0, 4.0, 4.0}));
  EXPECT_EQ(rep.trailing_held, 2u);
}

TEST(FillGaps, PropertiesOnRandomSeries) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> val(0.0, 16.0);
  for (int trial = 0; trial < 200; ++trial) {
    TelemetrySeries s;
    const std::size_t n = 1 + rng() % 4, len = 1 + rng() % 12;
    s.values.assign(n, std::vector<std::optional<double>>(len));
    for (auto& row : s.values) {
      for (std::size_t t = 0; t < len; ++t)
        if (t == 0 || rng() % 3 != 0) row[t] = val(rng);
    }
    for (auto policy : {GapPolicy::Linear, GapPolicy::ForwardFill}) {
      auto out = fill_gaps(s, policy);
      EXPECT_EQ(out.gap_count(), 0u);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < len; ++t)
          if (s.values[i][t]) {
            EXPECT_EQ(out.values[i][t], s.values[i][t]);
          }
    }
  }
}
