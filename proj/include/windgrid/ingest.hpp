#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "windgrid/error.hpp"
#include "windgrid/util.hpp"

namespace windgrid {

enum class Variable : std::uint32_t { Power = 0, Speed = 1, Temperature = 2 };

inline std::string_view to_string(Variable v) {
  switch (v) {
    case Variable::Power: return "power";
    case Variable::Speed: return "speed";
    case Variable::Temperature: return "temperature";
  }
  return "unknown";
}

inline Variable parse_variable(std::string_view name) {
  if (name == "power") return Variable::Power;
  if (name == "speed") return Variable::Speed;
  if (name == "temperature") return Variable::Temperature;
  throw Error(ErrorKind::InvalidConfig, "unknown variable '" + std::string(name) + "'");
}

struct Turbine {
  int id = 0;  // canonical, dense 0..n-1
  double latitude = 0.0;
  double longitude = 0.0;
};

/// Turbines indexed by canonical id; `original_ids[id]` is the id used in the source files.
struct TurbineRegistry {
  std::vector<Turbine> entries;
  std::vector<std::int64_t> original_ids;

  std::size_t size() const { return entries.size(); }

  std::optional<int> canonical_id(std::int64_t original) const {
    auto it = std::lower_bound(original_ids.begin(), original_ids.end(), original);
    if (it == original_ids.end() || *it != original) return std::nullopt;
    return static_cast<int>(it - original_ids.begin());
  }
};

/// Builds a canonical registry from (original id, lat, lon) rows; ids are re-indexed in ascending
/// original-id order.
inline TurbineRegistry make_registry(std::vector<std::tuple<std::int64_t, double, double>> rows) {
  if (rows.empty()) throw Error(ErrorKind::EmptyRegistry, "registry has no turbines");
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
  std::set<std::pair<double, double>> seen;
  TurbineRegistry reg;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto [orig, lat, lon] = rows[i];
    if (i > 0 && std::get<0>(rows[i - 1]) == orig)
      throw Error(ErrorKind::DuplicateTurbine, "turbine id " + std::to_string(orig) + " listed twice");
    if (!seen.emplace(lat, lon).second)
      throw Error(ErrorKind::DuplicateCoordinate,
                  "turbine " + std::to_string(orig) + " shares coordinates (" +
                      detail::format_exact(lat) + ", " + detail::format_exact(lon) +
                      ") with another turbine");
    reg.entries.push_back({static_cast<int>(i), lat, lon});
    reg.original_ids.push_back(orig);
  }
  return reg;
}

inline TurbineRegistry parse_registry(const std::vector<std::string>& lines) {
  if (lines.empty()) throw Error(ErrorKind::ParseError, "line 1: missing header row");
  std::vector<std::tuple<std::int64_t, double, double>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    auto f = detail::split_fields(lines[i]);
    auto id = f.size() == 3 ? detail::parse_number<std::int64_t>(f[0]) : std::nullopt;
    auto lat = f.size() == 3 ? detail::parse_number<double>(f[1]) : std::nullopt;
    auto lon = f.size() == 3 ? detail::parse_number<double>(f[2]) : std::nullopt;
    if (!id || !lat || !lon || *id < 0)
      throw Error(ErrorKind::ParseError, "line " + std::to_string(i + 1) +
                                             ": expected 'turbine_id,latitude,longitude'");
    rows.emplace_back(*id, *lat, *lon);
  }
  return make_registry(std::move(rows));
}

inline TurbineRegistry load_registry(const std::string& path) {
  return parse_registry(detail::read_lines(path));
}

inline void write_registry(const std::string& path, const TurbineRegistry& reg) {
  std::string out = "turbine_id,latitude,longitude\n";
  for (const auto& t : reg.entries) {
    out += std::to_string(reg.original_ids[t.id]) + "," + detail::format_exact(t.latitude) + "," +
           detail::format_exact(t.longitude) + "\n";
  }
  detail::write_text(path, out);
}

/// Dense (turbine x time) table on a uniform timestamp lattice. Absent readings are std::nullopt.
struct TelemetrySeries {
  Variable variable = Variable::Power;
  std::int64_t sampling_period = 600;
  std::int64_t start_time = 0;
  std::vector<std::vector<std::optional<double>>> values;  // [turbine][step]

  std::size_t turbine_count() const { return values.size(); }
  std::size_t length() const { return values.empty() ? 0 : values.front().size(); }
  std::int64_t timestamp(std::size_t step) const {
    return start_time + static_cast<std::int64_t>(step) * sampling_period;
  }

  std::size_t gap_count() const {
    std::size_t n = 0;
    for (const auto& row : values)
      n += static_cast<std::size_t>(std::count(row.begin(), row.end(), std::nullopt));
    return n;
  }

  double at(std::size_t turbine, std::size_t step) const {
    const auto& v = values[turbine][step];
    if (!v) throw Error(ErrorKind::GapPresent, "absent reading for turbine " + std::to_string(turbine) +
                                                   " at step " + std::to_string(step));
    return *v;
  }
};

inline TelemetrySeries parse_series(const std::vector<std::string>& lines, const TurbineRegistry& registry,
                                    Variable variable) {
  if (lines.empty()) throw Error(ErrorKind::ParseError, "line 1: missing header row");
  struct Row {
    std::int64_t ts;
    int turbine;
    std::optional<double> value;
  };
  std::vector<Row> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    auto f = detail::split_fields(lines[i]);
    const auto where = "line " + std::to_string(i + 1);
    if (f.size() != 3) throw Error(ErrorKind::ParseError, where + ": expected 'timestamp,turbine_id,value'");
    auto ts = detail::parse_number<std::int64_t>(f[0]);
    auto id = detail::parse_number<std::int64_t>(f[1]);
    if (!ts || !id) throw Error(ErrorKind::ParseError, where + ": bad timestamp or turbine id");
    std::optional<double> value;
    if (!f[2].empty()) {
      value = detail::parse_number<double>(f[2]);
      if (!value) throw Error(ErrorKind::ParseError, where + ": bad value '" + std::string(f[2]) + "'");
    }
    auto canonical = registry.canonical_id(*id);
    if (!canonical)
      throw Error(ErrorKind::UnknownTurbine, where + ": turbine " + std::to_string(*id) + " not in registry");
    rows.push_back({*ts, *canonical, value});
  }
  if (rows.empty()) throw Error(ErrorKind::ParseError, "series has no rows");

  std::vector<std::int64_t> stamps;
  stamps.reserve(rows.size());
  for (const auto& r : rows) stamps.push_back(r.ts);
  std::sort(stamps.begin(), stamps.end());
  stamps.erase(std::unique(stamps.begin(), stamps.end()), stamps.end());

  TelemetrySeries s;
  s.variable = variable;
  s.start_time = stamps.front();
  if (stamps.size() > 1) {
    std::int64_t period = stamps[1] - stamps[0];
    for (std::size_t i = 2; i < stamps.size(); ++i) period = std::min(period, stamps[i] - stamps[i - 1]);
    for (auto t : stamps) {
      if ((t - s.start_time) % period != 0)
        throw Error(ErrorKind::IrregularSampling,
                    "timestamp " + std::to_string(t) + " is off the " + std::to_string(period) + " s lattice");
    }
    s.sampling_period = period;
  }
  const auto steps = static_cast<std::size_t>((stamps.back() - s.start_time) / s.sampling_period) + 1;
  s.values.assign(registry.size(), std::vector<std::optional<double>>(steps));
  std::vector<std::vector<bool>> filled(registry.size(), std::vector<bool>(steps, false));
  for (const auto& r : rows) {
    auto step = static_cast<std::size_t>((r.ts - s.start_time) / s.sampling_period);
    if (filled[r.turbine][step])
      throw Error(ErrorKind::ParseError, "duplicate row for turbine " +
                                             std::to_string(registry.original_ids[r.turbine]) +
                                             " at timestamp " + std::to_string(r.ts));
    filled[r.turbine][step] = true;
    s.values[r.turbine][step] = r.value;
  }
  return s;
}

inline TelemetrySeries load_series(const std::string& path, const TurbineRegistry& registry, Variable variable) {
  return parse_series(detail::read_lines(path), registry, variable);
}

/// Writes one row per present cell, timestamp-major, using original turbine ids.
inline std::string format_series(const TelemetrySeries& series, const TurbineRegistry& registry) {
  std::string out = "timestamp,turbine_id,value\n";
  for (std::size_t t = 0; t < series.length(); ++t) {
    const auto ts = std::to_string(series.timestamp(t));
    for (std::size_t i = 0; i < series.turbine_count(); ++i) {
      const auto& v = series.values[i][t];
      if (!v) continue;
      out += ts;
      out += ',';
      out += std::to_string(registry.original_ids[i]);
      out += ',';
      out += detail::format_exact(*v);
      out += '\n';
    }
  }
  return out;
}

inline void write_series(const std::string& path, const TelemetrySeries& series, const TurbineRegistry& registry) {
  detail::write_text(path, format_series(series, registry));
}

enum class GapPolicy { ForwardFill, Linear, Fail };

inline GapPolicy parse_gap_policy(std::string_view name) {
  if (name == "forward_fill") return GapPolicy::ForwardFill;
  if (name == "linear") return GapPolicy::Linear;
  if (name == "fail") return GapPolicy::Fail;
  throw Error(ErrorKind::InvalidConfig, "unknown gap policy '" + std::string(name) + "'");
}

struct FillReport {
  std::size_t forward_filled = 0;
  std::size_t interpolated = 0;
  std::size_t trailing_held = 0;

  std::size_t total() const { return forward_filled + interpolated + trailing_held; }
};

/// Replaces absent cells. `linear` interpolates interior gaps and holds the last value over a
/// trailing gap; a leading gap has no anchor under either filling policy.
inline TelemetrySeries fill_gaps(TelemetrySeries series, GapPolicy policy, FillReport* report = nullptr) {
  FillReport rep;
  for (std::size_t i = 0; i < series.turbine_count(); ++i) {
    auto& row = series.values[i];
    if (row.empty()) continue;
    if (policy == GapPolicy::Fail) {
      auto it = std::find(row.begin(), row.end(), std::nullopt);
      if (it != row.end())
        throw Error(ErrorKind::GapPresent, "turbine " + std::to_string(i) + " has an absent reading at step " +
                                               std::to_string(it - row.begin()));
      continue;
    }
    if (!row.front())
      throw Error(ErrorKind::LeadingGap, "turbine " + std::to_string(i) + " starts with an absent reading");
    std::size_t last = 0;
    for (std::size_t t = 1; t < row.size(); ++t) {
      if (!row[t]) continue;
      if (t > last + 1) {
        for (std::size_t g = last + 1; g < t; ++g) {
          if (policy == GapPolicy::ForwardFill) {
            row[g] = *row[last];
            ++rep.forward_filled;
          } else {
            const double frac = static_cast<double>(g - last) / static_cast<double>(t - last);
            row[g] = *row[last] + frac * (*row[t] - *row[last]);
            ++rep.interpolated;
          }
        }
      }
      last = t;
    }
    for (std::size_t g = last + 1; g < row.size(); ++g) {
      row[g] = *row[last];
      if (policy == GapPolicy::ForwardFill)
        ++rep.forward_filled;
      else
        ++rep.trailing_held;
    }
  }
  if (report) *report = rep;
  return series;
}

}  // namespace windgrid
