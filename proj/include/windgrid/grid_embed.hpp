#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "windgrid/error.hpp"
#include "windgrid/ingest.hpp"

namespace windgrid {

/// Turbine-id matrix over the grid induced by the unique sorted latitudes (rows) and
/// longitudes (columns). Empty cells hold -1. Row 0 is the smallest latitude.
struct GridMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> cells;  // row-major, rows*cols
  std::vector<double> row_coords;
  std::vector<double> col_coords;

  int at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
  std::size_t cell_count() const { return rows * cols; }

  std::size_t turbine_count() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](int v) { return v >= 0; }));
  }

  /// true where a turbine sits
  std::vector<bool> mask() const {
    std::vector<bool> m(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) m[i] = cells[i] >= 0;
    return m;
  }

  bool operator==(const GridMap&) const = default;
};

namespace detail {
inline std::vector<double> unique_sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline std::size_t exact_index(const std::vector<double>& sorted, double x) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), x);
  // membership holds by construction: `sorted` was built from the same coordinates
  return static_cast<std::size_t>(it - sorted.begin());
}
}  // namespace detail

inline GridMap embed(const TurbineRegistry& registry) {
  GridMap g;
  std::vector<double> lats, lons;
  lats.reserve(registry.size());
  lons.reserve(registry.size());
  for (const auto& t : registry.entries) {
    lats.push_back(t.latitude);
    lons.push_back(t.longitude);
  }
  g.row_coords = detail::unique_sorted(std::move(lats));
  g.col_coords = detail::unique_sorted(std::move(lons));
  g.rows = g.row_coords.size();
  g.cols = g.col_coords.size();
  g.cells.assign(g.rows * g.cols, -1);
  for (const auto& t : registry.entries) {
    const auto r = detail::exact_index(g.row_coords, t.latitude);
    const auto c = detail::exact_index(g.col_coords, t.longitude);
    int& cell = g.cells[r * g.cols + c];
    if (cell != -1)
      throw Error(ErrorKind::CellCollision, "turbines " + std::to_string(cell) + " and " + std::to_string(t.id) +
                                                " map to cell (" + std::to_string(r) + ", " + std::to_string(c) + ")");
    cell = t.id;
  }
  return g;
}

inline std::pair<std::size_t, std::size_t> locate(const GridMap& grid, int turbine_id) {
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    if (grid.cells[i] == turbine_id && turbine_id >= 0) return {i / grid.cols, i % grid.cols};
  }
  throw Error(ErrorKind::UnknownTurbine, "turbine " + std::to_string(turbine_id) + " is not on the grid");
}

/// Index of every turbine's cell, by canonical id.
inline std::vector<std::size_t> cell_index_by_turbine(const GridMap& grid) {
  std::vector<std::size_t> out(grid.turbine_count());
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    const int id = grid.cells[i];
    if (id < 0) continue;
    if (static_cast<std::size_t>(id) >= out.size())
      throw Error(ErrorKind::UnknownTurbine, "grid id " + std::to_string(id) + " exceeds turbine count");
    out[static_cast<std::size_t>(id)] = i;
  }
  return out;
}

inline double occupancy(const GridMap& grid) {
  if (grid.cell_count() == 0) return 0.0;
  return static_cast<double>(grid.turbine_count()) / static_cast<double>(grid.cell_count());
}

inline nlohmann::json to_json(const GridMap& grid) {
  nlohmann::json j;
  j["rows"] = grid.rows;
  j["cols"] = grid.cols;
  j["cells"] = grid.cells;
  j["row_coords"] = grid.row_coords;
  j["col_coords"] = grid.col_coords;
  return j;
}

inline GridMap grid_from_json(const nlohmann::json& j) {
  GridMap g;
  try {
    g.row_coords = j.at("row_coords").get<std::vector<double>>();
    g.col_coords = j.at("col_coords").get<std::vector<double>>();
    g.cells = j.at("cells").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("grid json: ") + e.what());
  }
  g.rows = g.row_coords.size();
  g.cols = g.col_coords.size();
  if (g.cells.size() != g.rows * g.cols)
    throw Error(ErrorKind::FormatError, "grid json: cells length does not match row/col coordinates");
  return g;
}

}  // namespace windgrid
