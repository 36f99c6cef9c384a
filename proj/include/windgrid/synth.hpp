#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "windgrid/error.hpp"
#include "windgrid/grid_embed.hpp"
#include "windgrid/ingest.hpp"

namespace windgrid {

struct Blob {
  double amplitude = 0.0;  // m/s above ambient at the centre
  double center_row = 0.0;
  double center_col = 0.0;
  double width = 1.0;  // Gaussian sigma, cells
};

/// Smooth wind-speed field made of Gaussian blobs translating over a torus.
struct FieldConfig {
  std::size_t rows = 16;
  std::size_t cols = 16;
  std::vector<Blob> blobs;
  double drift_cols = 1.0;  // cells per step along columns (dx)
  double drift_rows = 0.0;  // cells per step along rows (dy)
  double ambient = 4.0;
  double noise_sd = 0.0;
  std::size_t steps = 100;
  std::uint64_t seed = 0;
  std::int64_t start_time = 0;
  std::int64_t sampling_period = 600;

  void validate() const {
    if (rows == 0 || cols == 0) throw Error(ErrorKind::InvalidConfig, "field grid must be non-empty");
    if (steps == 0) throw Error(ErrorKind::InvalidConfig, "steps must be positive");
    if (sampling_period <= 0) throw Error(ErrorKind::InvalidConfig, "sampling_period must be positive");
    if (noise_sd < 0) throw Error(ErrorKind::InvalidConfig, "noise_sd must be >= 0");
    for (const auto& b : blobs) {
      if (b.amplitude < 0) throw Error(ErrorKind::InvalidConfig, "blob amplitude must be >= 0");
      if (!(b.width > 0)) throw Error(ErrorKind::InvalidConfig, "blob width must be > 0");
    }
  }
};

/// 0 below cut-in, cubic ramp (v^3 interpolation) up to rated speed, flat above; scaled by `gain`.
struct PowerCurve {
  double cut_in = 3.0;
  double rated_speed = 12.0;
  double rated_power = 16.0;  // MW
  double gain = 1.0;

  void validate() const {
    if (!(cut_in >= 0 && cut_in < rated_speed)) throw Error(ErrorKind::InvalidConfig, "need 0 <= cut_in < rated_speed");
    if (!(rated_power > 0)) throw Error(ErrorKind::InvalidConfig, "rated_power must be > 0");
    if (!(gain > 0)) throw Error(ErrorKind::InvalidConfig, "gain must be > 0");
  }

  double operator()(double speed) const {
    if (speed < cut_in) return 0.0;
    if (speed >= rated_speed) return gain * rated_power;
    const double lo = cut_in * cut_in * cut_in;
    const double hi = rated_speed * rated_speed * rated_speed;
    return gain * rated_power * (speed * speed * speed - lo) / (hi - lo);
  }
};

namespace detail {
inline double wrap_into(double x, double period) {
  double r = std::fmod(x, period);
  if (r < 0) r += period;
  return r;
}

inline double centered_offset(double d, double period) {
  if (d < -period / 2) d += period;
  if (d >= period / 2) d -= period;
  return d;
}
}  // namespace detail

/// Noise-free speed at a cell. Integer drift shifts the field by whole cells, so the value at
/// (step+1, col+1) equals the value at (step, col) bit-for-bit.
inline double field_value(const FieldConfig& cfg, std::size_t step, std::size_t row, std::size_t col) {
  const double H = static_cast<double>(cfg.rows), W = static_cast<double>(cfg.cols);
  const double t = static_cast<double>(step);
  const double pr = detail::wrap_into(static_cast<double>(row) - t * cfg.drift_rows, H);
  const double pc = detail::wrap_into(static_cast<double>(col) - t * cfg.drift_cols, W);
  double v = cfg.ambient;
  for (const auto& b : cfg.blobs) {
    const double dr = detail::centered_offset(pr - b.center_row, H);
    const double dc = detail::centered_offset(pc - b.center_col, W);
    v += b.amplitude * std::exp(-(dr * dr + dc * dc) / (2.0 * b.width * b.width));
  }
  return v;
}

/// Per-turbine curves with multiplicative gains drawn uniformly from [1 - jitter, 1 + jitter].
inline std::vector<PowerCurve> make_curves(std::size_t n, const PowerCurve& base, double jitter, std::uint64_t seed) {
  if (jitter < 0 || jitter >= 1) throw Error(ErrorKind::InvalidConfig, "jitter must be in [0, 1)");
  std::vector<PowerCurve> out(n, base);
  if (jitter == 0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& c : out) c.gain = base.gain * (1.0 + jitter * u(rng));
  return out;
}

struct SynthOutput {
  TelemetrySeries speed;
  TelemetrySeries power;
};

inline SynthOutput generate(const FieldConfig& cfg, const std::vector<PowerCurve>& curves, const GridMap& grid) {
  cfg.validate();
  if (grid.rows != cfg.rows || grid.cols != cfg.cols)
    throw Error(ErrorKind::ShapeError, "field is " + std::to_string(cfg.rows) + "x" + std::to_string(cfg.cols) +
                                           " but grid is " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
  const auto cells = cell_index_by_turbine(grid);
  const std::size_t n = cells.size();
  if (curves.size() != n)
    throw Error(ErrorKind::InvalidConfig, "need one power curve per turbine (" + std::to_string(n) + ")");
  for (const auto& c : curves) c.validate();

  SynthOutput out;
  for (auto* s : {&out.speed, &out.power}) {
    s->start_time = cfg.start_time;
    s->sampling_period = cfg.sampling_period;
    s->values.assign(n, std::vector<std::optional<double>>(cfg.steps));
  }
  out.speed.variable = Variable::Speed;
  out.power.variable = Variable::Power;

  const auto seed_lo = static_cast<std::uint32_t>(cfg.seed), seed_hi = static_cast<std::uint32_t>(cfg.seed >> 32);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    // independent stream per step keeps any step reproducible on its own
    std::seed_seq seq{seed_lo, seed_hi, static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, cfg.noise_sd > 0 ? cfg.noise_sd : 1.0);
    for (std::size_t id = 0; id < n; ++id) {
      double v = field_value(cfg, t, cells[id] / cfg.cols, cells[id] % cfg.cols);
      if (cfg.noise_sd > 0) v = std::max(0.0, v + noise(rng));
      out.speed.values[id][t] = v;
      out.power.values[id][t] = curves[id](v);
    }
  }
  return out;
}

/// Fully occupied rows x cols lattice; canonical ids are row-major.
inline TurbineRegistry lattice_registry(std::size_t rows, std::size_t cols, double lat0 = 41.40, double lon0 = -105.34,
                                        double dlat = 0.03, double dlon = 0.02) {
  std::vector<std::tuple<std::int64_t, double, double>> r;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      r.emplace_back(static_cast<std::int64_t>(i * cols + j), lat0 + dlat * static_cast<double>(i),
                     lon0 + dlon * static_cast<double>(j));
  return make_registry(std::move(r));
}

struct Scenario {
  TurbineRegistry registry;
  GridMap grid;
  FieldConfig field;
  std::vector<PowerCurve> curves;
  TelemetrySeries speed;
  TelemetrySeries power;
};

inline FieldConfig reference_field() {
  FieldConfig f;
  f.rows = 16;
  f.cols = 16;
  f.blobs = {{9.0, 4.0, 3.0, 2.5}, {7.0, 11.0, 10.0, 3.0}};
  f.drift_cols = 1.0;
  f.drift_rows = 0.0;
  f.ambient = 4.0;
  f.noise_sd = 0.05 * f.ambient;
  f.steps = 600;
  f.seed = 42;
  return f;
}

inline Scenario make_scenario(const FieldConfig& field, const PowerCurve& curve, double jitter,
                              std::uint64_t jitter_seed) {
  Scenario s;
  s.field = field;
  s.registry = lattice_registry(field.rows, field.cols);
  s.grid = embed(s.registry);
  s.curves = make_curves(s.registry.size(), curve, jitter, jitter_seed);
  auto out = generate(field, s.curves, s.grid);
  s.speed = std::move(out.speed);
  s.power = std::move(out.power);
  return s;
}

/// The fixed acceptance scenario: 16x16 fully occupied grid, two blobs drifting one column per
/// step, noise 5% of ambient, 600 steps, seed 42. `jitter` > 0 enables per-turbine gains.
inline Scenario reference_scenario(double jitter = 0.0) { return make_scenario(reference_field(), PowerCurve{}, jitter, 42); }

// JSON ----------------------------------------------------------------------------------------

inline nlohmann::json to_json(const FieldConfig& f) {
  nlohmann::json blobs = nlohmann::json::array();
  for (const auto& b : f.blobs)
    blobs.push_back({{"amplitude", b.amplitude}, {"center_row", b.center_row}, {"center_col", b.center_col},
                     {"width", b.width}});
  return {{"rows", f.rows},         {"cols", f.cols},       {"blobs", blobs},
          {"drift_cols", f.drift_cols}, {"drift_rows", f.drift_rows}, {"ambient", f.ambient},
          {"noise_sd", f.noise_sd}, {"steps", f.steps},     {"seed", f.seed},
          {"start_time", f.start_time}, {"sampling_period", f.sampling_period}};
}

inline FieldConfig field_from_json(const nlohmann::json& j) {
  FieldConfig f;
  f.rows = j.value("rows", f.rows);
  f.cols = j.value("cols", f.cols);
  if (j.contains("blobs")) {
    for (const auto& b : j.at("blobs"))
      f.blobs.push_back({b.at("amplitude").get<double>(), b.at("center_row").get<double>(),
                         b.at("center_col").get<double>(), b.at("width").get<double>()});
  }
  f.drift_cols = j.value("drift_cols", f.drift_cols);
  f.drift_rows = j.value("drift_rows", f.drift_rows);
  f.ambient = j.value("ambient", f.ambient);
  f.noise_sd = j.value("noise_sd", f.noise_sd);
  f.steps = j.value("steps", f.steps);
  f.seed = j.value("seed", f.seed);
  f.start_time = j.value("start_time", f.start_time);
  f.sampling_period = j.value("sampling_period", f.sampling_period);
  f.validate();
  return f;
}

inline PowerCurve curve_from_json(const nlohmann::json& j) {
  PowerCurve c;
  c.cut_in = j.value("cut_in", c.cut_in);
  c.rated_speed = j.value("rated_speed", c.rated_speed);
  c.rated_power = j.value("rated_power", c.rated_power);
  c.validate();
  return c;
}

/// Synthetic dataset description used by `windgrid synth` and `run-all`:
/// {"reference": true, "jitter": 0.1} or {"field": {...}, "curve": {...}, "jitter": 0, "jitter_seed": 7}.
inline Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    const double jitter = j.value("jitter", 0.0);
    if (j.value("reference", false)) return reference_scenario(jitter);
    return make_scenario(field_from_json(j.at("field")), curve_from_json(j.value("curve", nlohmann::json::object())),
                         jitter, j.value("jitter_seed", std::uint64_t{42}));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("synth config: ") + e.what());
  }
}

}  // namespace windgrid
