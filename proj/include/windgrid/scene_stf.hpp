#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "windgrid/error.hpp"
#include "windgrid/grid_embed.hpp"
#include "windgrid/ingest.hpp"
#include "windgrid/util.hpp"

namespace windgrid {

/// One variable at one timestamp over the grid. Cells without a turbine hold 0 and mask=false.
struct Scene {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<bool> mask;
  std::int64_t timestamp = 0;
  Variable variable = Variable::Power;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

inline Scene build_scene(const GridMap& grid, const std::vector<std::optional<double>>& snapshot,
                         std::int64_t timestamp, Variable variable) {
  Scene s;
  s.rows = grid.rows;
  s.cols = grid.cols;
  s.values.assign(grid.cell_count(), 0.0);
  s.mask.assign(grid.cell_count(), false);
  s.timestamp = timestamp;
  s.variable = variable;
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    const int id = grid.cells[i];
    if (id == -1) continue;
    const auto idx = static_cast<std::size_t>(id);
    if (idx >= snapshot.size() || !snapshot[idx])
      throw Error(ErrorKind::IncompleteSnapshot, "snapshot has no value for turbine " + std::to_string(id));
    s.values[i] = *snapshot[idx];
    s.mask[i] = true;
  }
  return s;
}

inline Scene build_scene(const GridMap& grid, const std::vector<double>& snapshot, std::int64_t timestamp,
                         Variable variable) {
  return build_scene(grid, std::vector<std::optional<double>>(snapshot.begin(), snapshot.end()), timestamp, variable);
}

struct ChannelSpec {
  Variable variable = Variable::Power;
  std::size_t lag = 0;  // steps before base_time; the oldest scene has lag T-1

  bool operator==(const ChannelSpec&) const = default;
};

/// C x H x W stack of scenes, time-major (oldest first), variables in declared order within a step.
struct StfTensor {
  std::size_t channels = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<ChannelSpec> channel_spec;
  std::int64_t base_time = 0;

  double at(std::size_t c, std::size_t r, std::size_t col) const { return data[(c * rows + r) * cols + col]; }
};

inline std::vector<ChannelSpec> make_channel_spec(const std::vector<Variable>& variables, std::size_t window) {
  std::vector<ChannelSpec> spec;
  for (std::size_t step = 0; step < window; ++step)
    for (auto v : variables) spec.push_back({v, window - 1 - step});
  return spec;
}

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

inline Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw Error(ErrorKind::InvalidConfig, "unknown split '" + std::string(name) + "'");
}

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;

  void validate() const {
    if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
      throw Error(ErrorKind::InvalidConfig, "split fractions must be non-negative and sum to 1");
  }
};

/// Chronological assignment of base indices to splits. Every consumer (CNN scenes, SF/LF
/// features, persistence) derives its samples from one of these, and `fingerprint` identifies it.
struct SamplePlan {
  std::size_t window = 0;
  std::size_t horizon = 0;
  std::vector<std::size_t> base_indices;
  std::vector<Split> tags;
  std::uint64_t fingerprint = 0;

  std::size_t count(Split s) const { return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), s)); }
};

inline std::size_t required_length(std::size_t window, std::size_t horizon) { return window + horizon; }

inline SamplePlan plan_samples(std::size_t length, std::size_t window, std::size_t horizon,
                               const SplitFractions& fractions, std::int64_t start_time = 0,
                               std::int64_t sampling_period = 600, Variable target = Variable::Power) {
  if (window < 1) throw Error(ErrorKind::InvalidConfig, "window must be >= 1");
  if (horizon < 1) throw Error(ErrorKind::InvalidConfig, "horizon must be >= 1");
  fractions.validate();
  if (length < required_length(window, horizon))
    throw Error(ErrorKind::InsufficientHistory, "series length " + std::to_string(length) + " < required length " +
                                                    std::to_string(required_length(window, horizon)));
  SamplePlan plan;
  plan.window = window;
  plan.horizon = horizon;
  const std::size_t n = length - window - horizon + 1;
  const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(fractions.val * static_cast<double>(n) + 1e-9));
  detail::Fnv1a h;
  h.value(static_cast<std::uint64_t>(length));
  h.value(static_cast<std::uint64_t>(window));
  h.value(static_cast<std::uint64_t>(horizon));
  h.value(start_time);
  h.value(sampling_period);
  h.value(static_cast<std::uint32_t>(target));
  for (std::size_t i = 0; i < n; ++i) {
    plan.base_indices.push_back(window - 1 + i);
    plan.tags.push_back(i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test));
    h.value(static_cast<std::uint64_t>(plan.base_indices.back()));
    h.value(plan.tags.back());
  }
  plan.fingerprint = h.digest();
  return plan;
}

struct NormRange {
  Variable variable = Variable::Power;
  double min = 0.0;
  double max = 1.0;
};

/// Per-variable min-max ranges over the training split. No clamping outside [min, max].
struct NormStats {
  std::vector<NormRange> ranges;

  const NormRange& range(Variable v) const {
    for (const auto& r : ranges)
      if (r.variable == v) return r;
    throw Error(ErrorKind::CheckpointMismatch, "no normalization range for variable " + std::string(to_string(v)));
  }
  double normalize(Variable v, double x) const {
    const auto& r = range(v);
    return (x - r.min) / (r.max - r.min);
  }
  double denormalize(Variable v, double x) const {
    const auto& r = range(v);
    return r.min + x * (r.max - r.min);
  }
};

struct Sample {
  StfTensor input;
  Scene target;
  Split split = Split::Train;
  std::size_t base_index = 0;
};

struct SampleSet {
  std::vector<Sample> samples;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<bool> mask;
  std::size_t window = 0;
  std::size_t horizon = 0;
  std::int64_t sampling_period = 600;
  std::vector<Variable> variables;
  Variable target_variable = Variable::Power;
  std::optional<NormStats> norm;  // set once values are normalized
  std::uint64_t fingerprint = 0;

  std::size_t channels() const { return variables.size() * window; }
  std::size_t count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [s](const Sample& x) { return x.split == s; }));
  }
  std::vector<const Sample*> of_split(Split s) const {
    std::vector<const Sample*> out;
    for (const auto& x : samples)
      if (x.split == s) out.push_back(&x);
    return out;
  }
};

namespace detail {
inline void check_common_lattice(const std::vector<TelemetrySeries>& series) {
  const auto& a = series.front();
  for (const auto& b : series) {
    if (b.start_time != a.start_time || b.sampling_period != a.sampling_period || b.length() != a.length() ||
        b.turbine_count() != a.turbine_count())
      throw Error(ErrorKind::LatticeMismatch, "series for " + std::string(to_string(b.variable)) +
                                                  " does not share the timestamp lattice of " +
                                                  std::string(to_string(a.variable)));
  }
}
}  // namespace detail

/// Sliding-window scene samples: input scenes at steps i-T+1..i for every variable, target scene of
/// `target` at i+horizon.
inline SampleSet build_samples(const GridMap& grid, const std::vector<TelemetrySeries>& series, std::size_t window,
                               std::size_t horizon, Variable target, const SplitFractions& fractions = {}) {
  if (series.empty()) throw Error(ErrorKind::InvalidConfig, "no input series");
  detail::check_common_lattice(series);
  const auto& ref = series.front();
  if (ref.turbine_count() != grid.turbine_count())
    throw Error(ErrorKind::ShapeError, "series covers " + std::to_string(ref.turbine_count()) +
                                           " turbines but the grid holds " + std::to_string(grid.turbine_count()));
  std::vector<Variable> vars;
  std::optional<std::size_t> target_pos;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (std::find(vars.begin(), vars.end(), series[i].variable) != vars.end())
      throw Error(ErrorKind::InvalidConfig, "variable listed twice: " + std::string(to_string(series[i].variable)));
    vars.push_back(series[i].variable);
    if (series[i].variable == target) target_pos = i;
  }
  if (!target_pos)
    throw Error(ErrorKind::InvalidConfig, "target variable " + std::string(to_string(target)) + " has no series");

  auto plan = plan_samples(ref.length(), window, horizon, fractions, ref.start_time, ref.sampling_period, target);

  // scenes[v][t]
  std::vector<std::vector<Scene>> scenes(series.size());
  std::vector<std::optional<double>> snap(ref.turbine_count());
  for (std::size_t v = 0; v < series.size(); ++v) {
    scenes[v].reserve(ref.length());
    for (std::size_t t = 0; t < ref.length(); ++t) {
      for (std::size_t i = 0; i < snap.size(); ++i) {
        snap[i] = series[v].values[i][t];
        if (!snap[i])
          throw Error(ErrorKind::GapPresent, "absent reading for turbine " + std::to_string(i) + " at step " +
                                                 std::to_string(t) + "; run fill_gaps first");
      }
      scenes[v].push_back(build_scene(grid, snap, ref.timestamp(t), series[v].variable));
    }
  }

  SampleSet set;
  set.rows = grid.rows;
  set.cols = grid.cols;
  set.mask = grid.mask();
  set.window = window;
  set.horizon = horizon;
  set.sampling_period = ref.sampling_period;
  set.variables = vars;
  set.target_variable = target;
  set.fingerprint = plan.fingerprint;
  const auto spec = make_channel_spec(vars, window);
  const std::size_t plane = grid.cell_count();
  for (std::size_t k = 0; k < plan.base_indices.size(); ++k) {
    const std::size_t base = plan.base_indices[k];
    Sample s;
    s.base_index = base;
    s.split = plan.tags[k];
    s.input.channels = spec.size();
    s.input.rows = grid.rows;
    s.input.cols = grid.cols;
    s.input.channel_spec = spec;
    s.input.base_time = ref.timestamp(base);
    s.input.data.resize(spec.size() * plane);
    for (std::size_t c = 0; c < spec.size(); ++c) {
      const std::size_t v =
          static_cast<std::size_t>(std::find(vars.begin(), vars.end(), spec[c].variable) - vars.begin());
      const auto& src = scenes[v][base - spec[c].lag].values;
      std::copy(src.begin(), src.end(), s.input.data.begin() + static_cast<std::ptrdiff_t>(c * plane));
    }
    s.target = scenes[*target_pos][base + horizon];
    set.samples.push_back(std::move(s));
  }
  return set;
}

/// Applies existing ranges to a raw set, touching mask-true cells only.
inline SampleSet apply_normalization(SampleSet set, const NormStats& stats) {
  if (set.norm) throw Error(ErrorKind::InvalidConfig, "sample set is already normalized");
  const std::size_t plane = set.rows * set.cols;
  for (auto& s : set.samples) {
    for (std::size_t c = 0; c < s.input.channels; ++c) {
      const auto& r = stats.range(s.input.channel_spec[c].variable);
      for (std::size_t i = 0; i < plane; ++i)
        if (set.mask[i]) s.input.data[c * plane + i] = (s.input.data[c * plane + i] - r.min) / (r.max - r.min);
    }
    const auto& r = stats.range(set.target_variable);
    for (std::size_t i = 0; i < plane; ++i)
      if (set.mask[i]) s.target.values[i] = (s.target.values[i] - r.min) / (r.max - r.min);
  }
  set.norm = stats;
  return set;
}

inline NormStats fit_normalization(const SampleSet& set) {
  if (set.count(Split::Train) == 0) throw Error(ErrorKind::InsufficientHistory, "train split is empty");
  NormStats stats;
  const std::size_t plane = set.rows * set.cols;
  for (auto v : set.variables) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& s : set.samples) {
      if (s.split != Split::Train) continue;
      for (std::size_t c = 0; c < s.input.channels; ++c) {
        if (s.input.channel_spec[c].variable != v) continue;
        for (std::size_t i = 0; i < plane; ++i) {
          if (!set.mask[i]) continue;
          lo = std::min(lo, s.input.data[c * plane + i]);
          hi = std::max(hi, s.input.data[c * plane + i]);
        }
      }
      if (v == set.target_variable) {
        for (std::size_t i = 0; i < plane; ++i) {
          if (!set.mask[i]) continue;
          lo = std::min(lo, s.target.values[i]);
          hi = std::max(hi, s.target.values[i]);
        }
      }
    }
    if (!(hi > lo))
      throw Error(ErrorKind::DegenerateVariable,
                  std::string(to_string(v)) + " is constant over the training split (" + detail::format_exact(lo) + ")");
    stats.ranges.push_back({v, lo, hi});
  }
  return stats;
}

inline std::pair<SampleSet, NormStats> normalize(const SampleSet& set) {
  auto stats = fit_normalization(set);
  return {apply_normalization(set, stats), stats};
}

inline Scene denormalize(Scene scene, const NormStats& stats) {
  for (std::size_t i = 0; i < scene.values.size(); ++i)
    if (scene.mask[i]) scene.values[i] = stats.denormalize(scene.variable, scene.values[i]);
  return scene;
}

// ---------------------------------------------------------------------------------------------
// STF1 binary container (layout in docs/formats.md)

namespace detail {
template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw Error(ErrorKind::FormatError, "unexpected end of file");
    unsigned char b[sizeof(T)];
    std::memcpy(b, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::string take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw Error(ErrorKind::FormatError, "unexpected end of file");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}
}  // namespace detail

inline std::string encode_stf(const SampleSet& set) {
  std::string out = "STF1";
  const auto C = static_cast<std::uint32_t>(set.channels());
  detail::put_le(out, C);
  detail::put_le(out, static_cast<std::uint32_t>(set.rows));
  detail::put_le(out, static_cast<std::uint32_t>(set.cols));
  detail::put_le(out, static_cast<std::uint32_t>(set.samples.size()));
  detail::put_le(out, static_cast<std::uint32_t>(set.horizon));
  detail::put_le(out, static_cast<std::uint32_t>(set.variables.size()));
  for (auto v : set.variables) detail::put_le(out, static_cast<std::uint32_t>(v));
  detail::put_le(out, static_cast<std::uint32_t>(set.target_variable));
  detail::put_le(out, static_cast<std::uint32_t>(set.window));
  detail::put_le(out, set.sampling_period);
  detail::put_le(out, set.fingerprint);
  for (bool m : set.mask) detail::put_le(out, static_cast<std::uint8_t>(m ? 1 : 0));
  for (const auto& s : set.samples) {
    detail::put_le(out, s.input.base_time);
    detail::put_le(out, static_cast<std::uint32_t>(s.base_index));
    detail::put_le(out, static_cast<std::uint8_t>(s.split));
  }
  for (const auto& s : set.samples) {
    for (double x : s.input.data) detail::put_le(out, static_cast<float>(x));
    for (double x : s.target.values) detail::put_le(out, static_cast<float>(x));
  }
  return out;
}

inline SampleSet decode_stf(std::string bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "STF1") != 0)
    throw Error(ErrorKind::FormatError, "missing STF1 magic");
  detail::ByteReader in(std::move(bytes));
  in.take(4);
  SampleSet set;
  const auto C = in.get<std::uint32_t>();
  set.rows = in.get<std::uint32_t>();
  set.cols = in.get<std::uint32_t>();
  const auto count = in.get<std::uint32_t>();
  set.horizon = in.get<std::uint32_t>();
  const auto V = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < V; ++i) set.variables.push_back(static_cast<Variable>(in.get<std::uint32_t>()));
  set.target_variable = static_cast<Variable>(in.get<std::uint32_t>());
  set.window = in.get<std::uint32_t>();
  set.sampling_period = in.get<std::int64_t>();
  set.fingerprint = in.get<std::uint64_t>();
  if (V == 0 || C != V * set.window) throw Error(ErrorKind::FormatError, "channel count != variables x window");
  const std::size_t plane = set.rows * set.cols;
  set.mask.resize(plane);
  for (std::size_t i = 0; i < plane; ++i) set.mask[i] = in.get<std::uint8_t>() != 0;
  const auto spec = make_channel_spec(set.variables, set.window);
  set.samples.resize(count);
  for (auto& s : set.samples) {
    s.input.base_time = in.get<std::int64_t>();
    s.base_index = in.get<std::uint32_t>();
    const auto tag = in.get<std::uint8_t>();
    if (tag > 2) throw Error(ErrorKind::FormatError, "bad split tag");
    s.split = static_cast<Split>(tag);
  }
  for (auto& s : set.samples) {
    s.input.channels = C;
    s.input.rows = set.rows;
    s.input.cols = set.cols;
    s.input.channel_spec = spec;
    s.input.data.resize(C * plane);
    for (auto& x : s.input.data) x = in.get<float>();
    s.target.rows = set.rows;
    s.target.cols = set.cols;
    s.target.mask = set.mask;
    s.target.variable = set.target_variable;
    s.target.timestamp = s.input.base_time + static_cast<std::int64_t>(set.horizon) * set.sampling_period;
    s.target.values.resize(plane);
    for (auto& x : s.target.values) x = in.get<float>();
  }
  if (!in.done()) throw Error(ErrorKind::FormatError, "trailing bytes after sample block");
  return set;
}

inline void write_stf(const std::string& path, const SampleSet& set) { detail::write_text(path, encode_stf(set)); }

inline SampleSet read_stf(const std::string& path) { return decode_stf(detail::read_binary(path)); }

}  // namespace windgrid
