#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "windgrid/baselines.hpp"
#include "windgrid/eval_report.hpp"
#include "windgrid/grid_embed.hpp"
#include "windgrid/ingest.hpp"
#include "windgrid/models.hpp"
#include "windgrid/scene_stf.hpp"
#include "windgrid/synth.hpp"
#include "windgrid/train.hpp"

namespace windgrid {

// Config reading with field paths ----------------------------------------------------------------

namespace detail {

/// JSON object view that reports errors as "a.b.c: message" and rejects unknown keys.
class ConfigNode {
 public:
  ConfigNode(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorKind::InvalidConfig, where() + ": expected an object");
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw Error(ErrorKind::InvalidConfig, where(key) + ": " + msg);
  }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const nlohmann::json& raw(const std::string& key) const { return j_.at(key); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    return has(key) ? convert<T>(key) : fallback;
  }
  template <typename T>
  T require(const std::string& key) const {
    if (!has(key)) fail(key, "required field is missing");
    return convert<T>(key);
  }
  /// Missing child reads as an empty object so defaults apply.
  ConfigNode child(const std::string& key) const {
    static const nlohmann::json empty = nlohmann::json::object();
    return has(key) ? ConfigNode(j_.at(key), where(key)) : ConfigNode(empty, where(key));
  }
  void allow_only(std::initializer_list<const char*> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) fail(it.key(), "unknown field");
    }
  }
  /// Runs `parse` on a string field, re-labelling its error with the field path.
  template <typename Fn>
  auto parse(const std::string& key, const std::string& fallback, Fn fn) const {
    const auto s = get<std::string>(key, fallback);
    try {
      return fn(s);
    } catch (const Error& e) {
      fail(key, e.what());
    }
  }

 private:
  template <typename T>
  T convert(const std::string& key) const {
    const auto& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "expected true or false");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0))
        fail(key, "expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(key, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(key, "expected a string");
    }
    return v.get<T>();
  }

  const nlohmann::json& j_;
  std::string path_;
};

}  // namespace detail

struct CnnRunSpec {
  bool enabled = true;
  nlohmann::json arch_config;  // E2EConfig or FcCnnConfig fields
  TrainConfig train;
};

/// Declarative experiment description consumed by `run-all`.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;

  std::optional<nlohmann::json> synthetic;  // synth scenario description, or files below
  std::string registry_path;
  std::vector<std::pair<Variable, std::string>> series_paths;
  GapPolicy gap_policy = GapPolicy::Linear;

  std::size_t window = 8;
  std::size_t horizon = 3;
  Variable target = Variable::Power;
  std::vector<Variable> variables{Variable::Power};
  SplitFractions splits;

  CnnRunSpec e2e{true, E2EConfig{}.to_json(), {}};
  CnnRunSpec fc_cnn{true, FcCnnConfig{}.to_json(), {}};
  bool ensemble = true;

  std::vector<FeatureKind> feature_kinds{FeatureKind::SF, FeatureKind::LF};
  std::size_t neighbors = 8;
  std::optional<double> max_distance_km;
  bool knn_enabled = true;
  KnnConfig knn;
  bool svr_enabled = true;
  SvrConfig svr;
  bool persistence = true;

  ReportOptions report;
  bool default_comparisons = true;
};

namespace detail {

inline TrainConfig parse_train(const ConfigNode& n, std::uint64_t seed) {
  n.allow_only({"epochs", "batch_size", "optimizer", "learning_rate", "lr_decay", "patience", "max_steps", "restore_best"});
  TrainConfig t;
  t.epochs = n.get("epochs", t.epochs);
  t.batch_size = n.get("batch_size", t.batch_size);
  t.optimizer = n.parse("optimizer", "adam", parse_optimizer);
  t.learning_rate = n.get("learning_rate", t.learning_rate);
  t.lr_decay = n.get("lr_decay", t.lr_decay);
  t.patience = n.get("patience", t.patience);
  t.max_steps = n.get("max_steps", t.max_steps);
  t.restore_best = n.get("restore_best", t.restore_best);
  t.seed = seed;
  if (t.batch_size == 0) n.fail("batch_size", "must be positive");
  if (!(t.learning_rate > 0)) n.fail("learning_rate", "must be positive");
  if (!(t.lr_decay > 0 && t.lr_decay <= 1)) n.fail("lr_decay", "must be in (0, 1]");
  return t;
}

inline CnnRunSpec parse_cnn(const ConfigNode& n, const std::string& arch, std::uint64_t seed) {
  CnnRunSpec spec;
  spec.enabled = n.get("enabled", true);
  if (arch == "e2e") {
    n.allow_only({"enabled", "depth", "base_channels", "dense", "train"});
    E2EConfig c;
    c.depth = n.get("depth", c.depth);
    c.base_channels = n.get("base_channels", c.base_channels);
    c.dense = n.get("dense", c.dense);
    spec.arch_config = c.to_json();
  } else {
    n.allow_only({"enabled", "stages", "base_channels", "hidden", "dense", "train"});
    FcCnnConfig c;
    c.stages = n.get("stages", c.stages);
    c.base_channels = n.get("base_channels", c.base_channels);
    c.hidden = n.get("hidden", c.hidden);
    c.dense = n.get("dense", c.dense);
    spec.arch_config = c.to_json();
  }
  try {
    if (arch == "e2e")
      (void)E2EConfig::from_json(spec.arch_config);
    else
      (void)FcCnnConfig::from_json(spec.arch_config);
  } catch (const Error& e) {
    n.fail("", e.what());
  }
  spec.train = parse_train(n.child("train"), seed);
  return spec;
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

}  // namespace detail

/// Relative paths in the config resolve against `base_dir`; referenced input files must exist.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
  detail::ConfigNode root(j, "");
  root.allow_only({"seed", "output_dir", "data", "features", "splits", "models", "baselines", "report"});
  RunConfig c;
  c.seed = root.require<std::uint64_t>("seed");
  c.output_dir = detail::resolve(base_dir, root.get<std::string>("output_dir", "windgrid_out"));

  auto data = root.child("data");
  data.allow_only({"synthetic", "registry", "series", "gap_policy"});
  c.gap_policy = data.parse("gap_policy", "linear", parse_gap_policy);
  if (data.has("synthetic")) {
    if (data.has("registry") || data.has("series"))
      data.fail("synthetic", "cannot be combined with registry/series files");
    if (!data.raw("synthetic").is_object()) data.fail("synthetic", "expected an object");
    c.synthetic = data.raw("synthetic");
  } else {
    c.registry_path = detail::resolve(base_dir, data.require<std::string>("registry"));
    if (!std::filesystem::exists(c.registry_path)) data.fail("registry", "file not found: " + c.registry_path);
    auto series = data.child("series");
    if (!data.has("series")) data.fail("series", "required field is missing");
    for (auto it = data.raw("series").begin(); it != data.raw("series").end(); ++it) {
      Variable v;
      try {
        v = parse_variable(it.key());
      } catch (const Error& e) {
        series.fail(it.key(), e.what());
      }
      const auto path = detail::resolve(base_dir, series.require<std::string>(it.key()));
      if (!std::filesystem::exists(path)) series.fail(it.key(), "file not found: " + path);
      c.series_paths.emplace_back(v, path);
    }
  }

  auto feat = root.child("features");
  feat.allow_only({"window", "horizon", "target", "variables"});
  c.window = feat.get("window", c.window);
  c.horizon = feat.get("horizon", c.horizon);
  if (c.window == 0) feat.fail("window", "must be >= 1");
  if (c.horizon == 0) feat.fail("horizon", "must be >= 1");
  c.target = feat.parse("target", "power", parse_variable);
  if (feat.has("variables")) {
    c.variables.clear();
    const auto& vs = feat.raw("variables");
    if (!vs.is_array() || vs.empty()) feat.fail("variables", "expected a non-empty list of variable names");
    for (std::size_t i = 0; i < vs.size(); ++i) {
      if (!vs[i].is_string()) feat.fail("variables[" + std::to_string(i) + "]", "expected a string");
      try {
        c.variables.push_back(parse_variable(vs[i].get<std::string>()));
      } catch (const Error& e) {
        feat.fail("variables[" + std::to_string(i) + "]", e.what());
      }
    }
  } else {
    c.variables = {c.target};
  }
  if (std::find(c.variables.begin(), c.variables.end(), c.target) == c.variables.end())
    feat.fail("target", "must be one of the input variables");
  if (!c.synthetic) {
    for (auto v : c.variables) {
      const bool found = std::any_of(c.series_paths.begin(), c.series_paths.end(), [&](auto& p) { return p.first == v; });
      if (!found) feat.fail("variables", "no data.series entry for '" + std::string(to_string(v)) + "'");
    }
  } else {
    for (auto v : c.variables)
      if (v == Variable::Temperature) feat.fail("variables", "synthetic data provides power and speed only");
  }

  auto splits = root.child("splits");
  splits.allow_only({"train", "val", "test"});
  c.splits.train = splits.get("train", c.splits.train);
  c.splits.val = splits.get("val", c.splits.val);
  c.splits.test = splits.get("test", c.splits.test);
  try {
    c.splits.validate();
  } catch (const Error& e) {
    splits.fail("", e.what());
  }

  auto models = root.child("models");
  models.allow_only({"e2e", "fc_cnn", "ensemble"});
  c.e2e = detail::parse_cnn(models.child("e2e"), "e2e", c.seed);
  c.fc_cnn = detail::parse_cnn(models.child("fc_cnn"), "fc_cnn", c.seed);
  c.ensemble = models.get("ensemble", c.ensemble);

  auto base = root.child("baselines");
  base.allow_only({"features", "neighbors", "max_distance_km", "knn", "svr", "persistence"});
  if (base.has("features")) {
    c.feature_kinds.clear();
    const auto& fs = base.raw("features");
    if (!fs.is_array()) base.fail("features", "expected a list such as [\"sf\", \"lf\"]");
    for (std::size_t i = 0; i < fs.size(); ++i) {
      try {
        c.feature_kinds.push_back(parse_feature_kind(fs[i].is_string() ? fs[i].get<std::string>() : "?"));
      } catch (const Error& e) {
        base.fail("features[" + std::to_string(i) + "]", e.what());
      }
    }
  }
  c.neighbors = base.get("neighbors", c.neighbors);
  if (base.has("max_distance_km")) {
    c.max_distance_km = base.get("max_distance_km", 0.0);
    if (!(*c.max_distance_km > 0)) base.fail("max_distance_km", "must be > 0");
  }
  auto knn = base.child("knn");
  knn.allow_only({"enabled", "k", "metric", "aggregator"});
  c.knn_enabled = knn.get("enabled", true);
  c.knn.k = knn.get("k", c.knn.k);
  if (c.knn.k == 0) knn.fail("k", "must be >= 1");
  c.knn.metric = knn.parse("metric", "euclidean", parse_knn_metric);
  c.knn.aggregator = knn.parse("aggregator", "mean", parse_knn_aggregator);
  auto svr = base.child("svr");
  svr.allow_only({"enabled", "C", "epsilon", "kernel", "gamma", "tolerance", "max_iterations"});
  c.svr_enabled = svr.get("enabled", true);
  c.svr.C = svr.get("C", c.svr.C);
  c.svr.epsilon = svr.get("epsilon", c.svr.epsilon);
  c.svr.kernel = svr.parse("kernel", "rbf", parse_kernel_kind);
  c.svr.gamma = svr.get("gamma", c.svr.gamma);
  c.svr.tolerance = svr.get("tolerance", c.svr.tolerance);
  c.svr.max_iterations = svr.get("max_iterations", c.svr.max_iterations);
  try {
    c.svr.validate();
  } catch (const Error& e) {
    svr.fail("", e.what());
  }
  c.persistence = base.get("persistence", c.persistence);

  auto rep = root.child("report");
  rep.allow_only({"bin_width", "decimals", "comparisons"});
  c.report.bin_width = rep.get("bin_width", c.report.bin_width);
  if (!(c.report.bin_width > 0)) rep.fail("bin_width", "must be > 0");
  c.report.decimals = static_cast<int>(rep.get<std::size_t>("decimals", 2));
  if (rep.has("comparisons")) {
    c.default_comparisons = false;
    const auto& cs = rep.raw("comparisons");
    if (!cs.is_array()) rep.fail("comparisons", "expected a list of [reference, candidate] pairs");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (!cs[i].is_array() || cs[i].size() != 2 || !cs[i][0].is_string() || !cs[i][1].is_string())
        rep.fail("comparisons[" + std::to_string(i) + "]", "expected [reference, candidate] method names");
      c.report.comparisons.emplace_back(cs[i][0].get<std::string>(), cs[i][1].get<std::string>());
    }
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = detail::read_binary(path);
  } catch (const Error&) {
    throw Error(ErrorKind::IoError, "cannot read config '" + path + "'");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, std::filesystem::absolute(path).parent_path());
}

/// Effective configuration with every default filled in.
inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json data = json::object();
  if (c.synthetic) {
    data["synthetic"] = *c.synthetic;
  } else {
    data["registry"] = c.registry_path;
    json s = json::object();
    for (auto& [v, p] : c.series_paths) s[std::string(to_string(v))] = p;
    data["series"] = s;
  }
  data["gap_policy"] = c.gap_policy == GapPolicy::Linear ? "linear" : c.gap_policy == GapPolicy::ForwardFill ? "forward_fill" : "fail";
  json vars = json::array();
  for (auto v : c.variables) vars.push_back(std::string(to_string(v)));
  auto train_json = [](const TrainConfig& t) {
    return json{{"epochs", t.epochs},         {"batch_size", t.batch_size},
                {"optimizer", t.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
                {"learning_rate", t.learning_rate}, {"lr_decay", t.lr_decay}, {"patience", t.patience},
                {"max_steps", t.max_steps},   {"restore_best", t.restore_best}};
  };
  auto cnn_json = [&](const CnnRunSpec& s) {
    json j = s.arch_config;
    j["enabled"] = s.enabled;
    j["train"] = train_json(s.train);
    return j;
  };
  json feats = json::array();
  for (auto k : c.feature_kinds) feats.push_back(k == FeatureKind::SF ? "sf" : "lf");
  json comps = json::array();
  for (auto& [a, b] : c.report.comparisons) comps.push_back({a, b});
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"data", data},
      {"features", {{"window", c.window}, {"horizon", c.horizon}, {"target", std::string(to_string(c.target))}, {"variables", vars}}},
      {"splits", {{"train", c.splits.train}, {"val", c.splits.val}, {"test", c.splits.test}}},
      {"models", {{"e2e", cnn_json(c.e2e)}, {"fc_cnn", cnn_json(c.fc_cnn)}, {"ensemble", c.ensemble}}},
      {"baselines",
       {{"features", feats},
        {"neighbors", c.neighbors},
        {"max_distance_km", c.max_distance_km ? json(*c.max_distance_km) : json(nullptr)},
        {"knn",
         {{"enabled", c.knn_enabled},
          {"k", c.knn.k},
          {"metric", c.knn.metric == KnnMetric::Euclidean ? "euclidean" : "manhattan"},
          {"aggregator", c.knn.aggregator == KnnAggregator::Mean ? "mean" : "distance_weighted"}}},
        {"svr",
         {{"enabled", c.svr_enabled},
          {"C", c.svr.C},
          {"epsilon", c.svr.epsilon},
          {"kernel", c.svr.kernel == KernelKind::Rbf ? "rbf" : "linear"},
          {"gamma", c.svr.gamma},
          {"tolerance", c.svr.tolerance},
          {"max_iterations", c.svr.max_iterations}}},
        {"persistence", c.persistence}}},
      {"report", {{"bin_width", c.report.bin_width}, {"decimals", c.report.decimals}, {"comparisons", comps}}},
  };
}

// Data -----------------------------------------------------------------------------------------

struct LoadedData {
  TurbineRegistry registry;
  GridMap grid;
  std::map<Variable, TelemetrySeries> series;  // gap-filled
  std::size_t filled_cells = 0;
};

inline LoadedData load_data(const RunConfig& c) {
  LoadedData d;
  if (c.synthetic) {
    auto sc = scenario_from_json(*c.synthetic);
    d.registry = std::move(sc.registry);
    d.grid = std::move(sc.grid);
    d.series[Variable::Power] = std::move(sc.power);
    d.series[Variable::Speed] = std::move(sc.speed);
    return d;
  }
  d.registry = load_registry(c.registry_path);
  d.grid = embed(d.registry);
  for (const auto& [v, path] : c.series_paths) {
    FillReport rep;
    d.series[v] = fill_gaps(load_series(path, d.registry, v), c.gap_policy, &rep);
    d.filled_cells += rep.total();
  }
  return d;
}

// Predictions ----------------------------------------------------------------------------------

/// Per-turbine view of scene predictions for `samples` (in the same order as `scenes`).
inline std::vector<TurbinePredictions> turbine_predictions(const GridMap& grid, const std::vector<const Sample*>& samples,
                                                           const std::vector<Scene>& scenes) {
  if (samples.size() != scenes.size()) throw Error(ErrorKind::LengthError, "one predicted scene per sample required");
  const auto cells = cell_index_by_turbine(grid);
  std::vector<TurbinePredictions> out(cells.size());
  for (std::size_t t = 0; t < cells.size(); ++t) {
    out[t].turbine = t;
    for (std::size_t k = 0; k < samples.size(); ++k) {
      out[t].base_index.push_back(samples[k]->base_index);
      out[t].prediction.push_back(scenes[k].values[cells[t]]);
      out[t].actual.push_back(samples[k]->target.values[cells[t]]);
    }
  }
  return out;
}

/// Inputs of the chosen samples in source units (undoes normalization when the set carries it).
inline std::vector<StfTensor> raw_inputs(const SampleSet& set, const std::vector<const Sample*>& samples) {
  std::vector<StfTensor> out;
  const std::size_t plane = set.rows * set.cols;
  for (const auto* s : samples) {
    out.push_back(s->input);
    if (!set.norm) continue;
    auto& x = out.back();
    for (std::size_t c = 0; c < x.channels; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        if (set.mask[i]) x.data[c * plane + i] = set.norm->denormalize(x.channel_spec[c].variable, x.data[c * plane + i]);
  }
  return out;
}

/// Predicted scenes as `timestamp,turbine_id,value` rows; scene timestamps are target times.
inline std::string format_scene_predictions(const std::vector<Scene>& scenes, const GridMap& grid,
                                            const TurbineRegistry& reg) {
  const auto cells = cell_index_by_turbine(grid);
  std::string out = "timestamp,turbine_id,value\n";
  for (const auto& sc : scenes)
    for (std::size_t t = 0; t < cells.size(); ++t)
      out += std::to_string(sc.timestamp) + "," + std::to_string(reg.original_ids[t]) + "," +
             detail::format_exact(sc.values[cells[t]]) + "\n";
  return out;
}

/// `timestamp,turbine_id,value` rows (the telemetry format), stamped at the target time.
inline std::string format_predictions(const std::vector<TurbinePredictions>& preds, const TurbineRegistry& reg,
                                      const TelemetrySeries& timeline, std::size_t horizon, bool actual = false) {
  std::vector<std::tuple<std::int64_t, std::int64_t, double>> rows;
  for (const auto& p : preds)
    for (std::size_t k = 0; k < p.base_index.size(); ++k)
      rows.emplace_back(timeline.timestamp(p.base_index[k] + horizon), reg.original_ids[p.turbine],
                        actual ? p.actual[k] : p.prediction[k]);
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
  });
  std::string out = "timestamp,turbine_id,value\n";
  for (const auto& [ts, id, v] : rows)
    out += std::to_string(ts) + "," + std::to_string(id) + "," + detail::format_exact(v) + "\n";
  return out;
}

/// Per-turbine MSE of `predicted` against `actual`, over the steps where the prediction is present.
inline std::vector<double> series_mse(const TelemetrySeries& actual, const TelemetrySeries& predicted) {
  if (actual.turbine_count() != predicted.turbine_count())
    throw Error(ErrorKind::LengthError, "prediction and truth cover different turbine counts");
  if (predicted.sampling_period != actual.sampling_period)
    throw Error(ErrorKind::IrregularSampling, "prediction and truth use different sampling periods");
  std::vector<double> out;
  for (std::size_t t = 0; t < actual.turbine_count(); ++t) {
    std::vector<double> r, p;
    for (std::size_t k = 0; k < predicted.values[t].size(); ++k) {
      if (!predicted.values[t][k]) continue;
      const std::int64_t ts = predicted.timestamp(k);
      const std::int64_t offset = ts - actual.start_time;
      if (offset < 0 || offset % actual.sampling_period != 0 ||
          std::size_t(offset / actual.sampling_period) >= actual.values[t].size())
        throw Error(ErrorKind::LengthError, "prediction at timestamp " + std::to_string(ts) + " has no true value");
      r.push_back(actual.at(t, std::size_t(offset / actual.sampling_period)));
      p.push_back(*predicted.values[t][k]);
    }
    if (r.empty()) throw Error(ErrorKind::EmptySeries, "no predictions for turbine " + std::to_string(t));
    out.push_back(mse(r, p));
  }
  return out;
}

// run-all --------------------------------------------------------------------------------------

struct RunSummary {
  std::vector<MethodResult> methods;
  std::string output_dir;
  nlohmann::json diagnostics;
};

using Logger = std::function<void(const std::string&)>;

namespace detail {

inline std::string method_slug(std::string name) {
  for (auto& ch : name) ch = (ch == '+' || ch == '-') ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return name;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string curve_csv(const std::vector<EpochRecord>& curve) {
  std::string s = "epoch,train_loss,val_loss,steps\n";
  for (const auto& e : curve)
    s += std::to_string(e.epoch) + "," + format_exact(e.train_loss) + "," + format_exact(e.val_loss) + "," +
         std::to_string(e.steps) + "\n";
  return s;
}

/// Writes into `<out>.partial` and renames it to `<out>` only when `body` succeeds.
template <typename Fn>
void with_staging_dir(const std::filesystem::path& out, Fn body) {
  namespace fs = std::filesystem;
  auto staging = out;
  staging += ".partial";
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + staging.string() + "': " + ec.message());
  try {
    body(staging);
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  fs::remove_all(out, ec);
  fs::rename(staging, out, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot move results into '" + out.string() + "': " + ec.message());
}

}  // namespace detail

/// The full comparison: CNNs on the shared scene dataset, SF/LF baselines and persistence on
/// identical splits, per-turbine MSE, reports. Output is byte-identical across runs except timing.csv.
inline RunSummary run_all(const RunConfig& cfg, const Logger& log = {}) {
  auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  RunSummary summary;
  summary.output_dir = cfg.output_dir;
  detail::with_staging_dir(cfg.output_dir, [&](const std::filesystem::path& out) {
    namespace fs = std::filesystem;
    const auto file = [&](const std::string& rel) { return (out / rel).string(); };
    fs::create_directories(out / "predictions");
    fs::create_directories(out / "models");
    detail::write_text(file("config.json"), to_json(cfg).dump(2) + "\n");

    auto data = load_data(cfg);
    const auto& target_series = data.series.at(cfg.target);
    std::vector<TelemetrySeries> inputs;
    for (auto v : cfg.variables) inputs.push_back(data.series.at(v));
    say("data: " + std::to_string(data.registry.size()) + " turbines, " + std::to_string(target_series.length()) +
        " steps, grid " + std::to_string(data.grid.rows) + "x" + std::to_string(data.grid.cols));

    const auto raw = build_samples(data.grid, inputs, cfg.window, cfg.horizon, cfg.target, cfg.splits);
    if (raw.count(Split::Test) == 0) throw Error(ErrorKind::InvalidConfig, "splits: test split is empty");
    auto [set, stats] = normalize(raw);
    std::vector<const Sample*> test;
    std::vector<StfTensor> test_inputs;
    for (const auto& s : raw.samples)
      if (s.split == Split::Test) {
        test.push_back(&s);
        test_inputs.push_back(s.input);
      }

    nlohmann::json diag;
    diag["fingerprint"] = std::to_string(raw.fingerprint);
    diag["samples"] = {{"train", raw.count(Split::Train)}, {"val", raw.count(Split::Val)}, {"test", raw.count(Split::Test)}};
    diag["filled_cells"] = data.filled_cells;

    std::vector<MethodResult> results;
    std::map<std::string, std::vector<TurbinePredictions>> preds;
    auto add = [&](const std::string& name, std::vector<TurbinePredictions> p, double seconds) {
      results.push_back(method_result(name, p, seconds));
      detail::write_text(file("predictions/" + detail::method_slug(name) + ".csv"),
                         format_predictions(p, data.registry, target_series, cfg.horizon));
      say(name + ": AVE MSE " + detail::format_fixed(aggregate(results.back().turbine_mse).ave, 4));
      preds[name] = std::move(p);
    };

    // Baselines on the same plan.
    std::vector<std::pair<std::string, FeatureSet>> feature_sets;
    for (auto kind : cfg.feature_kinds) {
      FeatureSpec spec{kind, cfg.window, kind == FeatureKind::SF ? 0 : cfg.neighbors, cfg.max_distance_km};
      auto fs = build_features(target_series, data.registry, spec, cfg.horizon, cfg.splits);
      if (fs.fingerprint != raw.fingerprint)
        throw Error(ErrorKind::InvalidConfig, "feature plan diverged from the scene plan");
      feature_sets.emplace_back(std::string(to_string(kind)), std::move(fs));
    }
    if (cfg.knn_enabled)
      for (const auto& [tag, fs] : feature_sets) {
        const auto t0 = std::chrono::steady_clock::now();
        auto p = run_knn(fs, cfg.knn);
        add(tag + "+kNN", std::move(p), detail::seconds_since(t0));
      }
    if (cfg.svr_enabled)
      for (const auto& [tag, fs] : feature_sets) {
        const auto t0 = std::chrono::steady_clock::now();
        SvrRunStats st;
        auto p = run_svr(fs, cfg.svr, &st);
        diag["svr"][tag] = {{"unconverged", st.unconverged}, {"max_kkt_violation", st.max_kkt_violation}};
        add(tag + "+SVR", std::move(p), detail::seconds_since(t0));
      }

    // CNNs on the shared scene dataset.
    const std::string prefix = cfg.variables.size() > 1 ? "MSTF" : "STF";
    const InputShape shape{set.channels(), set.rows, set.cols};
    std::vector<ModelCheckpoint> members;
    double member_seconds = 0.0;
    for (const auto& [arch, spec, label] : {std::tuple{std::string("e2e"), cfg.e2e, std::string("E2E")},
                                            std::tuple{std::string("fc_cnn"), cfg.fc_cnn, std::string("FC-CNN")}}) {
      if (!spec.enabled) continue;
      auto net = build_network(arch, spec.arch_config, shape, cfg.seed);
      say(prefix + "+" + label + ": training " + std::to_string(net->parameter_count()) + " parameters");
      const auto t0 = std::chrono::steady_clock::now();
      auto res = train(*net, set, spec.train, [&](const EpochRecord& e) {
        if (e.epoch % 10 == 0)
          say("  epoch " + std::to_string(e.epoch) + " train " + detail::format_fixed(e.train_loss, 6) + " val " +
              detail::format_fixed(e.val_loss, 6));
      });
      const double seconds = detail::seconds_since(t0);
      member_seconds += seconds;
      save_checkpoint(file("models/" + arch + ".ckpt"), res.checkpoint);
      detail::write_text(file("models/" + arch + "_curve.csv"), detail::curve_csv(res.curve));
      diag["models"][arch] = {{"parameters", net->parameter_count()}, {"epochs", res.curve.size()},
                              {"best_epoch", res.best_epoch},       {"steps", res.steps},
                              {"early_stopped", res.early_stopped}};
      add(prefix + "+" + label, turbine_predictions(data.grid, test, predict(*net, res.checkpoint, test_inputs)), seconds);
      members.push_back(std::move(res.checkpoint));
    }
    if (cfg.ensemble && members.size() == 2)
      add(prefix + "-ensemble", turbine_predictions(data.grid, test, ensemble_predict(members, test_inputs)),
          member_seconds);

    if (cfg.persistence && !feature_sets.empty()) {
      const auto t0 = std::chrono::steady_clock::now();
      add("Persistence", run_persistence(feature_sets.front().second), detail::seconds_since(t0));
    } else if (cfg.persistence) {
      FeatureSpec spec{FeatureKind::SF, cfg.window, 0, std::nullopt};
      add("Persistence", run_persistence(build_features(target_series, data.registry, spec, cfg.horizon, cfg.splits)), 0.0);
    }
    if (results.empty()) throw Error(ErrorKind::InvalidConfig, "every method is disabled");
    detail::write_text(file("predictions/actual.csv"),
                       format_predictions(preds.begin()->second, data.registry, target_series, cfg.horizon, true));

    ReportOptions opts = cfg.report;
    if (cfg.default_comparisons) {
      auto has = [&](const std::string& m) { return preds.count(m) > 0; };
      const std::string fc = prefix + "+FC-CNN";
      for (const char* ref : {"LF+SVR", "LF+kNN", "Persistence"})
        if (has(ref) && has(fc)) opts.comparisons.emplace_back(ref, fc);
    }
    std::vector<std::int64_t> ids(data.registry.original_ids.begin(), data.registry.original_ids.end());
    report(results, ids, out.string(), opts);
    detail::write_text(file("diagnostics.json"), diag.dump(2) + "\n");
    summary.methods = std::move(results);
    summary.diagnostics = std::move(diag);
  });
  return summary;
}

}  // namespace windgrid
