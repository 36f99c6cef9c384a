// windgrid: command-line front end over the header-only library.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "windgrid/parallel.hpp"
#include "windgrid/pipeline.hpp"

namespace fs = std::filesystem;
using namespace windgrid;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

void info(const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); }

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + parent.string() + "': " + ec.message());
}

void write_file(const std::string& path, const std::string& text) {
  ensure_parent(path);
  detail::write_text(path, text);
}

std::pair<std::string, std::string> split_pair(const std::string& s, char sep, const std::string& what) {
  const auto pos = s.find(sep);
  if (pos == std::string::npos || pos == 0 || pos + 1 == s.size())
    throw Error(ErrorKind::InvalidConfig, what + " '" + s + "' must look like A" + sep + "B");
  return {s.substr(0, pos), s.substr(pos + 1)};
}

nlohmann::json read_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(detail::read_binary(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, "'" + path + "' is not valid JSON: " + e.what());
  }
}

struct SplitFlags {
  double train = 0.7, val = 0.1, test = 0.2;
  void add(CLI::App* app) {
    app->add_option("--train", train, "Train fraction")->capture_default_str();
    app->add_option("--val", val, "Validation fraction")->capture_default_str();
    app->add_option("--test", test, "Test fraction")->capture_default_str();
  }
  SplitFractions get() const { return {train, val, test}; }
};

// Subcommands ----------------------------------------------------------------------------------

struct SynthCmd {
  std::string config, out_dir;
  bool reference = false;
  double jitter = 0.0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("synth", "Generate a synthetic wind farm (registry, power and speed series)");
    c->add_option("--config", config, "Scenario JSON (field, curve, jitter)")->check(CLI::ExistingFile);
    c->add_flag("--reference", reference, "Use the fixed 16x16 acceptance scenario");
    c->add_option("--jitter", jitter, "Per-turbine power-curve gain jitter (with --reference)");
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->callback([this] { run(); });
  }
  void run() {
    if (config.empty() == !reference) throw Error(ErrorKind::InvalidConfig, "give exactly one of --config or --reference");
    const auto sc = reference ? reference_scenario(jitter) : scenario_from_json(read_json_file(config));
    fs::create_directories(out_dir);
    const fs::path d(out_dir);
    write_registry((d / "registry.csv").string(), sc.registry);
    write_series((d / "power.csv").string(), sc.power, sc.registry);
    write_series((d / "speed.csv").string(), sc.speed, sc.registry);
    detail::write_text((d / "grid.json").string(), to_json(sc.grid).dump(2) + "\n");
    info("wrote " + std::to_string(sc.registry.size()) + " turbines x " + std::to_string(sc.power.length()) +
         " steps to " + out_dir);
  }
};

struct EmbedCmd {
  std::string registry, out;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("embed", "Map turbines onto the minimal grid of their coordinates");
    c->add_option("--registry", registry, "Registry CSV (turbine_id,latitude,longitude)")->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "Output grid JSON")->required();
    c->callback([this] { run(); });
  }
  void run() {
    const auto grid = embed(load_registry(registry));
    write_file(out, to_json(grid).dump(2) + "\n");
    info("grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + ", occupancy " +
         detail::format_fixed(occupancy(grid), 4));
  }
};

/// Registry + per-variable series flags shared by scenes and baseline.
struct DataFlags {
  std::string registry, gap_policy = "linear";
  std::vector<std::string> series;
  void add(CLI::App* c, const char* series_help) {
    c->add_option("--registry", registry, "Registry CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--series", series, series_help)->required();
    c->add_option("--gap-policy", gap_policy, "forward_fill, linear or fail")->capture_default_str();
  }
  std::map<Variable, TelemetrySeries> load(const TurbineRegistry& reg) const {
    std::map<Variable, TelemetrySeries> out;
    const auto policy = parse_gap_policy(gap_policy);
    for (const auto& s : series) {
      auto [name, path] = split_pair(s, '=', "--series");
      const auto v = parse_variable(name);
      out[v] = fill_gaps(load_series(path, reg, v), policy);
    }
    return out;
  }
};

struct ScenesCmd {
  DataFlags data;
  SplitFlags splits;
  std::size_t window = 8, horizon = 3;
  std::string target = "power", out;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("scenes", "Build spatio-temporal samples (raw units) and write an STF1 file");
    data.add(c, "VARIABLE=PATH, repeatable; channel order follows the flag order");
    c->add_option("--window", window, "Scenes per sample")->capture_default_str();
    c->add_option("--horizon", horizon, "Steps ahead")->capture_default_str();
    c->add_option("--target", target, "Target variable")->capture_default_str();
    splits.add(c);
    c->add_option("--out", out, "Output .stf file")->required();
    c->callback([this] { run(); });
  }
  void run() {
    const auto reg = load_registry(data.registry);
    const auto grid = embed(reg);
    auto loaded = data.load(reg);
    std::vector<TelemetrySeries> series;
    for (const auto& s : data.series) series.push_back(loaded.at(parse_variable(split_pair(s, '=', "--series").first)));
    const auto set = build_samples(grid, series, window, horizon, parse_variable(target), splits.get());
    write_file(out, encode_stf(set));
    info(std::to_string(set.samples.size()) + " samples (" + std::to_string(set.count(Split::Train)) + "/" +
         std::to_string(set.count(Split::Val)) + "/" + std::to_string(set.count(Split::Test)) + "), " +
         std::to_string(set.channels()) + " channels, grid " + std::to_string(set.rows) + "x" + std::to_string(set.cols));
  }
};

struct TrainCmd {
  std::string stf, arch = "fc_cnn", out, curve, optimizer = "adam";
  std::optional<std::size_t> depth, stages, base_channels, hidden;
  bool no_dense = false;
  TrainConfig t;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train an E2E or FC-CNN model on an STF1 file");
    c->add_option("--stf", stf, "Input samples (.stf)")->required()->check(CLI::ExistingFile);
    c->add_option("--arch", arch, "e2e or fc_cnn")->capture_default_str()->check(CLI::IsMember({"e2e", "fc_cnn"}));
    c->add_option("--depth", depth, "E2E encoder depth");
    c->add_option("--stages", stages, "FC-CNN pooling stages");
    c->add_option("--base-channels", base_channels, "Width of the first convolution");
    c->add_option("--hidden", hidden, "FC-CNN hidden width");
    c->add_flag("--no-dense", no_dense, "Disable dense (concatenating) stages");
    c->add_option("--epochs", t.epochs, "Epochs")->capture_default_str();
    c->add_option("--batch-size", t.batch_size, "Mini-batch size")->capture_default_str();
    c->add_option("--optimizer", optimizer, "adam or sgd")->capture_default_str();
    c->add_option("--lr", t.learning_rate, "Learning rate")->capture_default_str();
    c->add_option("--lr-decay", t.lr_decay, "Per-epoch learning-rate factor")->capture_default_str();
    c->add_option("--patience", t.patience, "Early-stopping patience in epochs")->capture_default_str();
    c->add_option("--max-steps", t.max_steps, "Cap on optimizer steps (0 = none)")->capture_default_str();
    c->add_option("--seed", t.seed, "Initialization and shuffling seed")->capture_default_str();
    c->add_option("--out", out, "Output checkpoint (.ckpt)")->required();
    c->add_option("--curve", curve, "Optional learning-curve CSV");
    c->callback([this] { run(); });
  }
  void run() {
    t.optimizer = parse_optimizer(optimizer);
    auto set = decode_stf(detail::read_binary(stf));
    if (!set.norm) set = normalize(set).first;
    nlohmann::json cfg = arch == "e2e" ? E2EConfig{}.to_json() : FcCnnConfig{}.to_json();
    if (depth) cfg["depth"] = *depth;
    if (stages) cfg["stages"] = *stages;
    if (base_channels) cfg["base_channels"] = *base_channels;
    if (hidden) cfg["hidden"] = *hidden;
    if (no_dense) cfg["dense"] = false;
    auto net = build_network(arch, cfg, {set.channels(), set.rows, set.cols}, t.seed);
    info(arch + ": " + std::to_string(net->parameter_count()) + " parameters");
    auto res = train(*net, set, t, [](const EpochRecord& e) {
      info("epoch " + std::to_string(e.epoch) + " train " + detail::format_fixed(e.train_loss, 6) + " val " +
           detail::format_fixed(e.val_loss, 6));
    });
    write_file(out, encode_checkpoint(res.checkpoint));
    if (!curve.empty()) {
      std::string s = "epoch,train_loss,val_loss,steps\n";
      for (const auto& e : res.curve)
        s += std::to_string(e.epoch) + "," + detail::format_exact(e.train_loss) + "," +
             detail::format_exact(e.val_loss) + "," + std::to_string(e.steps) + "\n";
      write_file(curve, s);
    }
    info("best epoch " + std::to_string(res.best_epoch) + ", " + std::to_string(res.steps) + " steps");
  }
};

struct PredictCmd {
  std::vector<std::string> models;
  std::string stf, registry, split = "test", out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("predict", "Predict target scenes; several --model flags average an ensemble");
    c->add_option("--model", models, "Checkpoint (.ckpt), repeatable")->required()->check(CLI::ExistingFile);
    c->add_option("--stf", stf, "Samples to predict (.stf)")->required()->check(CLI::ExistingFile);
    c->add_option("--registry", registry, "Registry CSV, for turbine ids")->required()->check(CLI::ExistingFile);
    c->add_option("--split", split, "train, val, test or all")->capture_default_str()->check(
        CLI::IsMember({"train", "val", "test", "all"}));
    c->add_option("--out", out, "Output CSV (timestamp,turbine_id,value)")->required();
    c->callback([this] { run(); });
  }
  void run() {
    const auto set = decode_stf(detail::read_binary(stf));
    const auto reg = load_registry(registry);
    const auto grid = embed(reg);
    if (grid.rows != set.rows || grid.cols != set.cols)
      throw Error(ErrorKind::ShapeError, "registry grid does not match the samples' grid");
    std::vector<const Sample*> chosen;
    for (const auto& s : set.samples)
      if (split == "all" || to_string(s.split) == split) chosen.push_back(&s);
    const auto inputs = raw_inputs(set, chosen);
    std::vector<ModelCheckpoint> ckpts;
    for (const auto& m : models) ckpts.push_back(load_checkpoint(m));
    const auto scenes = ckpts.size() == 1 ? predict(ckpts[0], inputs) : ensemble_predict(ckpts, inputs);
    write_file(out, format_scene_predictions(scenes, grid, reg));
    info(std::to_string(scenes.size()) + " scenes predicted");
  }
};

struct BaselineCmd {
  DataFlags data;
  SplitFlags splits;
  std::string method = "knn", feature = "sf", out, metric = "euclidean", aggregator = "mean", kernel = "rbf";
  std::size_t window = 8, horizon = 3, neighbors = 8;
  std::optional<double> max_km;
  KnnConfig knn;
  SvrConfig svr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("baseline", "Per-turbine kNN, SVR or persistence on SF/LF features");
    c->add_option("--method", method, "knn, svr or persistence")->capture_default_str()->check(
        CLI::IsMember({"knn", "svr", "persistence"}));
    c->add_option("--feature", feature, "sf or lf")->capture_default_str()->check(CLI::IsMember({"sf", "lf"}));
    data.add(c, "VARIABLE=PATH of the target series");
    c->add_option("--window", window, "Lag window")->capture_default_str();
    c->add_option("--horizon", horizon, "Steps ahead")->capture_default_str();
    splits.add(c);
    c->add_option("--neighbors", neighbors, "LF: nearest turbines joined")->capture_default_str();
    c->add_option("--max-distance-km", max_km, "LF: ignore neighbors farther than this");
    c->add_option("--k", knn.k, "kNN neighbors")->capture_default_str();
    c->add_option("--metric", metric, "euclidean or manhattan")->capture_default_str();
    c->add_option("--aggregator", aggregator, "mean or distance_weighted")->capture_default_str();
    c->add_option("--C", svr.C, "SVR penalty")->capture_default_str();
    c->add_option("--epsilon", svr.epsilon, "SVR tube half-width")->capture_default_str();
    c->add_option("--kernel", kernel, "linear or rbf")->capture_default_str();
    c->add_option("--gamma", svr.gamma, "RBF width (0 = 1/dims)")->capture_default_str();
    c->add_option("--tolerance", svr.tolerance, "SVR KKT tolerance")->capture_default_str();
    c->add_option("--max-iterations", svr.max_iterations, "SVR iteration cap")->capture_default_str();
    c->add_option("--out", out, "Output CSV (timestamp,turbine_id,value)")->required();
    c->callback([this] { run(); });
  }
  void run() {
    if (data.series.size() != 1) throw Error(ErrorKind::InvalidConfig, "baseline takes exactly one --series");
    knn.metric = parse_knn_metric(metric);
    knn.aggregator = parse_knn_aggregator(aggregator);
    svr.kernel = parse_kernel_kind(kernel);
    svr.validate();
    const auto reg = load_registry(data.registry);
    const auto series = data.load(reg).begin()->second;
    const auto kind = parse_feature_kind(feature);
    const auto fs = build_features(series, reg, {kind, window, kind == FeatureKind::SF ? 0 : neighbors, max_km},
                                   horizon, splits.get());
    std::vector<TurbinePredictions> preds;
    if (method == "knn") {
      preds = run_knn(fs, knn);
    } else if (method == "svr") {
      SvrRunStats st;
      preds = run_svr(fs, svr, &st);
      if (st.unconverged)
        info("warning: MaxIterations on " + std::to_string(st.unconverged) + " turbines, worst KKT violation " +
             detail::format_exact(st.max_kkt_violation));
    } else {
      preds = run_persistence(fs);
    }
    write_file(out, format_predictions(preds, reg, series, horizon));
    info(method + "/" + feature + ": AVE MSE " +
         detail::format_fixed(aggregate(method_result(method, preds).turbine_mse).ave, 4));
  }
};

struct EvalCmd {
  std::string registry, actual, variable = "power", out_dir;
  std::vector<std::string> preds, compare;
  double bin_width = 0.05;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Per-turbine MSE, comparison tables and improvement ratios");
    c->add_option("--registry", registry, "Registry CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--actual", actual, "True series CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--variable", variable, "Variable of the true series")->capture_default_str();
    c->add_option("--pred", preds, "NAME=PATH prediction CSV, repeatable, in report order")->required();
    c->add_option("--compare", compare, "REFERENCE,CANDIDATE method names, repeatable");
    c->add_option("--bin-width", bin_width, "Improvement histogram bin width")->capture_default_str();
    c->add_option("--out-dir", out_dir, "Report directory")->required();
    c->callback([this] { run(); });
  }
  void run() {
    const auto reg = load_registry(registry);
    const auto v = parse_variable(variable);
    const auto truth = load_series(actual, reg, v);
    std::vector<MethodResult> results;
    for (const auto& p : preds) {
      auto [name, path] = split_pair(p, '=', "--pred");
      results.push_back({name, series_mse(truth, load_series(path, reg, v)), 0.0});
    }
    ReportOptions opts;
    opts.bin_width = bin_width;
    for (const auto& c : compare) opts.comparisons.push_back(split_pair(c, ',', "--compare"));
    report(results, {reg.original_ids.begin(), reg.original_ids.end()}, out_dir, opts);
    std::cout << render_table(results);
  }
};

struct RunAllCmd {
  std::string config, out_dir;
  bool quiet = false;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("run-all", "Full comparison of every method on shared splits");
    c->add_option("--config", config, "Run configuration JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--out-dir", out_dir, "Override the configured output directory");
    c->add_flag("--quiet", quiet, "No progress messages");
    c->callback([this] { run(); });
  }
  void run() {
    auto cfg = load_run_config(config);
    if (!out_dir.empty()) cfg.output_dir = fs::absolute(out_dir).lexically_normal().string();
    const auto summary = run_all(cfg, quiet ? Logger{} : Logger(info));
    std::cout << render_table(summary.methods);
    info("results in " + summary.output_dir);
  }
};

void print_error(const Error& e) {
  const nlohmann::json j{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}};
  std::fprintf(stderr, "%s\n", j.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"windgrid: spatio-temporal wind power forecasting toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "windgrid 1.0");
  app.footer("Environment: WINDGRID_THREADS caps the worker count (currently " + std::to_string(worker_count()) + ").");

  SynthCmd synth;
  EmbedCmd embed_cmd;
  ScenesCmd scenes;
  TrainCmd train_cmd;
  PredictCmd predict_cmd;
  BaselineCmd baseline;
  EvalCmd eval;
  RunAllCmd run_all_cmd;
  synth.add(app);
  embed_cmd.add(app);
  scenes.add(app);
  train_cmd.add(app);
  predict_cmd.add(app);
  baseline.add(app);
  eval.add(app);
  run_all_cmd.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    std::cout << e.what() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  } catch (const Error& e) {
    print_error(e);
    return kRuntimeError;
  } catch (const std::exception& e) {
    print_error(Error(ErrorKind::IoError, e.what()));
    return kRuntimeError;
  }
  return 0;
}
