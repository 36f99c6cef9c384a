#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "windgrid/baselines.hpp"
#include "windgrid/error.hpp"
#include "windgrid/util.hpp"

namespace windgrid {

// Metrics --------------------------------------------------------------------------------------

inline double mse(const std::vector<double>& real, const std::vector<double>& pred) {
  if (real.size() != pred.size())
    throw Error(ErrorKind::LengthError, "mse: " + std::to_string(real.size()) + " true values vs " +
                                            std::to_string(pred.size()) + " predictions");
  if (real.empty()) throw Error(ErrorKind::EmptySeries, "mse: empty series");
  double s = 0.0;
  for (std::size_t i = 0; i < real.size(); ++i) s += (real[i] - pred[i]) * (real[i] - pred[i]);
  return s / double(real.size());
}

/// Population variance; the spread statistic exported next to predictions.
inline double series_variance(const std::vector<double>& v) {
  if (v.empty()) throw Error(ErrorKind::EmptySeries, "variance: empty series");
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / double(v.size());
}

struct Aggregate {
  double max = 0.0;
  double min = 0.0;
  double ave = 0.0;
};

inline Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorKind::EmptySeries, "aggregate: no turbines");
  Aggregate a{values[0], values[0], 0.0};
  for (double v : values) {
    a.max = std::max(a.max, v);
    a.min = std::min(a.min, v);
    a.ave += v;
  }
  a.ave /= double(values.size());
  return a;
}

/// Per-turbine results of one method; `turbine_mse[id]` is indexed by canonical turbine id.
struct MethodResult {
  std::string method;
  std::vector<double> turbine_mse;
  double train_seconds = 0.0;
};

inline MethodResult method_result(std::string method, const std::vector<TurbinePredictions>& preds,
                                  double train_seconds = 0.0) {
  MethodResult r{std::move(method), std::vector<double>(preds.size()), train_seconds};
  for (const auto& p : preds) {
    if (p.turbine >= preds.size()) throw Error(ErrorKind::ShapeError, "turbine id out of range");
    r.turbine_mse[p.turbine] = mse(p.actual, p.prediction);
  }
  return r;
}

// Improvement ratios ---------------------------------------------------------------------------

struct Improvement {
  std::string reference;
  std::string candidate;
  std::vector<std::optional<double>> ratio;  // per turbine; empty where the reference MSE is 0
  std::size_t excluded = 0;
  double mean_ratio = 0.0;      // mean of per-turbine ratios
  double max_ratio = 0.0;
  double ratio_of_means = 0.0;  // (AVE_ref - AVE_cand) / AVE_ref
  double fraction_negative = 0.0;
};

inline Improvement improvement(const MethodResult& reference, const MethodResult& candidate) {
  if (reference.turbine_mse.size() != candidate.turbine_mse.size())
    throw Error(ErrorKind::LengthError, "improvement: '" + reference.method + "' and '" + candidate.method +
                                            "' cover different turbine sets");
  Improvement out{reference.method, candidate.method, {}, 0, 0.0, -INFINITY, 0.0, 0.0};
  std::size_t used = 0, negative = 0;
  for (std::size_t i = 0; i < reference.turbine_mse.size(); ++i) {
    const double r = reference.turbine_mse[i], c = candidate.turbine_mse[i];
    if (!(r > 0.0)) {
      out.ratio.emplace_back();
      ++out.excluded;
      continue;
    }
    const double p = (r - c) / r;
    out.ratio.emplace_back(p);
    out.mean_ratio += p;
    out.max_ratio = std::max(out.max_ratio, p);
    negative += p < 0.0;
    ++used;
  }
  if (used == 0) throw Error(ErrorKind::EmptySeries, "improvement: every reference MSE is zero");
  out.mean_ratio /= double(used);
  out.fraction_negative = double(negative) / double(used);
  const double ref_ave = aggregate(reference.turbine_mse).ave;
  out.ratio_of_means = (ref_ave - aggregate(candidate.turbine_mse).ave) / ref_ave;
  return out;
}

struct DensityBin {
  double center = 0.0;
  double density = 0.0;
};

/// Histogram on bins [k*w, (k+1)*w) spanning the data; densities integrate to 1.
inline std::vector<DensityBin> density_histogram(const std::vector<double>& values, double bin_width) {
  if (!(bin_width > 0.0)) throw Error(ErrorKind::InvalidConfig, "bin width must be > 0");
  if (values.empty()) return {};
  std::map<long long, std::size_t> counts;
  for (double v : values) ++counts[static_cast<long long>(std::floor(v / bin_width))];
  std::vector<DensityBin> out;
  const long long lo = counts.begin()->first, hi = counts.rbegin()->first;
  for (long long k = lo; k <= hi; ++k) {
    auto it = counts.find(k);
    const double n = it == counts.end() ? 0.0 : double(it->second);
    out.push_back({(double(k) + 0.5) * bin_width, n / (double(values.size()) * bin_width)});
  }
  return out;
}

// Reports --------------------------------------------------------------------------------------

struct ReportOptions {
  std::vector<std::pair<std::string, std::string>> comparisons;  // (reference, candidate) method names
  double bin_width = 0.05;
  int decimals = 2;  // for the rendered table only; CSVs carry full precision
};

/// Table shaped like a method comparison: MAX/MIN/AVE rows, one column per method.
inline std::string render_table(const std::vector<MethodResult>& results, int decimals = 2) {
  std::string out = "|     |";
  for (const auto& r : results) out += " " + r.method + " |";
  out += "\n|-----|";
  for (std::size_t i = 0; i < results.size(); ++i) out += "---|";
  out += "\n";
  std::vector<Aggregate> agg;
  for (const auto& r : results) agg.push_back(aggregate(r.turbine_mse));
  for (const char* row : {"MAX", "MIN", "AVE"}) {
    out += std::string("| ") + row + " |";
    for (const auto& a : agg) {
      const double v = row[1] == 'A' ? a.max : row[1] == 'I' ? a.min : a.ave;
      out += " " + detail::format_fixed(v, decimals) + " |";
    }
    out += "\n";
  }
  return out;
}

namespace detail {

inline const MethodResult& find_method(const std::vector<MethodResult>& results, const std::string& name) {
  for (const auto& r : results)
    if (r.method == name) return r;
  throw Error(ErrorKind::InvalidConfig, "no results for method '" + name + "'");
}

}  // namespace detail

/// Writes comparison.csv, comparison.md, mse_distribution.csv, improvement.csv,
/// improvement_summary.csv, improvement_density.csv and timing.csv into `out_dir`.
/// Everything except timing.csv is a pure function of the inputs.
inline void report(const std::vector<MethodResult>& results, const std::vector<std::int64_t>& turbine_ids,
                   const std::string& out_dir, const ReportOptions& opts = {}) {
  if (results.empty()) throw Error(ErrorKind::InvalidConfig, "report needs at least one method");
  for (const auto& r : results)
    if (r.turbine_mse.size() != turbine_ids.size())
      throw Error(ErrorKind::LengthError, "method '" + r.method + "' covers " + std::to_string(r.turbine_mse.size()) +
                                              " turbines, registry has " + std::to_string(turbine_ids.size()));
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + out_dir + "': " + ec.message());
  const auto path = [&](const char* f) { return (std::filesystem::path(out_dir) / f).string(); };
  using detail::format_exact;

  std::string comparison = "method,max,min,ave\n", distribution = "method,turbine_id,mse\n",
              timing = "method,train_seconds\n";
  for (const auto& r : results) {
    const auto a = aggregate(r.turbine_mse);
    comparison += r.method + "," + format_exact(a.max) + "," + format_exact(a.min) + "," + format_exact(a.ave) + "\n";
    for (std::size_t i = 0; i < turbine_ids.size(); ++i)
      distribution += r.method + "," + std::to_string(turbine_ids[i]) + "," + format_exact(r.turbine_mse[i]) + "\n";
    timing += r.method + "," + format_exact(r.train_seconds) + "\n";
  }

  std::string ratios = "reference,candidate,turbine_id,ratio\n",
              summary = "reference,candidate,mean_ratio,max_ratio,ratio_of_means,fraction_negative,excluded\n",
              density = "reference,candidate,bin_center,density\n";
  for (const auto& [ref, cand] : opts.comparisons) {
    const auto imp = improvement(detail::find_method(results, ref), detail::find_method(results, cand));
    const std::string key = ref + "," + cand + ",";
    std::vector<double> defined;
    for (std::size_t i = 0; i < imp.ratio.size(); ++i) {
      if (!imp.ratio[i]) continue;
      defined.push_back(*imp.ratio[i]);
      ratios += key + std::to_string(turbine_ids[i]) + "," + format_exact(*imp.ratio[i]) + "\n";
    }
    summary += key + format_exact(imp.mean_ratio) + "," + format_exact(imp.max_ratio) + "," +
               format_exact(imp.ratio_of_means) + "," + format_exact(imp.fraction_negative) + "," +
               std::to_string(imp.excluded) + "\n";
    for (const auto& b : density_histogram(defined, opts.bin_width))
      density += key + format_exact(b.center) + "," + format_exact(b.density) + "\n";
  }

  detail::write_text(path("comparison.csv"), comparison);
  detail::write_text(path("comparison.md"), render_table(results, opts.decimals));
  detail::write_text(path("mse_distribution.csv"), distribution);
  detail::write_text(path("improvement.csv"), ratios);
  detail::write_text(path("improvement_summary.csv"), summary);
  detail::write_text(path("improvement_density.csv"), density);
  detail::write_text(path("timing.csv"), timing);
}

}  // namespace windgrid
