#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "windgrid/error.hpp"
#include "windgrid/ingest.hpp"
#include "windgrid/parallel.hpp"
#include "windgrid/scene_stf.hpp"

namespace windgrid {

// Features -------------------------------------------------------------------------------------

enum class FeatureKind { SF, LF };

inline std::string_view to_string(FeatureKind k) { return k == FeatureKind::SF ? "SF" : "LF"; }

inline FeatureKind parse_feature_kind(std::string_view s) {
  if (s == "sf" || s == "SF") return FeatureKind::SF;
  if (s == "lf" || s == "LF") return FeatureKind::LF;
  throw Error(ErrorKind::InvalidConfig, "unknown feature kind '" + std::string(s) + "' (expected sf or lf)");
}

struct FeatureSpec {
  FeatureKind kind = FeatureKind::SF;
  std::size_t window = 8;
  std::size_t neighbors = 8;                // LF only
  std::optional<double> max_distance_km;    // LF only: drop neighbors farther than this
};

/// Great-circle distance in km.
inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double R = 6371.0088, rad = 3.14159265358979323846 / 180.0;
  const double dlat = (lat2 - lat1) * rad, dlon = (lon2 - lon1) * rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2 * R * std::asin(std::min(1.0, std::sqrt(a)));
}

/// Nearest turbines to `id` by great-circle distance, nearest first, ties to the lower id.
inline std::vector<std::size_t> nearest_turbines(const TurbineRegistry& reg, std::size_t id, std::size_t k,
                                                 std::optional<double> max_km = std::nullopt) {
  const auto& me = reg.entries.at(id);
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t j = 0; j < reg.size(); ++j) {
    if (j == id) continue;
    const double km = haversine_km(me.latitude, me.longitude, reg.entries[j].latitude, reg.entries[j].longitude);
    if (!max_km || km <= *max_km) d.emplace_back(km, j);
  }
  const std::size_t take = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + std::ptrdiff_t(take), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(d[i].second);
  return out;
}

/// Supervised set of one turbine: row r of X is the lag window at base_index[r], y[r] the value horizon steps later.
struct TurbineDataset {
  std::size_t turbine = 0;
  std::vector<std::size_t> neighbors;
  std::size_t dims = 0;
  std::vector<double> X;  // row-major, rows() x dims
  std::vector<double> y;
  std::vector<Split> split;
  std::vector<std::size_t> base_index;

  std::size_t rows() const { return y.size(); }
  const double* row(std::size_t r) const { return X.data() + r * dims; }

  /// Rows of one split as (X, y).
  std::pair<std::vector<double>, std::vector<double>> of_split(Split s) const {
    std::pair<std::vector<double>, std::vector<double>> out;
    for (std::size_t r = 0; r < rows(); ++r)
      if (split[r] == s) {
        out.first.insert(out.first.end(), row(r), row(r) + dims);
        out.second.push_back(y[r]);
      }
    return out;
  }
};

struct FeatureSet {
  FeatureSpec spec;
  std::size_t horizon = 0;
  std::uint64_t fingerprint = 0;  // same as the scene sample set built on the same lattice
  std::vector<TurbineDataset> turbines;  // indexed by canonical id
};

/// SF rows hold the T lagged values of the turbine itself, oldest first; LF rows append the SF
/// windows of the selected neighbors, nearest first. Splits come from the shared sample plan.
inline FeatureSet build_features(const TelemetrySeries& series, const TurbineRegistry& reg, const FeatureSpec& spec,
                                 std::size_t horizon, const SplitFractions& fractions = {}) {
  if (series.values.size() != reg.size())
    throw Error(ErrorKind::ShapeError, "series has " + std::to_string(series.values.size()) + " turbines, registry " +
                                           std::to_string(reg.size()));
  const auto plan = plan_samples(series.length(), spec.window, horizon, fractions, series.start_time,
                                 series.sampling_period, series.variable);
  FeatureSet fs{spec, horizon, plan.fingerprint, {}};
  const std::size_t T = spec.window;
  for (std::size_t id = 0; id < reg.size(); ++id) {
    TurbineDataset d;
    d.turbine = id;
    if (spec.kind == FeatureKind::LF) d.neighbors = nearest_turbines(reg, id, spec.neighbors, spec.max_distance_km);
    std::vector<std::size_t> members{id};
    members.insert(members.end(), d.neighbors.begin(), d.neighbors.end());
    d.dims = members.size() * T;
    for (std::size_t k = 0; k < plan.base_indices.size(); ++k) {
      const std::size_t base = plan.base_indices[k];
      for (std::size_t m : members)
        for (std::size_t lag = T; lag-- > 0;) d.X.push_back(series.at(m, base - lag));
      d.y.push_back(series.at(id, base + horizon));
      d.split.push_back(plan.tags[k]);
      d.base_index.push_back(base);
    }
    fs.turbines.push_back(std::move(d));
  }
  return fs;
}

/// Per-column min-max scaling fitted on training rows; constant columns map to 0.
struct MinMaxScaler {
  std::vector<double> lo, span;

  static MinMaxScaler fit(const std::vector<double>& X, std::size_t dims) {
    MinMaxScaler s;
    s.lo.assign(dims, std::numeric_limits<double>::infinity());
    std::vector<double> hi(dims, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < X.size(); ++i) {
      s.lo[i % dims] = std::min(s.lo[i % dims], X[i]);
      hi[i % dims] = std::max(hi[i % dims], X[i]);
    }
    s.span.resize(dims);
    for (std::size_t c = 0; c < dims; ++c) s.span[c] = hi[c] > s.lo[c] ? hi[c] - s.lo[c] : 0.0;
    return s;
  }
  double forward(std::size_t c, double v) const { return span[c] > 0 ? (v - lo[c]) / span[c] : 0.0; }
  double inverse(std::size_t c, double v) const { return span[c] > 0 ? lo[c] + v * span[c] : lo[c]; }
  std::vector<double> transform(std::vector<double> X) const {
    for (std::size_t i = 0; i < X.size(); ++i) X[i] = forward(i % lo.size(), X[i]);
    return X;
  }
};

// kNN ------------------------------------------------------------------------------------------

enum class KnnMetric { Euclidean, Manhattan };
enum class KnnAggregator { Mean, DistanceWeighted };

inline KnnMetric parse_knn_metric(std::string_view s) {
  if (s == "euclidean") return KnnMetric::Euclidean;
  if (s == "manhattan") return KnnMetric::Manhattan;
  throw Error(ErrorKind::InvalidConfig, "unknown kNN metric '" + std::string(s) + "' (expected euclidean or manhattan)");
}

inline KnnAggregator parse_knn_aggregator(std::string_view s) {
  if (s == "mean") return KnnAggregator::Mean;
  if (s == "distance_weighted") return KnnAggregator::DistanceWeighted;
  throw Error(ErrorKind::InvalidConfig, "unknown kNN aggregator '" + std::string(s) + "' (expected mean or distance_weighted)");
}

struct KnnConfig {
  std::size_t k = 5;
  KnnMetric metric = KnnMetric::Euclidean;
  KnnAggregator aggregator = KnnAggregator::Mean;
};

struct KnnModel {
  KnnConfig config;
  std::size_t dims = 0;
  std::vector<double> X;
  std::vector<double> y;
};

inline KnnModel knn_fit(std::vector<double> X, std::vector<double> y, std::size_t dims, const KnnConfig& cfg) {
  if (y.empty()) throw Error(ErrorKind::EmptyTrainSet, "kNN needs at least one training sample");
  if (dims == 0 || X.size() != y.size() * dims)
    throw Error(ErrorKind::ShapeError, "kNN training matrix is not n x " + std::to_string(dims));
  if (cfg.k == 0 || cfg.k > y.size())
    throw Error(ErrorKind::InvalidConfig,
                "kNN k=" + std::to_string(cfg.k) + " must be in 1.." + std::to_string(y.size()));
  return {cfg, dims, std::move(X), std::move(y)};
}

inline double knn_distance(const double* a, const double* b, std::size_t d, KnnMetric m) {
  double s = 0.0;
  if (m == KnnMetric::Manhattan) {
    for (std::size_t i = 0; i < d; ++i) s += std::abs(a[i] - b[i]);
    return s;
  }
  for (std::size_t i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// Exhaustive search. Equal distances are ordered by training index.
inline double knn_predict(const KnnModel& m, const double* query) {
  const std::size_t n = m.y.size(), k = m.config.k;
  std::vector<std::pair<double, std::size_t>> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = {knn_distance(m.X.data() + i * m.dims, query, m.dims, m.config.metric), i};
  std::partial_sort(d.begin(), d.begin() + std::ptrdiff_t(k), d.end());
  if (m.config.aggregator == KnnAggregator::DistanceWeighted) {
    // exact matches dominate: average them alone
    double exact = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k && d[i].first == 0.0; ++i, ++hits) exact += m.y[d[i].second];
    if (hits) return exact / double(hits);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      num += m.y[d[i].second] / d[i].first;
      den += 1.0 / d[i].first;
    }
    return num / den;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += m.y[d[i].second];
  return s / double(k);
}

// epsilon-SVR ----------------------------------------------------------------------------------

enum class KernelKind { Linear, Rbf };

inline KernelKind parse_kernel_kind(std::string_view s) {
  if (s == "linear") return KernelKind::Linear;
  if (s == "rbf") return KernelKind::Rbf;
  throw Error(ErrorKind::InvalidConfig, "unknown kernel '" + std::string(s) + "' (expected linear or rbf)");
}

struct SvrConfig {
  double C = 1.0;
  double epsilon = 0.1;
  KernelKind kernel = KernelKind::Rbf;
  double gamma = 0.0;  // rbf width; 0 = 1 / dims
  double tolerance = 1e-3;
  std::size_t max_iterations = 1000000;

  void validate() const {
    if (!(C > 0)) throw Error(ErrorKind::InvalidConfig, "svr C must be > 0");
    if (!(epsilon >= 0)) throw Error(ErrorKind::InvalidConfig, "svr epsilon must be >= 0");
    if (!(tolerance > 0)) throw Error(ErrorKind::InvalidConfig, "svr tolerance must be > 0");
    if (gamma < 0) throw Error(ErrorKind::InvalidConfig, "svr gamma must be >= 0");
  }
};

struct SvrDiagnostics {
  bool converged = false;
  std::size_t iterations = 0;
  double kkt_violation = 0.0;  // maximal violating-pair gap at termination
  std::string warning;         // set on MaxIterations
};

struct SvrModel {
  SvrConfig config;
  double gamma = 0.0;  // resolved
  std::size_t dims = 0;
  std::vector<double> support;  // row-major support vectors
  std::vector<double> coef;     // alpha_i - alpha*_i per support vector
  double b = 0.0;
  std::vector<double> alpha, alpha_star;  // full dual solution over the training rows
  SvrDiagnostics diagnostics;

  std::size_t support_count() const { return coef.size(); }
};

inline double svr_kernel(const double* a, const double* b, std::size_t d, KernelKind kind, double gamma) {
  double s = 0.0;
  if (kind == KernelKind::Linear) {
    for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
    return s;
  }
  for (std::size_t i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-gamma * s);
}

namespace detail {

inline std::vector<double> kernel_matrix(const std::vector<double>& X, std::size_t n, std::size_t d, KernelKind kind,
                                         double gamma) {
  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) K[i * n + j] = K[j * n + i] = svr_kernel(&X[i * d], &X[j * d], d, kind, gamma);
  return K;
}

/// Dual in LIBSVM's 2n-variable form: a_t (t < n) = alpha_t, a_{t+n} = alpha*_t, sign s_t = +1 / -1,
/// minimize 1/2 a'Qa + p'a with Q_ts = s_t s_s K, p_t = eps - y_t, p_{t+n} = eps + y_t.
struct SvrDual {
  std::size_t n;
  const std::vector<double>& K;
  double C;
  std::vector<double> a, G;

  double sign(std::size_t t) const { return t < n ? 1.0 : -1.0; }
  double q(std::size_t t, std::size_t s) const { return sign(t) * sign(s) * K[(t % n) * n + (s % n)]; }
  bool at_upper(std::size_t t) const { return a[t] >= C; }
  bool at_lower(std::size_t t) const { return a[t] <= 0; }

  /// max over "up" set of -s G minus min over "low" set; <= 0 means optimal.
  std::pair<double, double> extremes() const {
    double up = -INFINITY, low = -INFINITY;
    for (std::size_t t = 0; t < 2 * n; ++t) {
      const double yG = sign(t) * G[t];
      if ((sign(t) > 0 && !at_upper(t)) || (sign(t) < 0 && !at_lower(t))) up = std::max(up, -yG);
      if ((sign(t) > 0 && !at_lower(t)) || (sign(t) < 0 && !at_upper(t))) low = std::max(low, yG);
    }
    return {up, low};
  }

  double rho() const {
    double ub = INFINITY, lb = -INFINITY, sum = 0.0;
    std::size_t free = 0;
    for (std::size_t t = 0; t < 2 * n; ++t) {
      const double yG = sign(t) * G[t];
      if (at_upper(t)) {
        if (sign(t) < 0) ub = std::min(ub, yG);
        else lb = std::max(lb, yG);
      } else if (at_lower(t)) {
        if (sign(t) > 0) ub = std::min(ub, yG);
        else lb = std::max(lb, yG);
      } else {
        ++free;
        sum += yG;
      }
    }
    return free > 0 ? sum / double(free) : (ub + lb) / 2;
  }
};

}  // namespace detail

/// SMO with second-order working-set selection; stops when the maximal KKT violation < tolerance.
inline SvrModel svr_fit(const std::vector<double>& X, const std::vector<double>& y, std::size_t dims,
                        const SvrConfig& cfg) {
  cfg.validate();
  const std::size_t n = y.size();
  if (n == 0) throw Error(ErrorKind::EmptyTrainSet, "SVR needs at least one training sample");
  if (dims == 0 || X.size() != n * dims)
    throw Error(ErrorKind::ShapeError, "SVR training matrix is not n x " + std::to_string(dims));
  SvrModel m;
  m.config = cfg;
  m.dims = dims;
  m.gamma = cfg.gamma > 0 ? cfg.gamma : 1.0 / double(dims);
  const auto K = detail::kernel_matrix(X, n, dims, cfg.kernel, m.gamma);

  detail::SvrDual D{n, K, cfg.C, std::vector<double>(2 * n, 0.0), std::vector<double>(2 * n)};
  for (std::size_t t = 0; t < n; ++t) {
    D.G[t] = cfg.epsilon - y[t];
    D.G[t + n] = cfg.epsilon + y[t];
  }
  constexpr double tau = 1e-12;
  const double C = cfg.C;
  auto& a = D.a;
  auto& G = D.G;
  std::size_t iter = 0;
  double violation = 0.0;
  for (;; ++iter) {
    // i: maximal violator in the "up" set
    double gmax = -INFINITY;
    std::ptrdiff_t i = -1;
    for (std::size_t t = 0; t < 2 * n; ++t) {
      if (D.sign(t) > 0) {
        if (!D.at_upper(t) && -G[t] >= gmax) gmax = -G[t], i = std::ptrdiff_t(t);
      } else if (!D.at_lower(t) && G[t] >= gmax) {
        gmax = G[t], i = std::ptrdiff_t(t);
      }
    }
    // j: best second-order gain in the "low" set
    double gmax2 = -INFINITY, best = INFINITY;
    std::ptrdiff_t j = -1;
    for (std::size_t t = 0; t < 2 * n && i >= 0; ++t) {
      const std::size_t I = std::size_t(i);
      if (D.sign(t) > 0) {
        if (D.at_lower(t)) continue;
        const double diff = gmax + G[t];
        gmax2 = std::max(gmax2, G[t]);
        if (diff > 0) {
          const double quad = K[(I % n) * (n + 1)] + K[(t % n) * (n + 1)] - 2.0 * D.sign(I) * D.q(I, t);
          const double obj = -(diff * diff) / (quad > 0 ? quad : tau);
          if (obj <= best) best = obj, j = std::ptrdiff_t(t);
        }
      } else {
        if (D.at_upper(t)) continue;
        const double diff = gmax - G[t];
        gmax2 = std::max(gmax2, -G[t]);
        if (diff > 0) {
          const double quad = K[(I % n) * (n + 1)] + K[(t % n) * (n + 1)] + 2.0 * D.sign(I) * D.q(I, t);
          const double obj = -(diff * diff) / (quad > 0 ? quad : tau);
          if (obj <= best) best = obj, j = std::ptrdiff_t(t);
        }
      }
    }
    violation = (i < 0 || gmax2 == -INFINITY) ? 0.0 : gmax + gmax2;
    if (violation < cfg.tolerance || j < 0) break;
    if (iter >= cfg.max_iterations) break;

    const std::size_t I = std::size_t(i), J = std::size_t(j);
    const double ai = a[I], aj = a[J], Qij = D.q(I, J);
    const double Kii = K[(I % n) * (n + 1)], Kjj = K[(J % n) * (n + 1)];
    if (D.sign(I) != D.sign(J)) {
      double quad = Kii + Kjj + 2 * Qij;
      if (quad <= 0) quad = tau;
      const double delta = (-G[I] - G[J]) / quad, diff = a[I] - a[J];
      a[I] += delta;
      a[J] += delta;
      if (diff > 0) {
        if (a[J] < 0) a[J] = 0, a[I] = diff;
      } else if (a[I] < 0) {
        a[I] = 0, a[J] = -diff;
      }
      if (diff > 0) {
        if (a[I] > C) a[I] = C, a[J] = C - diff;
      } else if (a[J] > C) {
        a[J] = C, a[I] = C + diff;
      }
    } else {
      double quad = Kii + Kjj - 2 * Qij;
      if (quad <= 0) quad = tau;
      const double delta = (G[I] - G[J]) / quad, sum = a[I] + a[J];
      a[I] -= delta;
      a[J] += delta;
      if (sum > C) {
        if (a[I] > C) a[I] = C, a[J] = sum - C;
      } else if (a[J] < 0) {
        a[J] = 0, a[I] = sum;
      }
      if (sum > C) {
        if (a[J] > C) a[J] = C, a[I] = sum - C;
      } else if (a[I] < 0) {
        a[I] = 0, a[J] = sum;
      }
    }
    const double di = a[I] - ai, dj = a[J] - aj;
    for (std::size_t t = 0; t < 2 * n; ++t) G[t] += D.q(I, t) * di + D.q(J, t) * dj;
  }

  m.diagnostics.iterations = iter;
  m.diagnostics.kkt_violation = violation;
  m.diagnostics.converged = violation < cfg.tolerance;
  if (!m.diagnostics.converged)
    m.diagnostics.warning = "MaxIterations: stopped after " + std::to_string(iter) +
                            " iterations with KKT violation " + detail::format_exact(violation);
  m.b = -D.rho();
  m.alpha.assign(a.begin(), a.begin() + std::ptrdiff_t(n));
  m.alpha_star.assign(a.begin() + std::ptrdiff_t(n), a.end());
  for (std::size_t t = 0; t < n; ++t) {
    const double c = m.alpha[t] - m.alpha_star[t];
    if (c == 0.0) continue;
    m.coef.push_back(c);
    m.support.insert(m.support.end(), X.begin() + std::ptrdiff_t(t * dims), X.begin() + std::ptrdiff_t((t + 1) * dims));
  }
  return m;
}

inline double svr_predict(const SvrModel& m, const double* x) {
  double f = m.b;
  for (std::size_t s = 0; s < m.coef.size(); ++s)
    f += m.coef[s] * svr_kernel(&m.support[s * m.dims], x, m.dims, m.config.kernel, m.gamma);
  return f;
}

/// w = sum coef_s * x_s; meaningful for the linear kernel only.
inline std::vector<double> svr_linear_weights(const SvrModel& m) {
  std::vector<double> w(m.dims, 0.0);
  for (std::size_t s = 0; s < m.coef.size(); ++s)
    for (std::size_t c = 0; c < m.dims; ++c) w[c] += m.coef[s] * m.support[s * m.dims + c];
  return w;
}

struct SvrCertificate {
  bool box_ok = false;        // 0 <= alpha, alpha* <= C
  double equality_residual = 0.0;  // |sum(alpha - alpha*)|
  double kkt_violation = 0.0;      // recomputed from scratch
  double primal = 0.0;
  double dual = 0.0;
  double relative_gap = 0.0;  // (primal - dual) / max(|primal|, tiny)
};

/// Recomputes optimality evidence for a fitted model against its training data.
inline SvrCertificate svr_certificate(const SvrModel& m, const std::vector<double>& X, const std::vector<double>& y) {
  const std::size_t n = y.size();
  if (m.alpha.size() != n || X.size() != n * m.dims)
    throw Error(ErrorKind::ShapeError, "certificate data does not match the fitted model");
  const double C = m.config.C, eps = m.config.epsilon;
  const auto K = detail::kernel_matrix(X, n, m.dims, m.config.kernel, m.gamma);
  SvrCertificate c;
  c.box_ok = true;
  std::vector<double> beta(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (double v : {m.alpha[i], m.alpha_star[i]})
      if (v < 0 || v > C) c.box_ok = false;
    beta[i] = m.alpha[i] - m.alpha_star[i];
    c.equality_residual += beta[i];
  }
  c.equality_residual = std::abs(c.equality_residual);

  std::vector<double> Kb(n, 0.0);
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) Kb[i] += K[i * n + j] * beta[j];
    quad += beta[i] * Kb[i];
  }
  detail::SvrDual D{n, K, C, {}, std::vector<double>(2 * n)};
  D.a = m.alpha;
  D.a.insert(D.a.end(), m.alpha_star.begin(), m.alpha_star.end());
  double lin = 0.0;
  std::vector<double> knots;
  for (std::size_t i = 0; i < n; ++i) {
    D.G[i] = Kb[i] + eps - y[i];
    D.G[i + n] = -Kb[i] + eps + y[i];
    lin += eps * (m.alpha[i] + m.alpha_star[i]) - y[i] * beta[i];
    knots.push_back(y[i] - Kb[i] - eps);
    knots.push_back(y[i] - Kb[i] + eps);
  }
  // primal bound at the fitted w; any b is feasible, and the hinge sum is minimized at a median knot
  auto hinge_at = [&](double b) {
    double h = 0.0;
    for (std::size_t i = 0; i < n; ++i) h += std::max(0.0, std::abs(y[i] - (Kb[i] + b)) - eps);
    return h;
  };
  std::nth_element(knots.begin(), knots.begin() + std::ptrdiff_t(n), knots.end());
  const double hinge = std::min(hinge_at(m.b), hinge_at(knots[n]));
  const auto [up, low] = D.extremes();
  c.kkt_violation = (up == -INFINITY || low == -INFINITY) ? 0.0 : std::max(0.0, up + low);
  c.primal = 0.5 * quad + C * hinge;
  c.dual = -0.5 * quad - lin;
  c.relative_gap = (c.primal - c.dual) / std::max(std::abs(c.primal), 1e-12);
  return c;
}

// Persistence ----------------------------------------------------------------------------------

/// p[t + horizon] = v[t]; returns the predictions for targets v[horizon..].
inline std::vector<double> persistence_predict(const std::vector<double>& values, std::size_t horizon) {
  if (horizon == 0) throw Error(ErrorKind::InvalidConfig, "horizon must be >= 1");
  if (values.size() <= horizon) return {};
  return {values.begin(), values.end() - std::ptrdiff_t(horizon)};
}

// Per-turbine runners --------------------------------------------------------------------------

/// Test-split predictions of one turbine, in base-index order.
struct TurbinePredictions {
  std::size_t turbine = 0;
  std::vector<std::size_t> base_index;
  std::vector<double> prediction;
  std::vector<double> actual;
};

namespace detail {
inline TurbinePredictions test_rows(const TurbineDataset& d) {
  TurbinePredictions p;
  p.turbine = d.turbine;
  for (std::size_t r = 0; r < d.rows(); ++r)
    if (d.split[r] == Split::Test) {
      p.base_index.push_back(r);
      p.actual.push_back(d.y[r]);
    }
  return p;
}
inline void finish(TurbinePredictions& p, const TurbineDataset& d) {
  for (auto& r : p.base_index) r = d.base_index[r];
}
}  // namespace detail

/// One kNN per turbine, fitted on the train split with min-max scaled features.
inline std::vector<TurbinePredictions> run_knn(const FeatureSet& fs, const KnnConfig& cfg) {
  return parallel_map(fs.turbines.size(), [&](std::size_t id) {
    const auto& d = fs.turbines[id];
    auto [X, y] = d.of_split(Split::Train);
    const auto scaler = MinMaxScaler::fit(X, d.dims);
    const auto model = knn_fit(scaler.transform(std::move(X)), std::move(y), d.dims, cfg);
    auto p = detail::test_rows(d);
    for (std::size_t r : p.base_index) {
      const auto q = scaler.transform({d.row(r), d.row(r) + d.dims});
      p.prediction.push_back(knn_predict(model, q.data()));
    }
    detail::finish(p, d);
    return p;
  });
}

struct SvrRunStats {
  std::size_t unconverged = 0;
  double max_kkt_violation = 0.0;
};

/// One SVR per turbine on the train split; features and labels min-max scaled with train statistics.
inline std::vector<TurbinePredictions> run_svr(const FeatureSet& fs, const SvrConfig& cfg, SvrRunStats* stats = nullptr) {
  std::vector<SvrDiagnostics> diag(fs.turbines.size());
  auto out = parallel_map(fs.turbines.size(), [&](std::size_t id) {
    const auto& d = fs.turbines[id];
    auto [X, y] = d.of_split(Split::Train);
    const auto xs = MinMaxScaler::fit(X, d.dims);
    const auto ys = MinMaxScaler::fit(y, 1);
    const auto model = svr_fit(xs.transform(std::move(X)), ys.transform(std::move(y)), d.dims, cfg);
    diag[id] = model.diagnostics;
    auto p = detail::test_rows(d);
    for (std::size_t r : p.base_index) {
      const auto q = xs.transform({d.row(r), d.row(r) + d.dims});
      p.prediction.push_back(ys.inverse(0, svr_predict(model, q.data())));
    }
    detail::finish(p, d);
    return p;
  });
  if (stats) {
    *stats = {};
    for (const auto& g : diag) {
      stats->unconverged += !g.converged;
      stats->max_kkt_violation = std::max(stats->max_kkt_violation, g.kkt_violation);
    }
  }
  return out;
}

/// Repeats the value at the base index (last element of the turbine's own lag window).
inline std::vector<TurbinePredictions> run_persistence(const FeatureSet& fs) {
  std::vector<TurbinePredictions> out;
  const std::size_t T = fs.spec.window;
  for (const auto& d : fs.turbines) {
    auto p = detail::test_rows(d);
    for (std::size_t r : p.base_index) p.prediction.push_back(d.row(r)[T - 1]);
    detail::finish(p, d);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace windgrid
