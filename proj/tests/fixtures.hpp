#pragma once

#include "windgrid/scene_stf.hpp"
#include "windgrid/synth.hpp"

namespace windgrid::testing {

/// Noiseless 8x8 speed field, window 4, horizon 1: 46 samples split 32/4/10, normalized.
inline SampleSet overfit_fixture() {
  FieldConfig f;
  f.rows = 8;
  f.cols = 8;
  f.blobs = {{6.0, 2.0, 2.0, 1.5}, {4.0, 5.5, 5.0, 1.8}};
  f.drift_cols = 1.0;
  f.drift_rows = 1.0;
  f.ambient = 5.0;
  f.noise_sd = 0.0;
  f.steps = 50;
  f.seed = 3;
  auto sc = make_scenario(f, PowerCurve{}, 0.0, 1);
  auto raw = build_samples(sc.grid, {sc.speed}, 4, 1, Variable::Speed, SplitFractions{});
  return normalize(raw).first;
}

/// Variance of the normalized targets over mask-true cells of the train split.
inline double train_target_variance(const SampleSet& set) {
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto* s : set.of_split(Split::Train))
    for (std::size_t i = 0; i < s->target.values.size(); ++i)
      if (set.mask[i]) {
        sum += s->target.values[i];
        sq += s->target.values[i] * s->target.values[i];
        ++n;
      }
  const double mean = sum / double(n);
  return sq / double(n) - mean * mean;
}

/// Mean train loss over consecutive windows must not rise by more than `slack` once past `warmup` of the steps.
inline bool monotone_trend(const std::vector<double>& losses, double warmup = 0.1, std::size_t window = 50,
                           double slack = 1.05) {
  const std::size_t start = static_cast<std::size_t>(double(losses.size()) * warmup);
  double prev = INFINITY;
  for (std::size_t i = start; i + window <= losses.size(); i += window) {
    double m = 0;
    for (std::size_t k = i; k < i + window; ++k) m += losses[k];
    m /= double(window);
    if (m > prev * slack) return false;
    prev = std::min(prev, m);
  }
  return true;
}

}  // namespace windgrid::testing
