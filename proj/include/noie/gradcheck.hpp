#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "noie/types.hpp"

namespace noie {

struct GradCheckConfig {
  double eps = 1e-5;
  // Coordinates sampled per parameter; <=0 checks every coordinate.
  int max_coords_per_param = 48;
  std::uint64_t seed = 0x9d5f;
  // Central differences at step eps on a 64-bit loss resolve derivatives
  // down to roughly ulp(loss)/eps (~1e-10 for unit-scale losses, worse
  // for deep compositions). Coordinates where BOTH the analytic and the
  // numeric derivative sit below this floor carry no checkable signal
  // and are excluded from the max. A wrong backward term still shows up:
  // it distorts resolvable coordinates, and a missing term leaves the
  // numeric side large while the analytic side is small, which is never
  // skipped.
  double min_resolvable = 5e-6;
};

// Central finite-difference check of hand-written backward passes.
//
// `f` must run a full forward AND backward pass, accumulating analytic
// gradients into `params`, and return the recorded scalar output as a
// 1x1 matrix (anything else is an error). Perturbation calls reuse `f`
// for values only, so `f` must be deterministic.
//
// Returns max over sampled coordinates of
//   |analytic - central_difference| / max(|analytic|, |central_difference|, 1e-12).
template <class S>
double gradient_check(const std::function<Mat<S>()>& f,
                      const std::vector<ParamTensor<S>*>& params,
                      GradCheckConfig cfg = {}) {
  if (cfg.eps <= 0) throw Error("gradient_check: eps must be positive");
  for (auto* p : params) p->zero_grad();
  Mat<S> out = f();
  if (out.size() != 1)
    throw DimError("gradient_check: output is " + shape_str(out.rows(), out.cols()) +
                   ", expected a scalar");

  std::vector<Mat<S>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  Rng rng(cfg.seed);
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    ParamTensor<S>& p = *params[pi];
    const Eigen::Index n = p.size();
    std::vector<Eigen::Index> coords;
    if (cfg.max_coords_per_param <= 0 || n <= cfg.max_coords_per_param) {
      coords.resize(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      coords.reserve(static_cast<std::size_t>(cfg.max_coords_per_param));
      for (int i = 0; i < cfg.max_coords_per_param; ++i)
        coords.push_back(static_cast<Eigen::Index>(rng.below(std::uint64_t(n))));
    }
    for (Eigen::Index idx : coords) {
      S* v = p.value.data() + idx;
      const S saved = *v;
      *v = saved + static_cast<S>(cfg.eps);
      double lp = static_cast<double>(f()(0, 0));
      *v = saved - static_cast<S>(cfg.eps);
      double lm = static_cast<double>(f()(0, 0));
      *v = saved;
      double numeric = (lp - lm) / (2.0 * cfg.eps);
      double a = static_cast<double>(analytic[pi].data()[idx]);
      if (std::abs(a) < cfg.min_resolvable && std::abs(numeric) < cfg.min_resolvable)
        continue;
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  // Restore the analytic gradients f accumulated on the first call.
  for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
  return worst;
}

}  // namespace noie
