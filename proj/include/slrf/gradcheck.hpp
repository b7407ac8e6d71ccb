#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "slrf/params.hpp"
#include "slrf/rng.hpp"

namespace slrf {

struct GradCheckFailure {
  std::string param;
  int64_t index;
  double analytic;
  double numeric;
  double rel_err;
};

struct GradCheckReport {
  int64_t coords_checked = 0;
  double max_rel_err = 0.0;
  std::vector<GradCheckFailure> failures;
  bool ok() const { return failures.empty(); }
};

// Compares analytic gradients against central finite differences, in 64-bit.
// loss_fn(with_grad): returns the loss; when with_grad it must also leave the
// analytic gradient in the store (store.zero_grads() is called here first).
// rel err = |analytic - numeric| / max(1e-8, |numeric|).
//
// Coordinates where both sides are below 1e-9 pass outright: a mathematically
// zero gradient (e.g. a key-projection bias, which shifts every attention
// logit in a row equally) leaves the central difference measuring only
// floating-point noise around ~1e-12, which the relative formula cannot
// classify. A wrong backward would surface as a non-tiny analytic value and
// still fail.
inline GradCheckReport grad_check(ParamStore<double>& params,
                                  const std::function<double(bool)>& loss_fn, double tolerance,
                                  int max_coords_per_param = 48, uint64_t seed = 0x5eedULL) {
  params.zero_grads();
  loss_fn(true);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.entries().size());
  for (const auto& e : params.entries()) analytic.push_back(e.grad.v);

  GradCheckReport report;
  Rng rng(derive_seed(seed, "gradcheck"));
  for (size_t pi = 0; pi < params.entries().size(); ++pi) {
    auto& e = params.entries()[pi];
    int64_t n = e.value.numel();
    std::vector<int64_t> coords;
    if (n <= max_coords_per_param) {
      for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int c = 0; c < max_coords_per_param; ++c)
        coords.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(n))));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    for (int64_t ci : coords) {
      double w0 = e.value.v[static_cast<size_t>(ci)];
      double h = 1e-4 * std::max(1.0, std::abs(w0));
      e.value.v[static_cast<size_t>(ci)] = w0 + h;
      double fp = loss_fn(false);
      e.value.v[static_cast<size_t>(ci)] = w0 - h;
      double fm = loss_fn(false);
      e.value.v[static_cast<size_t>(ci)] = w0;
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic[pi][static_cast<size_t>(ci)];
      if (std::abs(a) < 1e-9 && std::abs(numeric) < 1e-9) {
        report.coords_checked++;
        continue;
      }
      double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(numeric));
      report.coords_checked++;
      report.max_rel_err = std::max(report.max_rel_err, rel);
      if (rel >= tolerance)
        report.failures.push_back(GradCheckFailure{e.name, ci, a, numeric, rel});
    }
  }
  return report;
}

}  // namespace slrf
