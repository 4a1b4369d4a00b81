#include "regionqa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "regionqa/errors.hpp"
#include "regionqa/rng.hpp"

namespace regionqa {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<std::size_t> pick_coordinates(std::size_t size, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (limit == 0 || limit >= size) return idx;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < limit; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  std::span<const GradientProbe> probes,
                                  const GradCheckOptions& options) {
  if (!(options.epsilon >= 1e-7 && options.epsilon <= 1e-3)) {
    throw std::invalid_argument("finite_diff_check: epsilon must lie in [1e-7, 1e-3]");
  }
  Rng rng(options.seed);
  std::uint64_t home = 0;
  if (options.region_key) {
    f();
    home = options.region_key();
  }
  GradCheckReport report;
  for (const GradientProbe& probe : probes) {
    if (probe.values.size() != probe.analytic.size()) {
      throw ShapeError("finite_diff_check: '" + probe.name + "' has " +
                       std::to_string(probe.values.size()) + " values but " +
                       std::to_string(probe.analytic.size()) + " gradient entries");
    }
    TensorCheck tc;
    tc.name = probe.name;
    for (std::size_t i : pick_coordinates(probe.values.size(), options.max_coords_per_tensor, rng)) {
      const double saved = probe.values[i];
      double numeric = 0.0;
      bool smooth = false;
      for (double eps = options.epsilon; eps >= 1e-7 * (1.0 - 1e-9); eps /= 10.0) {
        probe.values[i] = saved + eps;
        const double up = f();
        const bool up_home = !options.region_key || options.region_key() == home;
        probe.values[i] = saved - eps;
        const double down = f();
        const bool down_home = !options.region_key || options.region_key() == home;
        probe.values[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
          throw NumericError("finite_diff_check: non-finite objective when perturbing " +
                             probe.name + "[" + std::to_string(i) + "]");
        }
        numeric = (up - down) / (2.0 * eps);
        smooth = up_home && down_home;
        if (smooth) break;
      }
      if (!smooth) {
        ++tc.kinks_skipped;
        continue;
      }
      const double err = relative_error(probe.analytic[i], numeric);
      if (err > tc.max_rel_error || tc.coords_checked == 0) {
        tc.max_rel_error = err;
        tc.worst_index = i;
      }
      tc.max_abs_numeric = std::max(tc.max_abs_numeric, std::abs(numeric));
      ++tc.coords_checked;
    }
    report.kinks_skipped += tc.kinks_skipped;
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

}  // namespace regionqa
