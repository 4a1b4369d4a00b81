#ifndef REGIONQA_GRADCHECK_HPP_
#define REGIONQA_GRADCHECK_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace regionqa {

/// One parameter tensor under test: its live values (perturbed in place and
/// restored) and the analytic gradient reported for them.
struct GradientProbe {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// 0 checks every coordinate; otherwise a seeded random subset per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Optional label of the smooth piece the objective was last evaluated on,
  /// e.g. a hash of ReLU signs. When set, a coordinate whose probes leave the
  /// piece of the unperturbed point is retried with epsilon / 10 down to 1e-7
  /// and counted in kinks_skipped if it still straddles a kink.
  std::function<std::uint64_t()> region_key;
};

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
  double max_abs_numeric = 0.0;
  std::size_t kinks_skipped = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t kinks_skipped = 0;
  std::vector<TensorCheck> tensors;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central-difference check of `analytic` against f, which must evaluate the
/// scalar objective at the current contents of the probed spans.
/// Throws NumericError when f is non-finite at a perturbed coordinate.
GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  std::span<const GradientProbe> probes,
                                  const GradCheckOptions& options = {});

}  // namespace regionqa

#endif  // REGIONQA_GRADCHECK_HPP_
