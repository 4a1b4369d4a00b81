#ifndef REGIONQA_RNG_HPP_
#define REGIONQA_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace regionqa {

/// Seeded random stream that is reproducible across platforms and standard
/// libraries. The engine is mt19937_64 (fully specified by the standard); the
/// distributions are implemented here because the std:: ones are not.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64/u53/box-muller";

  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace regionqa

#endif  // REGIONQA_RNG_HPP_
