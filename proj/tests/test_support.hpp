#ifndef REGIONQA_TESTS_TEST_SUPPORT_HPP_
#define REGIONQA_TESTS_TEST_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "regionqa/gradcheck.hpp"
#include "regionqa/model.hpp"
#include "regionqa/rng.hpp"
#include "regionqa/synth.hpp"
#include "regionqa/tensor.hpp"
#include "regionqa/training.hpp"
#include "regionqa/vision.hpp"

namespace testing {

using regionqa::Box;
using regionqa::Rng;
using regionqa::Tensor2;

inline Tensor2 random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor2 t(rows, cols);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

/// Textbook triple loop, kept deliberately separate from the library kernels.
inline Tensor2 naive_matmul(const Tensor2& a, const Tensor2& b) {
  Tensor2 out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

/// Brute-force greedy suppression. Each round scans every remaining box for the
/// best one, then rescans to drop overlaps.
inline std::vector<std::size_t> reference_nms(const std::vector<Box>& boxes,
                                              const std::vector<double>& scores, double threshold) {
  auto overlap = [](const Box& a, const Box& b) {
    const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = iw * ih;
    const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
  };
  std::vector<bool> alive(boxes.size(), true);
  std::vector<std::size_t> kept;
  for (;;) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (!alive[i]) continue;
      if (best == boxes.size() || scores[i] > scores[best]) best = i;
    }
    if (best == boxes.size()) break;
    kept.push_back(best);
    alive[best] = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && overlap(boxes[best], boxes[i]) > threshold) alive[i] = false;
    }
  }
  return kept;
}

inline Box random_box(Rng& rng, double size) {
  const double x1 = rng.uniform(0.0, size * 0.8);
  const double y1 = rng.uniform(0.0, size * 0.8);
  return Box{x1, y1, rng.uniform(x1 + 1.0, size), rng.uniform(y1 + 1.0, size)};
}

/// Per-test scratch directory under the system temp dir, wiped on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("regionqa_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Small synthetic problem plus a model at generic (non-initial) parameter
/// values, so gradients are well above finite-difference noise.
struct ToyProblem {
  regionqa::ModelConfig config;
  regionqa::SyntheticData data;
  std::vector<regionqa::McExample> examples;
  regionqa::ModelParameters params;

  std::vector<const regionqa::McExample*> questions(std::size_t count) const {
    std::vector<const regionqa::McExample*> out;
    for (std::size_t i = 0; i < count && i < examples.size(); ++i) out.push_back(&examples[i]);
    return out;
  }
};

inline void randomize_generic(regionqa::ModelParameters& params, Rng& rng) {
  params.for_each_learnable([&](const std::string& name, Tensor2& t) {
    const bool gamma = name.ends_with(".gamma");
    const bool small_init = name.starts_with("attn.") || name.starts_with("fuse.");
    for (double& v : t.data()) {
      if (gamma) {
        v = 1.0 + 0.2 * rng.normal();
      } else if (small_init) {
        v = 0.3 * rng.normal();
      } else if (name.ends_with(".beta")) {
        v = 0.2 * rng.normal();
      } else {
        v += 0.05 * rng.normal();
      }
    }
  });
}

/// Replaces the templated synthetic inputs with draws in general position.
/// Every synthetic question shares its leading words, which batch norm cancels
/// exactly, so those weights would carry no signal for a gradient probe.
inline void randomize_inputs(ToyProblem& p, Rng& rng) {
  for (auto& ex : p.examples) {
    for (auto& enc : ex.encodings) {
      for (double& v : enc.flat) v = rng.normal();
      std::size_t k = 0;
      for (auto& bin : enc.bins) {
        for (double& v : bin) v = enc.flat[k++];
      }
    }
    for (std::size_t c = 0; c < ex.annotator_fraction.size(); ++c) {
      ex.annotator_fraction[c] = c == ex.correct_index ? 1.0 : rng.uniform(0.0, 0.9);
    }
  }
  for (auto& [id, set] : p.data.features) {
    for (double& v : set.features.data()) v = rng.normal();
  }
}

inline ToyProblem make_toy_problem(regionqa::Variant variant, std::uint64_t seed,
                                   std::size_t num_questions = 6,
                                   regionqa::ModelConfig config = regionqa::ModelConfig::desk(),
                                   std::size_t regions = 8) {
  ToyProblem p;
  p.config = std::move(config);
  p.config.variant = variant;
  regionqa::SyntheticSpec spec;
  spec.num_questions = num_questions;
  spec.regions_per_image = regions;
  spec.feature_dim = p.config.feature_dim;
  spec.word_dim = p.config.word_dim;
  spec.choices_per_question = 4;
  spec.seed = seed;
  p.data = regionqa::synth_generate(spec);
  p.examples = regionqa::encode_records(p.data.records, p.data.embeddings, p.config.language_scheme);
  Rng rng(seed + 1000);
  p.params = regionqa::init_model(p.config, rng);
  randomize_generic(p.params, rng);
  randomize_inputs(p, rng);
  return p;
}

/// Toy problem whose scores and margins sit on a 1e-3 scale. Round-off in
/// the objective then stays well under the 1e-8 relative-error floor, so
/// coordinates whose gradient is exactly zero (a head unit active on every
/// pair, say) are still judged meaningfully.
inline ToyProblem make_gradcheck_problem(regionqa::Variant variant, std::uint64_t seed,
                                         std::size_t num_questions = 4,
                                         regionqa::ModelConfig config = regionqa::ModelConfig::desk(),
                                         std::size_t regions = 8) {
  ToyProblem p = make_toy_problem(variant, seed, num_questions, std::move(config), regions);
  constexpr double kScale = 1e-3;
  for (double& v : p.params.head_weights.back().data()) v *= kScale;
  for (auto& ex : p.examples) {
    for (double& a : ex.annotator_fraction) a = 1.0 - (1.0 - a) * kScale;
  }
  return p;
}

/// Which smooth piece of the loss a forward pass landed on: the sign of every
/// ReLU input plus each question's hinge violator.
inline std::uint64_t piece_key(const regionqa::ForwardCache& cache,
                               std::span<const regionqa::McExample* const> questions) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  auto signs = [&](const Tensor2& t) {
    for (double v : t.data()) mix(v > 0.0 ? 1 : 2);
  };
  for (const auto& layer : cache.lang) signs(layer.relu_input);
  signs(cache.fuse_pre);
  for (const auto& layer : cache.head) signs(layer.relu_input);
  std::size_t offset = 0;
  for (const regionqa::McExample* q : questions) {
    const std::size_t c = q->encodings.size();
    const std::span<const double> scores(cache.scores.data() + offset, c);
    mix(regionqa::consensus_hinge_loss(scores, q->annotator_fraction, q->correct_index).violator);
    offset += c;
  }
  return h;
}

/// Central differences of the mean hinge loss (train-mode batch norm) against
/// backward_batch, over every learnable tensor. Probes that cross a ReLU or
/// hinge kink are retried closer in.
inline regionqa::GradCheckReport check_loss_gradients(ToyProblem& p, std::size_t num_questions,
                                                      regionqa::GradCheckOptions options = {}) {
  using namespace regionqa;
  const auto qs = p.questions(num_questions);
  const BatchLoss analytic = minibatch_loss(p.params, p.config, qs, p.data.features, BnMode::train, true);
  std::vector<GradientProbe> probes;
  std::vector<std::pair<std::string, Tensor2*>> live;
  p.params.for_each_learnable([&](const std::string& name, Tensor2& t) { live.emplace_back(name, &t); });
  std::size_t i = 0;
  analytic.grads.for_each_learnable([&](const std::string& name, const Tensor2& g) {
    probes.push_back(GradientProbe{name, live.at(i).second->data(), g.data()});
    ++i;
  });
  std::uint64_t key = 0;
  options.region_key = [&] { return key; };
  return finite_diff_check(
      [&] {
        const BatchLoss bl = minibatch_loss(p.params, p.config, qs, p.data.features, BnMode::train, false);
        key = piece_key(bl.cache, qs);
        return bl.loss;
      },
      probes, options);
}

}  // namespace testing

#endif  // REGIONQA_TESTS_TEST_SUPPORT_HPP_
