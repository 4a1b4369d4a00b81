#ifndef REGIONQA_MODEL_HPP_
#define REGIONQA_MODEL_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "regionqa/language.hpp"
#include "regionqa/layers.hpp"
#include "regionqa/rng.hpp"
#include "regionqa/tensor.hpp"
#include "regionqa/vision.hpp"

namespace regionqa {

enum class Variant { region_sel, language_only, whole_image, uniform_regions };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  std::size_t word_dim = 16;
  std::vector<std::size_t> lang_hidden_dims = {64, 48, 32};
  std::size_t embed_dim = 24;   // rows of A and B
  std::size_t fused_dim = 48;   // rows of W
  std::vector<std::size_t> head_dims = {24, 1};
  std::size_t feature_dim = 32;
  Variant variant = Variant::region_sel;
  LanguageScheme language_scheme = LanguageScheme::five_bin;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  /// Small dims that run the whole pipeline in seconds.
  static ModelConfig desk();
  /// The full-size network: 300-d words, 2048/1500/1024 language stack,
  /// 900-d attention space, 2048-d fusion, 900/1 head, 5096-d regions.
  static ModelConfig paper();

  std::size_t language_input_dim() const { return bin_count(language_scheme) * word_dim; }
  std::size_t language_output_dim() const { return lang_hidden_dims.back(); }
  std::size_t head_input_dim() const;
  bool has_attention() const { return variant == Variant::region_sel; }
  bool has_fusion() const { return variant != Variant::language_only; }

  /// Throws ShapeError on non-positive dims or a head not ending in 1.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Every learned tensor of the scorer. Tensors a variant does not use are left
/// empty. Affine layers that feed a batch-norm carry no bias (the norm's beta
/// takes that role), and the scalar output has no bias because the loss only
/// sees score differences.
struct ModelParameters {
  std::vector<Tensor2> lang_weights;
  std::vector<BatchNormState> lang_bn;

  Tensor2 proj_region;       // A: embed_dim x feature_dim
  Tensor2 proj_region_bias;  // b_r: embed_dim x 1
  Tensor2 proj_lang;         // B: embed_dim x lang_out
  Tensor2 proj_lang_bias;    // b_l: embed_dim x 1

  Tensor2 fuse_weight;       // W: fused_dim x (feature_dim + lang_out)
  Tensor2 fuse_bias;         // b_o: fused_dim x 1
  BatchNormState fuse_bn;

  std::vector<Tensor2> head_weights;  // hidden layers then the scalar output row
  std::vector<BatchNormState> head_bn;

  using TensorVisitor = std::function<void(const std::string& name, Tensor2& tensor)>;
  using ConstTensorVisitor = std::function<void(const std::string& name, const Tensor2& tensor)>;

  /// Learnable tensors (weights, biases, batch-norm gamma/beta), in a fixed order.
  void for_each_learnable(const TensorVisitor& fn);
  void for_each_learnable(const ConstTensorVisitor& fn) const;
  /// Learnable tensors plus batch-norm running statistics.
  void for_each_tensor(const TensorVisitor& fn);
  void for_each_tensor(const ConstTensorVisitor& fn) const;

  /// Same structure, all entries zero (used for gradients).
  ModelParameters zeros_like() const;

  bool operator==(const ModelParameters& other) const;
};

/// Xavier for the language and head stacks, 0.001 * N(0,1) for A, B and W,
/// zero biases and identity batch norms.
ModelParameters init_model(const ModelConfig& config, Rng& rng);

struct AttentionMap {
  Vector weights;
};

// ---------------------------------------------------------------------------
// Batched engine. Columns of every intermediate tensor are question/answer
// pairs; batch-norm statistics (train mode) are taken over the whole batch.

struct PairInput {
  const RegionSet* regions = nullptr;  // unused by language_only
  std::span<const double> language;    // LanguageEncoding::flat
};

struct DenseBnReluCache {
  Tensor2 input;
  Tensor2 bn_input;
  Tensor2 relu_input;
  BatchNormCache bn;
};

struct ForwardCache {
  BnMode mode = BnMode::infer;
  Tensor2 lang_input;
  std::vector<DenseBnReluCache> lang;
  Tensor2 lang_out;  // x_l, one column per pair

  // Per pair, region_sel only.
  std::vector<Vector> lang_proj;   // g_l
  std::vector<Vector> region_query;  // A^T g_l
  std::vector<Vector> attention;   // s, for every variant with regions
  Tensor2 fuse_input;              // [X s; x_l]
  Tensor2 fuse_pre;                // W [X s; x_l] + b_o, pre-ReLU
  Tensor2 fuse_relu;               // BN input
  BatchNormCache fuse_bn;

  Tensor2 head_input;
  std::vector<DenseBnReluCache> head;
  Tensor2 head_final_input;
  Vector scores;
};

ForwardCache forward_batch(const ModelParameters& params, const ModelConfig& config,
                           std::span<const PairInput> batch, BnMode mode);

/// Gradients of sum_i dscores[i] * score_i with respect to every learnable
/// tensor, returned in a ModelParameters-shaped container.
ModelParameters backward_batch(const ModelParameters& params, const ModelConfig& config,
                               const ForwardCache& cache, std::span<const PairInput> batch,
                               std::span<const double> dscores);

/// Folds the train-mode batch statistics in `cache` into the running stats.
void update_running_stats(ModelParameters& params, const ForwardCache& cache);

// ---------------------------------------------------------------------------
// Single-pair operations (inference-mode batch norm).

/// Three affine -> batch-norm -> ReLU blocks; the result is x_l.
Vector encode_language_features(const LanguageEncoding& encoding, const ModelParameters& params,
                                const ModelConfig& config);

/// softmax over regions of (A x_r + b_r)^T (B x_l + b_l).
AttentionMap region_relevance(const RegionSet& regions, std::span<const double> x_l,
                              const ModelParameters& params);

/// Projects every [x_r; x_l] with W, averages the columns with the attention
/// weights, then ReLU and batch norm. This is the literal per-region route;
/// the batched engine uses the algebraically equal W [X s; x_l] + b_o.
Vector fuse_regions(const RegionSet& regions, std::span<const double> x_l,
                    const AttentionMap& attention, const ModelParameters& params);

/// Applies the scoring head to a fused feature (or x_l for language_only).
double score_head(std::span<const double> features, const ModelParameters& params);

struct PairScore {
  double score = 0.0;
  AttentionMap attention;  // empty for language_only
};

/// Full pipeline for the configured variant.
PairScore score_pair(const RegionSet& regions, const LanguageEncoding& encoding,
                     const ModelParameters& params, const ModelConfig& config);

/// Scalar score of a baseline variant (anything but region_sel).
double score_pair_variant(const RegionSet& regions, const LanguageEncoding& encoding,
                          const ModelParameters& params, const ModelConfig& config);

}  // namespace regionqa

#endif  // REGIONQA_MODEL_HPP_
