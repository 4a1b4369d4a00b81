#ifndef REGIONQA_LAYERS_HPP_
#define REGIONQA_LAYERS_HPP_

#include <span>

#include "regionqa/rng.hpp"
#include "regionqa/tensor.hpp"

namespace regionqa {

// ---------------------------------------------------------------------------
// Affine: y = W x + b, with b broadcast across the columns of x. An empty bias
// tensor means the layer has no bias.

Tensor2 affine(const Tensor2& x, const Tensor2& weight, const Tensor2& bias);

struct AffineGrads {
  Tensor2 weight;
  Tensor2 bias;  // empty when the layer has no bias
  Tensor2 x;
};

AffineGrads affine_backward(const Tensor2& dy, const Tensor2& x, const Tensor2& weight,
                            bool has_bias);

// ---------------------------------------------------------------------------
// ReLU

Tensor2 relu(const Tensor2& x);
/// Gradient through relu given the layer input.
Tensor2 relu_backward(const Tensor2& dy, const Tensor2& x);

// ---------------------------------------------------------------------------
// Softmax over a vector, computed with max subtraction.

Vector softmax(std::span<const double> z);
/// Vector-Jacobian product: given s = softmax(z) and dL/ds, returns dL/dz.
Vector softmax_vjp(std::span<const double> s, std::span<const double> ds);

// ---------------------------------------------------------------------------
// Batch normalization over the columns (samples) of a features x batch tensor.

enum class BnMode { train, infer };

struct BatchNormState {
  Tensor2 gamma;         // n x 1
  Tensor2 beta;          // n x 1
  Tensor2 running_mean;  // n x 1
  Tensor2 running_var;   // n x 1
  double epsilon = 1e-5;
  double momentum = 0.1;

  static BatchNormState identity(std::size_t features, double epsilon = 1e-5,
                                 double momentum = 0.1);
  std::size_t features() const { return gamma.rows(); }
};

struct BatchNormCache {
  BnMode mode = BnMode::infer;
  Tensor2 normalized;  // x_hat
  Vector mean;
  Vector var;          // biased batch variance (train) or running var (infer)
  Vector inv_std;
  std::size_t batch = 0;
};

/// Pure forward pass. Fills `cache` when non-null.
Tensor2 batch_norm_forward(const Tensor2& x, const BatchNormState& state, BnMode mode,
                           BatchNormCache* cache = nullptr);

/// Forward pass that, in train mode, also folds the batch statistics into the
/// running estimates.
Tensor2 batch_norm(const Tensor2& x, BatchNormState& state, BnMode mode);

void update_running_stats(BatchNormState& state, const BatchNormCache& cache);

struct BatchNormGrads {
  Tensor2 x;
  Tensor2 gamma;
  Tensor2 beta;
};

BatchNormGrads batch_norm_backward(const Tensor2& dy, const BatchNormCache& cache,
                                   const BatchNormState& state);

// ---------------------------------------------------------------------------
// Initialization

enum class InitScheme {
  xavier,           // uniform in +-1/sqrt(n_in)
  attention_small,  // 0.001 * N(0, 1)
};

/// A rows x cols weight maps an input of size `cols` (n_in) to `rows` outputs.
Tensor2 init_params(std::size_t rows, std::size_t cols, InitScheme scheme, Rng& rng);

}  // namespace regionqa

#endif  // REGIONQA_LAYERS_HPP_
