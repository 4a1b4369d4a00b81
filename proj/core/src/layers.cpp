#include "regionqa/layers.hpp"

#include <algorithm>
#include <cmath>

#include "regionqa/errors.hpp"

namespace regionqa {

Tensor2 affine(const Tensor2& x, const Tensor2& weight, const Tensor2& bias) {
  if (weight.cols() != x.rows()) {
    throw ShapeError("affine: weight " + weight.shape_string() + " incompatible with input " +
                     x.shape_string());
  }
  if (!bias.empty() && (bias.rows() != weight.rows() || bias.cols() != 1)) {
    throw ShapeError("affine: bias " + bias.shape_string() + " incompatible with weight " +
                     weight.shape_string());
  }
  Tensor2 y = matmul(weight, x);
  if (!bias.empty()) {
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const double b = bias(r, 0);
      for (double& v : y.row(r)) v += b;
    }
  }
  return y;
}

AffineGrads affine_backward(const Tensor2& dy, const Tensor2& x, const Tensor2& weight,
                            bool has_bias) {
  if (dy.rows() != weight.rows() || dy.cols() != x.cols()) {
    throw ShapeError("affine_backward: upstream " + dy.shape_string() + " vs weight " +
                     weight.shape_string() + " and input " + x.shape_string());
  }
  AffineGrads g;
  g.weight = matmul_nt(dy, x);
  if (has_bias) {
    g.bias = Tensor2(dy.rows(), 1);
    for (std::size_t r = 0; r < dy.rows(); ++r) {
      double acc = 0.0;
      for (double v : dy.row(r)) acc += v;
      g.bias(r, 0) = acc;
    }
  }
  g.x = matmul_tn(weight, dy);
  return g;
}

Tensor2 relu(const Tensor2& x) {
  Tensor2 y = x;
  for (double& v : y.data()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  return y;
}

Tensor2 relu_backward(const Tensor2& dy, const Tensor2& x) {
  Tensor2 dx = dy;
  auto xs = x.data();
  auto ds = dx.data();
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!(xs[i] > 0.0)) ds[i] = 0.0;
  return dx;
}

Vector softmax(std::span<const double> z) {
  if (z.empty()) throw ShapeError("softmax: empty input");
  const double zmax = *std::max_element(z.begin(), z.end());
  Vector s(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    s[i] = std::exp(z[i] - zmax);
    total += s[i];
  }
  for (double& v : s) v /= total;
  return s;
}

Vector softmax_vjp(std::span<const double> s, std::span<const double> ds) {
  if (s.size() != ds.size()) throw ShapeError("softmax_vjp: length mismatch");
  const double inner = dot(s, ds);
  Vector dz(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) dz[i] = s[i] * (ds[i] - inner);
  return dz;
}

BatchNormState BatchNormState::identity(std::size_t features, double epsilon, double momentum) {
  BatchNormState st;
  st.gamma = Tensor2(features, 1, 1.0);
  st.beta = Tensor2(features, 1, 0.0);
  st.running_mean = Tensor2(features, 1, 0.0);
  st.running_var = Tensor2(features, 1, 1.0);
  st.epsilon = epsilon;
  st.momentum = momentum;
  return st;
}

Tensor2 batch_norm_forward(const Tensor2& x, const BatchNormState& state, BnMode mode,
                           BatchNormCache* cache) {
  const std::size_t n = x.rows();
  const std::size_t batch = x.cols();
  if (n != state.features()) {
    throw ShapeError("batch_norm: input " + x.shape_string() + " has " + std::to_string(n) +
                     " features, state has " + std::to_string(state.features()));
  }
  if (mode == BnMode::train && batch < 2) {
    throw ShapeError("batch_norm: train mode needs at least 2 samples, got " +
                     std::to_string(batch));
  }

  Vector mean(n), var(n), inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (mode == BnMode::train) {
      const auto row = x.row(r);
      double m = 0.0;
      for (double v : row) m += v;
      m /= static_cast<double>(batch);
      double s2 = 0.0;
      for (double v : row) s2 += (v - m) * (v - m);
      mean[r] = m;
      var[r] = s2 / static_cast<double>(batch);
    } else {
      mean[r] = state.running_mean(r, 0);
      var[r] = state.running_var(r, 0);
    }
    inv_std[r] = 1.0 / std::sqrt(var[r] + state.epsilon);
  }

  Tensor2 normalized(n, batch);
  Tensor2 y(n, batch);
  for (std::size_t r = 0; r < n; ++r) {
    const double g = state.gamma(r, 0);
    const double b = state.beta(r, 0);
    for (std::size_t c = 0; c < batch; ++c) {
      const double xh = (x(r, c) - mean[r]) * inv_std[r];
      normalized(r, c) = xh;
      y(r, c) = g * xh + b;
    }
  }

  if (cache != nullptr) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->inv_std = std::move(inv_std);
    cache->batch = batch;
  }
  return y;
}

Tensor2 batch_norm(const Tensor2& x, BatchNormState& state, BnMode mode) {
  BatchNormCache cache;
  Tensor2 y = batch_norm_forward(x, state, mode, &cache);
  if (mode == BnMode::train) update_running_stats(state, cache);
  return y;
}

void update_running_stats(BatchNormState& state, const BatchNormCache& cache) {
  if (cache.mode != BnMode::train) return;
  const double m = state.momentum;
  const double unbias =
      static_cast<double>(cache.batch) / static_cast<double>(cache.batch - 1);
  for (std::size_t r = 0; r < state.features(); ++r) {
    state.running_mean(r, 0) = (1.0 - m) * state.running_mean(r, 0) + m * cache.mean[r];
    state.running_var(r, 0) = (1.0 - m) * state.running_var(r, 0) + m * cache.var[r] * unbias;
  }
}

BatchNormGrads batch_norm_backward(const Tensor2& dy, const BatchNormCache& cache,
                                   const BatchNormState& state) {
  const std::size_t n = dy.rows();
  const std::size_t batch = dy.cols();
  BatchNormGrads g;
  g.x = Tensor2(n, batch);
  g.gamma = Tensor2(n, 1);
  g.beta = Tensor2(n, 1);
  const double inv_batch = 1.0 / static_cast<double>(batch);

  for (std::size_t r = 0; r < n; ++r) {
    const auto dy_row = dy.row(r);
    const auto xh_row = cache.normalized.row(r);
    double sum_dy = 0.0;
    double sum_dy_xh = 0.0;
    for (std::size_t c = 0; c < batch; ++c) {
      sum_dy += dy_row[c];
      sum_dy_xh += dy_row[c] * xh_row[c];
    }
    g.beta(r, 0) = sum_dy;
    g.gamma(r, 0) = sum_dy_xh;

    const double scale = state.gamma(r, 0) * cache.inv_std[r];
    auto dx_row = g.x.row(r);
    if (cache.mode == BnMode::train) {
      const double mean_dy = sum_dy * inv_batch;
      const double mean_dy_xh = sum_dy_xh * inv_batch;
      for (std::size_t c = 0; c < batch; ++c)
        dx_row[c] = scale * (dy_row[c] - mean_dy - xh_row[c] * mean_dy_xh);
    } else {
      for (std::size_t c = 0; c < batch; ++c) dx_row[c] = scale * dy_row[c];
    }
  }
  return g;
}

Tensor2 init_params(std::size_t rows, std::size_t cols, InitScheme scheme, Rng& rng) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("init_params: dims must be positive, got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  Tensor2 w(rows, cols);
  switch (scheme) {
    case InitScheme::xavier: {
      const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      for (double& v : w.data()) v = rng.uniform(-bound, bound);
      break;
    }
    case InitScheme::attention_small:
      for (double& v : w.data()) v = 0.001 * rng.normal();
      break;
  }
  return w;
}

}  // namespace regionqa
