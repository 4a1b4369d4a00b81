#include "regionqa/model.hpp"

#include <algorithm>

#include "regionqa/errors.hpp"

namespace regionqa {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::region_sel: return "region_sel";
    case Variant::language_only: return "language_only";
    case Variant::whole_image: return "whole_image";
    case Variant::uniform_regions: return "uniform_regions";
  }
  return "region_sel";
}

Variant parse_variant(std::string_view name) {
  if (name == "region_sel") return Variant::region_sel;
  if (name == "language_only") return Variant::language_only;
  if (name == "whole_image") return Variant::whole_image;
  if (name == "uniform_regions") return Variant::uniform_regions;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.word_dim = 300;
  c.lang_hidden_dims = {2048, 1500, 1024};
  c.embed_dim = 900;
  c.fused_dim = 2048;
  c.head_dims = {900, 1};
  c.feature_dim = 5096;
  return c;
}

std::size_t ModelConfig::head_input_dim() const {
  return variant == Variant::language_only ? language_output_dim() : fused_dim;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ShapeError(std::string("model config: ") + what + " must be positive");
  };
  positive(word_dim, "word_dim");
  positive(embed_dim, "embed_dim");
  positive(fused_dim, "fused_dim");
  positive(feature_dim, "feature_dim");
  if (lang_hidden_dims.empty()) throw ShapeError("model config: lang_hidden_dims is empty");
  for (std::size_t d : lang_hidden_dims) positive(d, "lang_hidden_dims entry");
  if (head_dims.empty() || head_dims.back() != 1) {
    throw ShapeError("model config: head_dims must end with 1");
  }
  for (std::size_t d : head_dims) positive(d, "head_dims entry");
  if (!(bn_epsilon > 0.0)) throw ShapeError("model config: bn_epsilon must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) {
    throw ShapeError("model config: bn_momentum must lie in (0, 1)");
  }
}

// ---------------------------------------------------------------------------

namespace {

template <typename Params, typename Fn>
void visit_bn(Params& bn, const std::string& prefix, bool with_state, Fn& fn,
              bool learn_beta = true) {
  fn(prefix + ".gamma", bn.gamma);
  if (learn_beta || with_state) fn(prefix + ".beta", bn.beta);
  if (with_state) {
    fn(prefix + ".running_mean", bn.running_mean);
    fn(prefix + ".running_var", bn.running_var);
  }
}

template <typename Params, typename Fn>
void visit_all(Params& p, bool with_state, Fn&& fn) {
  auto visit = [&](const std::string& name, auto& t) {
    if (!t.empty()) fn(name, t);
  };
  for (std::size_t i = 0; i < p.lang_weights.size(); ++i) {
    const std::string prefix = "lang." + std::to_string(i);
    visit(prefix + ".weight", p.lang_weights[i]);
    visit_bn(p.lang_bn[i], prefix + ".bn", with_state, visit);
  }
  visit("attn.A", p.proj_region);
  visit("attn.b_r", p.proj_region_bias);
  visit("attn.B", p.proj_lang);
  visit("attn.b_l", p.proj_lang_bias);
  visit("fuse.W", p.fuse_weight);
  visit("fuse.b_o", p.fuse_bias);
  // The fusion norm feeds head.0's affine and norm, whose mean subtraction
  // cancels any shift, so its beta never receives gradient.
  if (!p.fuse_bn.gamma.empty()) visit_bn(p.fuse_bn, std::string("fuse.bn"), with_state, visit, false);
  for (std::size_t i = 0; i < p.head_weights.size(); ++i) {
    const std::string prefix = "head." + std::to_string(i);
    visit(prefix + ".weight", p.head_weights[i]);
    if (i < p.head_bn.size()) visit_bn(p.head_bn[i], prefix + ".bn", with_state, visit);
  }
}

}  // namespace

void ModelParameters::for_each_learnable(const TensorVisitor& fn) { visit_all(*this, false, fn); }
void ModelParameters::for_each_learnable(const ConstTensorVisitor& fn) const {
  visit_all(*this, false, fn);
}
void ModelParameters::for_each_tensor(const TensorVisitor& fn) { visit_all(*this, true, fn); }
void ModelParameters::for_each_tensor(const ConstTensorVisitor& fn) const {
  visit_all(*this, true, fn);
}

ModelParameters ModelParameters::zeros_like() const {
  ModelParameters z = *this;
  z.for_each_tensor([](const std::string&, Tensor2& t) { t.fill(0.0); });
  return z;
}

bool ModelParameters::operator==(const ModelParameters& other) const {
  std::vector<std::pair<std::string, const Tensor2*>> mine, theirs;
  for_each_tensor([&](const std::string& n, const Tensor2& t) { mine.emplace_back(n, &t); });
  other.for_each_tensor([&](const std::string& n, const Tensor2& t) { theirs.emplace_back(n, &t); });
  if (mine.size() != theirs.size()) return false;
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].first != theirs[i].first || !(*mine[i].second == *theirs[i].second)) return false;
  }
  return true;
}

ModelParameters init_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParameters p;
  auto bn = [&](std::size_t n) {
    return BatchNormState::identity(n, config.bn_epsilon, config.bn_momentum);
  };

  std::size_t in = config.language_input_dim();
  for (std::size_t out : config.lang_hidden_dims) {
    p.lang_weights.push_back(init_params(out, in, InitScheme::xavier, rng));
    p.lang_bn.push_back(bn(out));
    in = out;
  }
  const std::size_t lang_out = config.language_output_dim();

  if (config.has_attention()) {
    p.proj_region = init_params(config.embed_dim, config.feature_dim, InitScheme::attention_small, rng);
    p.proj_region_bias = Tensor2(config.embed_dim, 1);
    p.proj_lang = init_params(config.embed_dim, lang_out, InitScheme::attention_small, rng);
    p.proj_lang_bias = Tensor2(config.embed_dim, 1);
  }
  if (config.has_fusion()) {
    p.fuse_weight = init_params(config.fused_dim, config.feature_dim + lang_out,
                                InitScheme::attention_small, rng);
    p.fuse_bias = Tensor2(config.fused_dim, 1);
    p.fuse_bn = bn(config.fused_dim);
  }

  in = config.head_input_dim();
  for (std::size_t i = 0; i < config.head_dims.size(); ++i) {
    const std::size_t out = config.head_dims[i];
    p.head_weights.push_back(init_params(out, in, InitScheme::xavier, rng));
    if (i + 1 < config.head_dims.size()) p.head_bn.push_back(bn(out));
    in = out;
  }
  return p;
}

// ---------------------------------------------------------------------------

namespace {

const Tensor2 kNoBias;

Tensor2 dense_bn_relu_forward(const Tensor2& x, const Tensor2& weight, const BatchNormState& bn,
                              BnMode mode, DenseBnReluCache& cache) {
  cache.input = x;
  cache.bn_input = affine(x, weight, kNoBias);
  cache.relu_input = batch_norm_forward(cache.bn_input, bn, mode, &cache.bn);
  return relu(cache.relu_input);
}

/// Accumulates into dweight / dgamma / dbeta, returns dL/dx.
Tensor2 dense_bn_relu_backward(const Tensor2& dout, const Tensor2& weight,
                               const BatchNormState& bn, const DenseBnReluCache& cache,
                               Tensor2& dweight, BatchNormState& dbn) {
  const Tensor2 drelu = relu_backward(dout, cache.relu_input);
  BatchNormGrads g = batch_norm_backward(drelu, cache.bn, bn);
  dbn.gamma = std::move(g.gamma);
  dbn.beta = std::move(g.beta);
  AffineGrads ag = affine_backward(g.x, cache.input, weight, false);
  dweight = std::move(ag.weight);
  return std::move(ag.x);
}

void check_regions(const RegionSet& rs, std::size_t feature_dim) {
  if (rs.size() == 0) throw ShapeError("region set '" + rs.image_id + "' is empty");
  if (rs.features.rows() != feature_dim || rs.features.cols() != rs.size()) {
    throw ShapeError("region set '" + rs.image_id + "' features " + rs.features.shape_string() +
                     " do not match feature_dim " + std::to_string(feature_dim) + " and " +
                     std::to_string(rs.size()) + " boxes");
  }
}

}  // namespace

ForwardCache forward_batch(const ModelParameters& params, const ModelConfig& config,
                           std::span<const PairInput> batch, BnMode mode) {
  const std::size_t n = batch.size();
  if (n == 0) throw ShapeError("forward_batch: empty batch");
  ForwardCache cache;
  cache.mode = mode;

  const std::size_t in_dim = config.language_input_dim();
  cache.lang_input = Tensor2(in_dim, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (batch[i].language.size() != in_dim) {
      throw ShapeError("language encoding has length " + std::to_string(batch[i].language.size()) +
                       ", model expects " + std::to_string(in_dim));
    }
    cache.lang_input.set_col(i, batch[i].language);
  }

  Tensor2 h = cache.lang_input;
  cache.lang.resize(params.lang_weights.size());
  for (std::size_t k = 0; k < params.lang_weights.size(); ++k) {
    h = dense_bn_relu_forward(h, params.lang_weights[k], params.lang_bn[k], mode, cache.lang[k]);
  }
  cache.lang_out = h;
  const std::size_t lang_dim = h.rows();

  if (config.has_fusion()) {
    const std::size_t fdim = config.feature_dim;
    cache.fuse_input = Tensor2(fdim + lang_dim, n);
    cache.attention.resize(n);
    if (config.has_attention()) {
      cache.lang_proj.resize(n);
      cache.region_query.resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const RegionSet& rs = *batch[i].regions;
      check_regions(rs, fdim);
      const Vector x_l = cache.lang_out.col(i);
      const std::size_t count = rs.size();
      Vector s;
      switch (config.variant) {
        case Variant::region_sel: {
          Vector g = matvec(params.proj_lang, x_l);
          for (std::size_t e = 0; e < g.size(); ++e) g[e] += params.proj_lang_bias(e, 0);
          Vector q = matvec_t(params.proj_region, g);
          // b_r^T g_l is common to every region and cancels in the softmax.
          s = softmax(matvec_t(rs.features, q));
          cache.lang_proj[i] = std::move(g);
          cache.region_query[i] = std::move(q);
          break;
        }
        case Variant::uniform_regions:
          s.assign(count, 1.0 / static_cast<double>(count));
          break;
        case Variant::whole_image:
          s.assign(count, 0.0);
          s[rs.whole_image_index] = 1.0;
          break;
        case Variant::language_only:
          break;
      }
      const Vector pooled = matvec(rs.features, s);
      for (std::size_t d = 0; d < fdim; ++d) cache.fuse_input(d, i) = pooled[d];
      for (std::size_t d = 0; d < lang_dim; ++d) cache.fuse_input(fdim + d, i) = x_l[d];
      cache.attention[i] = std::move(s);
    }
    cache.fuse_pre = affine(cache.fuse_input, params.fuse_weight, params.fuse_bias);
    cache.fuse_relu = relu(cache.fuse_pre);
    cache.head_input = batch_norm_forward(cache.fuse_relu, params.fuse_bn, mode, &cache.fuse_bn);
  } else {
    cache.head_input = cache.lang_out;
  }

  h = cache.head_input;
  cache.head.resize(params.head_bn.size());
  for (std::size_t k = 0; k < params.head_bn.size(); ++k) {
    h = dense_bn_relu_forward(h, params.head_weights[k], params.head_bn[k], mode, cache.head[k]);
  }
  cache.head_final_input = h;
  const Tensor2 out = matmul(params.head_weights.back(), h);
  cache.scores.assign(out.data().begin(), out.data().end());
  return cache;
}

ModelParameters backward_batch(const ModelParameters& params, const ModelConfig& config,
                               const ForwardCache& cache, std::span<const PairInput> batch,
                               std::span<const double> dscores) {
  const std::size_t n = batch.size();
  if (dscores.size() != n) throw ShapeError("backward_batch: dscores length mismatch");
  ModelParameters grads = params.zeros_like();

  // Head.
  const Tensor2 dout(1, n, std::vector<double>(dscores.begin(), dscores.end()));
  AffineGrads last = affine_backward(dout, cache.head_final_input, params.head_weights.back(), false);
  grads.head_weights.back() = std::move(last.weight);
  Tensor2 dh = std::move(last.x);
  for (std::size_t k = params.head_bn.size(); k-- > 0;) {
    dh = dense_bn_relu_backward(dh, params.head_weights[k], params.head_bn[k], cache.head[k],
                                grads.head_weights[k], grads.head_bn[k]);
  }

  Tensor2 dlang;
  if (config.has_fusion()) {
    BatchNormGrads bng = batch_norm_backward(dh, cache.fuse_bn, params.fuse_bn);
    grads.fuse_bn.gamma = std::move(bng.gamma);
    grads.fuse_bn.beta = std::move(bng.beta);
    const Tensor2 dpre = relu_backward(bng.x, cache.fuse_pre);
    AffineGrads fg = affine_backward(dpre, cache.fuse_input, params.fuse_weight, true);
    grads.fuse_weight = std::move(fg.weight);
    grads.fuse_bias = std::move(fg.bias);

    const std::size_t fdim = config.feature_dim;
    const std::size_t lang_dim = cache.lang_out.rows();
    dlang = Tensor2(lang_dim, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < lang_dim; ++d) dlang(d, i) = fg.x(fdim + d, i);
      if (!config.has_attention()) continue;

      const RegionSet& rs = *batch[i].regions;
      Vector dpooled(fdim);
      for (std::size_t d = 0; d < fdim; ++d) dpooled[d] = fg.x(d, i);
      // pooled = X s
      const Vector ds = matvec_t(rs.features, dpooled);
      const Vector dz = softmax_vjp(cache.attention[i], ds);
      // z = X^T q
      const Vector dq = matvec(rs.features, dz);
      // q = A^T g
      add_outer(grads.proj_region, cache.lang_proj[i], dq);
      const Vector dg = matvec(params.proj_region, dq);
      // g = B x_l + b_l
      const Vector x_l = cache.lang_out.col(i);
      add_outer(grads.proj_lang, dg, x_l);
      for (std::size_t e = 0; e < dg.size(); ++e) grads.proj_lang_bias(e, 0) += dg[e];
      const Vector dx = matvec_t(params.proj_lang, dg);
      for (std::size_t d = 0; d < lang_dim; ++d) dlang(d, i) += dx[d];
    }
  } else {
    dlang = std::move(dh);
  }

  for (std::size_t k = params.lang_weights.size(); k-- > 0;) {
    dlang = dense_bn_relu_backward(dlang, params.lang_weights[k], params.lang_bn[k], cache.lang[k],
                                   grads.lang_weights[k], grads.lang_bn[k]);
  }
  return grads;
}

void update_running_stats(ModelParameters& params, const ForwardCache& cache) {
  if (cache.mode != BnMode::train) return;
  for (std::size_t k = 0; k < params.lang_bn.size(); ++k)
    update_running_stats(params.lang_bn[k], cache.lang[k].bn);
  if (!params.fuse_bn.gamma.empty()) update_running_stats(params.fuse_bn, cache.fuse_bn);
  for (std::size_t k = 0; k < params.head_bn.size(); ++k)
    update_running_stats(params.head_bn[k], cache.head[k].bn);
}

// ---------------------------------------------------------------------------

Vector encode_language_features(const LanguageEncoding& encoding, const ModelParameters& params,
                                const ModelConfig& config) {
  if (encoding.flat.size() != config.language_input_dim()) {
    throw ShapeError("encode_language_features: encoding has length " +
                     std::to_string(encoding.flat.size()) + ", model expects " +
                     std::to_string(config.language_input_dim()));
  }
  Tensor2 h = Tensor2::column(encoding.flat);
  for (std::size_t k = 0; k < params.lang_weights.size(); ++k) {
    DenseBnReluCache unused;
    h = dense_bn_relu_forward(h, params.lang_weights[k], params.lang_bn[k], BnMode::infer, unused);
  }
  return h.col(0);
}

AttentionMap region_relevance(const RegionSet& regions, std::span<const double> x_l,
                              const ModelParameters& params) {
  if (regions.size() == 0) throw ShapeError("region_relevance: empty region set");
  if (params.proj_region.empty()) throw ShapeError("region_relevance: model has no attention layer");
  check_regions(regions, params.proj_region.cols());
  const Tensor2 projected = affine(regions.features, params.proj_region, params.proj_region_bias);
  const Tensor2 g = affine(Tensor2::column(x_l), params.proj_lang, params.proj_lang_bias);
  const Tensor2 logits = matmul_tn(projected, g);
  return AttentionMap{softmax(logits.data())};
}

Vector fuse_regions(const RegionSet& regions, std::span<const double> x_l,
                    const AttentionMap& attention, const ModelParameters& params) {
  const std::size_t count = regions.size();
  if (attention.weights.size() != count) {
    throw ShapeError("fuse_regions: " + std::to_string(attention.weights.size()) +
                     " attention weights for " + std::to_string(count) + " regions");
  }
  const std::size_t fdim = regions.feature_dim();
  if (params.fuse_weight.cols() != fdim + x_l.size()) {
    throw ShapeError("fuse_regions: W is " + params.fuse_weight.shape_string() + ", inputs are " +
                     std::to_string(fdim) + " + " + std::to_string(x_l.size()));
  }
  Tensor2 stacked(fdim + x_l.size(), count);
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t d = 0; d < fdim; ++d) stacked(d, r) = regions.features(d, r);
    for (std::size_t d = 0; d < x_l.size(); ++d) stacked(fdim + d, r) = x_l[d];
  }
  const Tensor2 projected = affine(stacked, params.fuse_weight, params.fuse_bias);
  const Tensor2 averaged = matmul(projected, Tensor2::column(attention.weights));
  const Tensor2 out = batch_norm_forward(relu(averaged), params.fuse_bn, BnMode::infer);
  return out.col(0);
}

double score_head(std::span<const double> features, const ModelParameters& params) {
  Tensor2 h = Tensor2::column(features);
  for (std::size_t k = 0; k < params.head_bn.size(); ++k) {
    DenseBnReluCache unused;
    h = dense_bn_relu_forward(h, params.head_weights[k], params.head_bn[k], BnMode::infer, unused);
  }
  return matmul(params.head_weights.back(), h)(0, 0);
}

PairScore score_pair(const RegionSet& regions, const LanguageEncoding& encoding,
                     const ModelParameters& params, const ModelConfig& config) {
  const PairInput input{&regions, encoding.flat};
  const ForwardCache cache = forward_batch(params, config, std::span(&input, 1), BnMode::infer);
  PairScore out;
  out.score = cache.scores[0];
  if (!cache.attention.empty()) out.attention.weights = cache.attention[0];
  return out;
}

double score_pair_variant(const RegionSet& regions, const LanguageEncoding& encoding,
                          const ModelParameters& params, const ModelConfig& config) {
  if (config.variant == Variant::region_sel) {
    throw std::invalid_argument("score_pair_variant: use score_pair for region_sel");
  }
  return score_pair(regions, encoding, params, config).score;
}

}  // namespace regionqa
