#include "regionqa/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json_util.hpp"
#include "regionqa/errors.hpp"
#include "regionqa/evaluation.hpp"

namespace regionqa {

std::vector<McRecord> load_records(const std::filesystem::path& path,
                                   const std::unordered_set<std::string>& noun_lexicon) {
  std::vector<McRecord> out;
  detail::for_each_json_line(path, [&](const nlohmann::json& j) {
    McRecord r;
    const auto& qid = j.at("qid");
    r.question_id = qid.is_string() ? qid.get<std::string>() : qid.dump();
    const auto& img = j.at("image");
    r.image_id = img.is_string() ? img.get<std::string>() : img.dump();
    r.question = detail::parse_question_tokens(j.at("question_tokens"), noun_lexicon);
    for (const auto& c : j.at("choices")) {
      r.answers.push_back(c.at("answer_tokens").get<std::vector<std::string>>());
      r.fractions.push_back(c.at("fraction").get<double>());
    }
    if (r.answers.size() < 2) {
      throw DataError(path.string() + ": question '" + r.question_id + "' has fewer than 2 choices");
    }
    for (double a : r.fractions) {
      if (!(a >= 0.0 && a <= 1.0)) {
        throw DataError(path.string() + ": question '" + r.question_id +
                        "' has a fraction outside [0, 1]");
      }
    }
    out.push_back(std::move(r));
  });
  return out;
}

void write_records(const std::filesystem::path& path, std::span<const McRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const McRecord& r : records) {
    nlohmann::json j;
    j["qid"] = r.question_id;
    j["image"] = r.image_id;
    j["question_tokens"] = nlohmann::json::array();
    for (const AnnotatedToken& t : r.question) {
      j["question_tokens"].push_back(
          {{"surface", t.surface}, {"pos", to_string(t.pos)}, {"dep", to_string(t.dep)}});
    }
    j["choices"] = nlohmann::json::array();
    for (std::size_t c = 0; c < r.answers.size(); ++c) {
      j["choices"].push_back({{"answer_tokens", r.answers[c]}, {"fraction", r.fractions[c]}});
    }
    out << j.dump() << '\n';
  }
}

McExample encode_record(const McRecord& record, const EmbeddingTable& table, LanguageScheme scheme) {
  McExample ex;
  ex.question_id = record.question_id;
  ex.image_id = record.image_id;
  for (const auto& t : record.question) ex.question_words.push_back(t.surface);
  ex.answers = record.answers;
  ex.annotator_fraction = record.fractions;
  for (const auto& answer : record.answers) {
    ex.encodings.push_back(encode_qa(record.question, answer, table, scheme));
  }
  ex.correct_index = static_cast<std::size_t>(
      std::max_element(ex.annotator_fraction.begin(), ex.annotator_fraction.end()) -
      ex.annotator_fraction.begin());
  return ex;
}

std::vector<McExample> encode_records(std::span<const McRecord> records,
                                      const EmbeddingTable& table, LanguageScheme scheme) {
  std::vector<McExample> out;
  out.reserve(records.size());
  for (const McRecord& r : records) out.push_back(encode_record(r, table, scheme));
  return out;
}

// ---------------------------------------------------------------------------

HingeResult consensus_hinge_loss(std::span<const double> scores, std::span<const double> fractions,
                                 std::size_t correct_index) {
  if (scores.size() < 2) throw std::invalid_argument("consensus_hinge_loss: need at least 2 choices");
  if (fractions.size() != scores.size()) {
    throw std::invalid_argument("consensus_hinge_loss: scores and fractions differ in length");
  }
  if (correct_index >= scores.size()) {
    throw std::invalid_argument("consensus_hinge_loss: correct index out of range");
  }
  HingeResult out;
  out.grad.assign(scores.size(), 0.0);
  const double yp = scores[correct_index];
  const double ap = fractions[correct_index];
  for (std::size_t n = 0; n < scores.size(); ++n) {
    if (n == correct_index) continue;
    const double slack = scores[n] + (ap - fractions[n]) - yp;
    if (slack > out.loss || std::isnan(slack)) {
      out.loss = slack;
      out.violator = n;
    }
  }
  if (out.violator != static_cast<std::size_t>(-1)) {
    out.grad[out.violator] = 1.0;
    out.grad[correct_index] = -1.0;
  }
  return out;
}

void sgd_step(ModelParameters& params, const ModelParameters& grads, double learning_rate) {
  std::vector<const Tensor2*> g;
  grads.for_each_learnable([&](const std::string&, const Tensor2& t) { g.push_back(&t); });
  std::size_t i = 0;
  params.for_each_learnable([&](const std::string& name, Tensor2& p) {
    if (i >= g.size() || g[i]->rows() != p.rows() || g[i]->cols() != p.cols()) {
      throw ShapeError("sgd_step: gradient for '" + name + "' does not match the parameter");
    }
    axpy(-learning_rate, g[i]->data(), p.data());
    ++i;
  });
  if (i != g.size()) throw ShapeError("sgd_step: gradient has extra tensors");
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(heldout_fraction > 0.0 && heldout_fraction < 0.5)) {
    throw std::invalid_argument("train config: heldout_fraction must lie in (0, 0.5)");
  }
}

bool is_heldout(const std::string& question_id, double heldout_fraction) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : question_id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return static_cast<double>(h % 1000000ull) < heldout_fraction * 1000000.0;
}

DatasetSplit split_dataset(std::span<const McExample> examples, double heldout_fraction) {
  DatasetSplit split;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    (is_heldout(examples[i].question_id, heldout_fraction) ? split.heldout : split.train).push_back(i);
  }
  // Too few questions to split: select on the training questions themselves.
  if (split.train.empty() || split.heldout.empty()) {
    split.train.clear();
    for (std::size_t i = 0; i < examples.size(); ++i) split.train.push_back(i);
    split.heldout = split.train;
  }
  return split;
}

namespace {

const RegionSet& lookup_regions(const FeatureMap& regions, const std::string& image_id) {
  auto it = regions.find(image_id);
  if (it == regions.end()) throw DataError("no region features for image '" + image_id + "'");
  return it->second;
}

std::vector<PairInput> assemble_pairs(std::span<const McExample* const> questions,
                                      const FeatureMap& regions, bool need_regions) {
  std::vector<PairInput> pairs;
  for (const McExample* q : questions) {
    const RegionSet* rs = need_regions ? &lookup_regions(regions, q->image_id) : nullptr;
    for (const LanguageEncoding& enc : q->encodings) pairs.push_back(PairInput{rs, enc.flat});
  }
  return pairs;
}

}  // namespace

BatchLoss minibatch_loss(const ModelParameters& params, const ModelConfig& config,
                         std::span<const McExample* const> questions, const FeatureMap& regions,
                         BnMode mode, bool want_grads) {
  const std::vector<PairInput> pairs = assemble_pairs(questions, regions, config.has_fusion());
  BatchLoss out;
  out.cache = forward_batch(params, config, pairs, mode);

  Vector dscores(pairs.size(), 0.0);
  const double inv_q = 1.0 / static_cast<double>(questions.size());
  std::size_t offset = 0;
  for (const McExample* q : questions) {
    const std::size_t c = q->encodings.size();
    const std::span<const double> scores(out.cache.scores.data() + offset, c);
    const HingeResult h = consensus_hinge_loss(scores, q->annotator_fraction, q->correct_index);
    out.loss += h.loss * inv_q;
    for (std::size_t k = 0; k < c; ++k) dscores[offset + k] = h.grad[k] * inv_q;
    offset += c;
  }
  if (!std::isfinite(out.loss)) throw NumericError("non-finite training loss");
  if (want_grads) out.grads = backward_batch(params, config, out.cache, pairs, dscores);
  return out;
}

std::vector<std::size_t> predict(const ModelParameters& params, const ModelConfig& config,
                                 std::span<const McExample* const> questions,
                                 const FeatureMap& regions) {
  constexpr std::size_t kChunk = 64;
  std::vector<std::size_t> out;
  out.reserve(questions.size());
  for (std::size_t start = 0; start < questions.size(); start += kChunk) {
    const auto chunk = questions.subspan(start, std::min(kChunk, questions.size() - start));
    const std::vector<PairInput> pairs = assemble_pairs(chunk, regions, config.has_fusion());
    const ForwardCache cache = forward_batch(params, config, pairs, BnMode::infer);
    std::size_t offset = 0;
    for (const McExample* q : chunk) {
      const auto first = cache.scores.begin() + static_cast<std::ptrdiff_t>(offset);
      const auto last = first + static_cast<std::ptrdiff_t>(q->encodings.size());
      out.push_back(static_cast<std::size_t>(std::max_element(first, last) - first));
      offset += q->encodings.size();
    }
  }
  return out;
}

std::vector<PairScore> score_question(const ModelParameters& params, const ModelConfig& config,
                                      const McExample& question, const FeatureMap& regions) {
  const McExample* q = &question;
  const std::vector<PairInput> pairs =
      assemble_pairs(std::span(&q, 1), regions, config.has_fusion());
  const ForwardCache cache = forward_batch(params, config, pairs, BnMode::infer);
  std::vector<PairScore> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i].score = cache.scores[i];
    if (!cache.attention.empty()) out[i].attention.weights = cache.attention[i];
  }
  return out;
}

TrainResult train(std::span<const McExample> dataset, const FeatureMap& regions,
                  const TrainConfig& config, const ModelConfig& model_config,
                  const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  if (dataset.empty()) throw DataError("train: empty dataset");
  if (model_config.has_fusion()) {
    for (const McExample& ex : dataset) {
      const RegionSet& rs = lookup_regions(regions, ex.image_id);
      if (rs.feature_dim() != model_config.feature_dim) {
        throw DataError("image '" + ex.image_id + "' has feature_dim " +
                        std::to_string(rs.feature_dim()) + ", model expects " +
                        std::to_string(model_config.feature_dim));
      }
    }
  }

  Rng rng(config.seed);
  ModelParameters params = init_model(model_config, rng);
  const DatasetSplit split = split_dataset(dataset, config.heldout_fraction);

  std::vector<const McExample*> heldout;
  for (std::size_t i : split.heldout) heldout.push_back(&dataset[i]);
  std::vector<std::size_t> order = split.train;

  TrainResult result;
  result.best = params;
  std::size_t since_best = 0;
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    }
    double loss_sum = 0.0;
    std::vector<const McExample*> batch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k) {
        batch.push_back(&dataset[order[k]]);
      }
      BatchLoss bl = minibatch_loss(params, model_config, batch, regions, BnMode::train, true);
      loss_sum += bl.loss * static_cast<double>(batch.size());
      sgd_step(params, bl.grads, config.learning_rate);
      update_running_stats(params, bl.cache);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.heldout_acc = mc_accuracy(predict(params, model_config, heldout, regions), heldout);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (!have_best || rec.heldout_acc > result.best_heldout_acc) {
      have_best = true;
      result.best = params;
      result.best_epoch = epoch;
      result.best_heldout_acc = rec.heldout_acc;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,train_loss,heldout_acc\n";
  char buf[96];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.epoch, r.train_loss, r.heldout_acc);
    out << buf;
  }
}

}  // namespace regionqa
