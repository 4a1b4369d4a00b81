#ifndef REGIONQA_TRAINING_HPP_
#define REGIONQA_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "regionqa/language.hpp"
#include "regionqa/model.hpp"
#include "regionqa/vision.hpp"

namespace regionqa {

/// One multiple-choice question, already encoded for a language scheme.
struct McExample {
  std::string question_id;
  std::string image_id;
  std::vector<std::string> question_words;       // for question-type rules
  std::vector<std::vector<std::string>> answers;  // per choice
  std::vector<LanguageEncoding> encodings;        // per choice
  std::vector<double> annotator_fraction;         // per choice, in [0, 1]
  std::size_t correct_index = 0;                  // argmax of annotator_fraction
};

/// Raw dataset line before encoding.
struct McRecord {
  std::string question_id;
  std::string image_id;
  std::vector<AnnotatedToken> question;
  std::vector<std::vector<std::string>> answers;
  std::vector<double> fractions;
};

/// JSON-lines: {"qid":..,"image":..,"choices":[{"answer_tokens":[..],"fraction":..}],
/// "question_tokens":[..]}. Plain-string question tokens go through the
/// fallback tagger with `noun_lexicon`.
std::vector<McRecord> load_records(const std::filesystem::path& path,
                                   const std::unordered_set<std::string>& noun_lexicon = {});
void write_records(const std::filesystem::path& path, std::span<const McRecord> records);

McExample encode_record(const McRecord& record, const EmbeddingTable& table, LanguageScheme scheme);
std::vector<McExample> encode_records(std::span<const McRecord> records,
                                      const EmbeddingTable& table, LanguageScheme scheme);

// ---------------------------------------------------------------------------

struct HingeResult {
  double loss = 0.0;
  Vector grad;  // subgradient over the scores
  /// Index of the maximizing violated choice, or npos when no margin is violated.
  std::size_t violator = static_cast<std::size_t>(-1);
};

/// max over n != p of max(0, y_n + (a_p - a_n) - y_p). Ties between violated
/// choices go to the lowest index.
HingeResult consensus_hinge_loss(std::span<const double> scores, std::span<const double> fractions,
                                 std::size_t correct_index);

/// p <- p - lr * g for every learnable tensor.
void sgd_step(ModelParameters& params, const ModelParameters& grads, double learning_rate);

// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  double heldout_fraction = 0.10;
  std::size_t patience = 0;  // 0 disables early stopping

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Held-out membership from a 64-bit FNV-1a hash of the question id.
bool is_heldout(const std::string& question_id, double heldout_fraction);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> heldout;
};
DatasetSplit split_dataset(std::span<const McExample> examples, double heldout_fraction);

/// Mean hinge loss over `questions` with all their choices in one batch.
struct BatchLoss {
  double loss = 0.0;
  ModelParameters grads;  // filled when requested
  ForwardCache cache;
};

BatchLoss minibatch_loss(const ModelParameters& params, const ModelConfig& config,
                         std::span<const McExample* const> questions, const FeatureMap& regions,
                         BnMode mode, bool want_grads);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double heldout_acc = 0.0;
};

struct TrainResult {
  ModelParameters best;
  std::size_t best_epoch = 0;
  double best_heldout_acc = 0.0;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch SGD with held-out model selection. Throws DataError for an
/// unknown image id and NumericError on a non-finite loss.
TrainResult train(std::span<const McExample> dataset, const FeatureMap& regions,
                  const TrainConfig& config, const ModelConfig& model_config,
                  const EpochCallback& on_epoch = {});

/// Predicted choice (argmax score, lowest index on ties) per question.
std::vector<std::size_t> predict(const ModelParameters& params, const ModelConfig& config,
                                 std::span<const McExample* const> questions,
                                 const FeatureMap& regions);

/// Per-choice scores and attention for one question (inference mode).
std::vector<PairScore> score_question(const ModelParameters& params, const ModelConfig& config,
                                      const McExample& question, const FeatureMap& regions);

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace regionqa

#endif  // REGIONQA_TRAINING_HPP_
