#ifndef REGIONQA_LANGUAGE_HPP_
#define REGIONQA_LANGUAGE_HPP_

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "regionqa/tensor.hpp"

namespace regionqa {

enum class PartOfSpeech { noun, verb, det, other };
enum class DepRole { nsubj, other };

struct AnnotatedToken {
  std::string surface;  // lowercase
  PartOfSpeech pos = PartOfSpeech::other;
  DepRole dep = DepRole::other;
  std::size_t position = 0;

  bool operator==(const AnnotatedToken&) const = default;
};

PartOfSpeech parse_pos(std::string_view tag);
DepRole parse_dep(std::string_view tag);
std::string_view to_string(PartOfSpeech pos);
std::string_view to_string(DepRole dep);

/// Word vectors keyed by surface form. Unknown words read as the zero vector.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }

  void insert(const std::string& word, Vector vec);
  /// nullptr when the word is out of vocabulary.
  const Vector* find(const std::string& word) const;

  /// Sorted, so saving is byte-deterministic.
  std::vector<std::string> words() const;

  /// Text format: header `dim N count M`, then `word v1 ... vN` per line.
  static EmbeddingTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::size_t dim_;
  std::unordered_map<std::string, Vector> entries_;
};

enum class LanguageScheme { five_bin, two_bin };

std::string_view to_string(LanguageScheme scheme);
LanguageScheme parse_language_scheme(std::string_view name);
std::size_t bin_count(LanguageScheme scheme);

/// Question bins 1-4: question type (first two words), nominal subject,
/// other nouns, remaining non-determiners.
using QuestionBins = std::array<std::vector<AnnotatedToken>, 4>;

/// Each token lands in the first bin whose rule it matches; determiners that
/// fall through every rule are dropped.
QuestionBins bin_tokens(std::span<const AnnotatedToken> question);

struct LanguageEncoding {
  LanguageScheme scheme = LanguageScheme::five_bin;
  std::vector<Vector> bins;  // 5 (or 2) vectors of length dim, last one is the answer
  Vector flat;               // concatenation of bins
  std::size_t misses = 0;    // out-of-vocabulary lookups
};

LanguageEncoding encode_qa(std::span<const AnnotatedToken> question,
                           std::span<const std::string> answer, const EmbeddingTable& table,
                           LanguageScheme scheme);

/// Default determiner lexicon used by the fallback tagger.
const std::unordered_set<std::string>& default_determiners();

/// Heuristic tagger used when no parser annotations are available: lexicon
/// lookups for det/noun and the last noun marked as nominal subject.
std::vector<AnnotatedToken> fallback_tag(std::span<const std::string> tokens,
                                         const std::unordered_set<std::string>& noun_lexicon,
                                         const std::unordered_set<std::string>& det_lexicon);

bool is_punctuation(std::string_view token);

/// Drops punctuation tokens and renumbers positions from 0.
std::vector<AnnotatedToken> strip_punctuation(std::span<const AnnotatedToken> tokens);

/// Lowercases and splits on whitespace; trailing punctuation is split off.
std::vector<std::string> tokenize(std::string_view text);

struct AnnotatedQuestion {
  std::string id;
  std::vector<AnnotatedToken> tokens;
};

/// JSON-lines: {"id":..., "tokens":[{"surface":..,"pos":..,"dep":..}, ...]}.
/// Lines carrying "text" (or plain string tokens) instead go through
/// fallback_tag with the supplied noun lexicon.
std::vector<AnnotatedQuestion> load_annotated_questions(
    const std::filesystem::path& path, const std::unordered_set<std::string>& noun_lexicon = {});

}  // namespace regionqa

#endif  // REGIONQA_LANGUAGE_HPP_
