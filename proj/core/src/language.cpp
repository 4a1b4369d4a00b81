#include "regionqa/language.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "regionqa/errors.hpp"

namespace regionqa {

PartOfSpeech parse_pos(std::string_view tag) {
  if (tag == "noun" || tag == "NN" || tag == "NNS" || tag == "NNP" || tag == "NNPS")
    return PartOfSpeech::noun;
  if (tag == "verb" || (tag.size() >= 2 && tag.substr(0, 2) == "VB")) return PartOfSpeech::verb;
  if (tag == "det" || tag == "DT") return PartOfSpeech::det;
  return PartOfSpeech::other;
}

DepRole parse_dep(std::string_view tag) {
  return tag == "nsubj" ? DepRole::nsubj : DepRole::other;
}

std::string_view to_string(PartOfSpeech pos) {
  switch (pos) {
    case PartOfSpeech::noun: return "noun";
    case PartOfSpeech::verb: return "verb";
    case PartOfSpeech::det: return "det";
    case PartOfSpeech::other: return "other";
  }
  return "other";
}

std::string_view to_string(DepRole dep) { return dep == DepRole::nsubj ? "nsubj" : "other"; }

// ---------------------------------------------------------------------------

void EmbeddingTable::insert(const std::string& word, Vector vec) {
  if (vec.size() != dim_) {
    throw ShapeError("EmbeddingTable: vector for '" + word + "' has length " +
                     std::to_string(vec.size()) + ", table dim is " + std::to_string(dim_));
  }
  entries_[word] = std::move(vec);
}

const Vector* EmbeddingTable::find(const std::string& word) const {
  auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> EmbeddingTable::words() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [w, v] : entries_) out.push_back(w);
  std::sort(out.begin(), out.end());
  return out;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty embedding file");
  std::istringstream header(line);
  std::string kw_dim, kw_count;
  std::size_t dim = 0, count = 0;
  if (!(header >> kw_dim >> dim >> kw_count >> count) || kw_dim != "dim" || kw_count != "count") {
    throw DataError(path.string() + ": expected header 'dim N count M'");
  }
  EmbeddingTable table(dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    Vector vec;
    vec.reserve(dim);
    std::string tok;
    while (ls >> tok) {
      try {
        vec.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + tok +
                        "'");
      }
    }
    if (vec.size() != dim) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(dim) + " values for '" + word + "', got " +
                      std::to_string(vec.size()));
    }
    table.entries_[word] = std::move(vec);
  }
  if (table.size() != count) {
    throw DataError(path.string() + ": header says " + std::to_string(count) +
                    " entries, file has " + std::to_string(table.size()));
  }
  return table;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write embedding file " + path.string());
  out << "dim " << dim_ << " count " << entries_.size() << '\n';
  char buf[32];
  for (const std::string& w : words()) {
    out << w;
    for (double v : entries_.at(w)) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

std::string_view to_string(LanguageScheme scheme) {
  return scheme == LanguageScheme::five_bin ? "five_bin" : "two_bin";
}

LanguageScheme parse_language_scheme(std::string_view name) {
  if (name == "five_bin") return LanguageScheme::five_bin;
  if (name == "two_bin") return LanguageScheme::two_bin;
  throw std::invalid_argument("unknown language scheme '" + std::string(name) + "'");
}

std::size_t bin_count(LanguageScheme scheme) {
  return scheme == LanguageScheme::five_bin ? 5 : 2;
}

QuestionBins bin_tokens(std::span<const AnnotatedToken> question) {
  QuestionBins bins;
  for (std::size_t i = 0; i < question.size(); ++i) {
    const AnnotatedToken& tok = question[i];
    if (i < 2) {
      bins[0].push_back(tok);
    } else if (tok.dep == DepRole::nsubj) {
      bins[1].push_back(tok);
    } else if (tok.pos == PartOfSpeech::noun) {
      bins[2].push_back(tok);
    } else if (tok.pos != PartOfSpeech::det) {
      bins[3].push_back(tok);
    }
  }
  return bins;
}

namespace {

template <typename Words>
Vector mean_embedding(const Words& words, const EmbeddingTable& table, std::size_t& misses) {
  Vector acc(table.dim(), 0.0);
  if (words.empty()) return acc;
  for (const std::string& w : words) {
    if (const Vector* v = table.find(w)) {
      axpy(1.0, *v, acc);
    } else {
      ++misses;
    }
  }
  const double inv = 1.0 / static_cast<double>(words.size());
  for (double& v : acc) v *= inv;
  return acc;
}

std::vector<std::string> surfaces(std::span<const AnnotatedToken> tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.surface);
  return out;
}

}  // namespace

LanguageEncoding encode_qa(std::span<const AnnotatedToken> question,
                           std::span<const std::string> answer, const EmbeddingTable& table,
                           LanguageScheme scheme) {
  if (answer.empty()) throw std::invalid_argument("encode_qa: empty answer");
  LanguageEncoding enc;
  enc.scheme = scheme;
  if (scheme == LanguageScheme::five_bin) {
    const QuestionBins bins = bin_tokens(question);
    for (const auto& bin : bins) enc.bins.push_back(mean_embedding(surfaces(bin), table, enc.misses));
  } else {
    enc.bins.push_back(mean_embedding(surfaces(question), table, enc.misses));
  }
  enc.bins.push_back(mean_embedding(answer, table, enc.misses));

  enc.flat.reserve(enc.bins.size() * table.dim());
  for (const Vector& b : enc.bins) enc.flat.insert(enc.flat.end(), b.begin(), b.end());
  return enc;
}

const std::unordered_set<std::string>& default_determiners() {
  static const std::unordered_set<std::string> lexicon = {
      "a", "an", "the", "few", "some", "this", "that", "these", "those"};
  return lexicon;
}

std::vector<AnnotatedToken> fallback_tag(std::span<const std::string> tokens,
                                         const std::unordered_set<std::string>& noun_lexicon,
                                         const std::unordered_set<std::string>& det_lexicon) {
  std::vector<AnnotatedToken> out;
  out.reserve(tokens.size());
  std::size_t last_noun = tokens.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    AnnotatedToken t;
    t.surface = tokens[i];
    t.position = i;
    if (det_lexicon.contains(t.surface)) {
      t.pos = PartOfSpeech::det;
    } else if (noun_lexicon.contains(t.surface)) {
      t.pos = PartOfSpeech::noun;
      last_noun = i;
    }
    out.push_back(std::move(t));
  }
  if (last_noun < out.size()) out[last_noun].dep = DepRole::nsubj;
  return out;
}

bool is_punctuation(std::string_view token) {
  return !token.empty() && std::all_of(token.begin(), token.end(), [](unsigned char c) {
    return std::ispunct(c) != 0;
  });
}

std::vector<AnnotatedToken> strip_punctuation(std::span<const AnnotatedToken> tokens) {
  std::vector<AnnotatedToken> out;
  for (const auto& t : tokens) {
    if (t.surface.empty() || is_punctuation(t.surface)) continue;
    out.push_back(t);
    out.back().position = out.size() - 1;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c) && c != '\'' && c != '-') {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::vector<AnnotatedQuestion> load_annotated_questions(
    const std::filesystem::path& path, const std::unordered_set<std::string>& noun_lexicon) {
  std::vector<AnnotatedQuestion> out;
  detail::for_each_json_line(path, [&](const nlohmann::json& j) {
    AnnotatedQuestion q;
    const auto& id = j.at("id");
    q.id = id.is_string() ? id.get<std::string>() : id.dump();
    if (j.contains("tokens")) {
      q.tokens = detail::parse_question_tokens(j.at("tokens"), noun_lexicon);
    } else {
      const auto words = tokenize(j.at("text").get<std::string>());
      q.tokens = detail::parse_question_tokens(nlohmann::json(words), noun_lexicon);
    }
    out.push_back(std::move(q));
  });
  return out;
}

}  // namespace regionqa
