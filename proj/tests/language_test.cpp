#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>

#include "regionqa/language.hpp"
#include "regionqa/rng.hpp"
#include "test_support.hpp"

using namespace regionqa;

namespace {

AnnotatedToken tok(const std::string& s, PartOfSpeech pos = PartOfSpeech::other,
                   DepRole dep = DepRole::other) {
  return AnnotatedToken{s, pos, dep, 0};
}

std::vector<AnnotatedToken> numbered(std::vector<AnnotatedToken> toks) {
  for (std::size_t i = 0; i < toks.size(); ++i) toks[i].position = i;
  return toks;
}

std::vector<std::string> surfaces(const std::vector<AnnotatedToken>& toks) {
  std::vector<std::string> out;
  for (const auto& t : toks) out.push_back(t.surface);
  return out;
}

using Words = std::vector<std::string>;

}  // namespace

TEST_CASE("bin_tokens examples") {
  SUBCASE("fire hydrant") {
    const auto q = numbered({tok("what"), tok("color", PartOfSpeech::noun), tok("is", PartOfSpeech::verb),
                             tok("the", PartOfSpeech::det), tok("fire", PartOfSpeech::noun),
                             tok("hydrant", PartOfSpeech::noun, DepRole::nsubj)});
    const QuestionBins bins = bin_tokens(q);
    CHECK(surfaces(bins[0]) == Words{"what", "color"});
    CHECK(surfaces(bins[1]) == Words{"hydrant"});
    CHECK(surfaces(bins[2]) == Words{"fire"});
    CHECK(surfaces(bins[3]) == Words{"is"});
  }
  SUBCASE("two tokens") {
    const QuestionBins bins = bin_tokens(numbered({tok("is"), tok("there")}));
    CHECK(surfaces(bins[0]) == Words{"is", "there"});
    CHECK(bins[1].empty());
    CHECK(bins[2].empty());
    CHECK(bins[3].empty());
  }
  SUBCASE("single token") {
    const QuestionBins bins = bin_tokens(numbered({tok("why")}));
    CHECK(surfaces(bins[0]) == Words{"why"});
    CHECK(bins[3].empty());
  }
  SUBCASE("first two words win over nsubj") {
    const QuestionBins bins =
        bin_tokens(numbered({tok("dogs", PartOfSpeech::noun, DepRole::nsubj), tok("run"), tok("fast")}));
    CHECK(surfaces(bins[0]) == Words{"dogs", "run"});
    CHECK(bins[1].empty());
    CHECK(surfaces(bins[3]) == Words{"fast"});
  }
  SUBCASE("several subjects all go to bin 2") {
    const QuestionBins bins = bin_tokens(
        numbered({tok("are"), tok("the"), tok("cat", PartOfSpeech::noun, DepRole::nsubj), tok("and"),
                  tok("dog", PartOfSpeech::noun, DepRole::nsubj), tok("asleep")}));
    CHECK(surfaces(bins[1]) == Words{"cat", "dog"});
    CHECK(surfaces(bins[3]) == Words{"and", "asleep"});
  }
}

TEST_CASE("encode_qa examples") {
  EmbeddingTable table(2);
  table.insert("what", {1.0, 0.0});
  table.insert("color", {0.0, 1.0});
  table.insert("red", {2.0, 2.0});
  const auto q = numbered({tok("what"), tok("color")});
  const Words answer{"red"};

  SUBCASE("five bins") {
    const LanguageEncoding enc = encode_qa(q, answer, table, LanguageScheme::five_bin);
    REQUIRE(enc.bins.size() == 5);
    CHECK(enc.bins[0] == Vector{0.5, 0.5});
    for (int b = 1; b < 4; ++b) CHECK(enc.bins[b] == Vector{0.0, 0.0});
    CHECK(enc.bins[4] == Vector{2.0, 2.0});
    CHECK(enc.flat == Vector{0.5, 0.5, 0, 0, 0, 0, 0, 0, 2.0, 2.0});
    CHECK(enc.misses == 0);
  }
  SUBCASE("two bins") {
    const LanguageEncoding enc = encode_qa(q, answer, table, LanguageScheme::two_bin);
    REQUIRE(enc.bins.size() == 2);
    CHECK(enc.flat == Vector{0.5, 0.5, 2.0, 2.0});
  }
  SUBCASE("unknown words") {
    const auto unknown = numbered({tok("zzz"), tok("qqq", PartOfSpeech::noun, DepRole::nsubj)});
    const LanguageEncoding enc = encode_qa(unknown, answer, table, LanguageScheme::five_bin);
    for (int b = 0; b < 4; ++b) CHECK(enc.bins[b] == Vector{0.0, 0.0});
    CHECK(enc.misses == 2);
    CHECK(enc.flat.size() == 10);
  }
  SUBCASE("unknown words count as zero in the mean") {
    const LanguageEncoding enc = encode_qa(numbered({tok("what"), tok("zzz")}), answer, table,
                                           LanguageScheme::five_bin);
    CHECK(enc.bins[0] == Vector{0.5, 0.0});
    CHECK(enc.misses == 1);
  }
  SUBCASE("full-scale table gives 1500 values") {
    EmbeddingTable big(300);
    const LanguageEncoding enc = encode_qa(q, answer, big, LanguageScheme::five_bin);
    CHECK(enc.flat.size() == 1500);
    CHECK(encode_qa(q, answer, big, LanguageScheme::two_bin).flat.size() == 600);
  }
}

TEST_CASE("fallback_tag examples") {
  const auto& dets = default_determiners();
  SUBCASE("determiner") {
    const std::unordered_set<std::string> small{"the", "a", "an", "few"};
    const auto t = fallback_tag(Words{"the"}, {}, small);
    CHECK(t[0].pos == PartOfSpeech::det);
  }
  SUBCASE("last noun is the subject") {
    const auto t = fallback_tag(Words{"what", "color", "is", "the", "dog"}, {"color", "dog"}, dets);
    CHECK(t[1].pos == PartOfSpeech::noun);
    CHECK(t[1].dep == DepRole::other);
    CHECK(t[4].pos == PartOfSpeech::noun);
    CHECK(t[4].dep == DepRole::nsubj);
    CHECK(t[3].pos == PartOfSpeech::det);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i].position == i);
  }
  SUBCASE("empty lexicons") {
    const auto t = fallback_tag(Words{"what", "color", "is", "the", "dog"}, {}, {});
    for (const auto& x : t) {
      CHECK(x.pos == PartOfSpeech::other);
      CHECK(x.dep == DepRole::other);
    }
    const QuestionBins bins = bin_tokens(t);
    CHECK(bins[1].empty());
    CHECK(bins[2].empty());
  }
}

TEST_CASE("determiner lexicon") {
  for (const char* w : {"a", "an", "the", "few", "some", "this", "that", "these", "those"}) {
    CHECK(default_determiners().count(w) == 1);
  }
  CHECK(default_determiners().size() == 9);
}

TEST_CASE("tokenize and punctuation") {
  CHECK(tokenize("What color is the Hydrant?") == Words{"what", "color", "is", "the", "hydrant", "?"});
  CHECK(is_punctuation("?"));
  CHECK_FALSE(is_punctuation("dog"));
  const auto toks = numbered({tok("is"), tok(","), tok("it"), tok("?")});
  const auto stripped = strip_punctuation(toks);
  REQUIRE(stripped.size() == 2);
  CHECK(stripped[1].surface == "it");
  CHECK(stripped[1].position == 1);
}

TEST_CASE("binning partitions the tokens") {
  Rng rng(2024);
  const Words vocab{"what", "is", "the", "a", "dog", "cat", "red", "few", "on", "table", "how", "many"};
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<AnnotatedToken> q;
    const std::size_t len = 1 + rng.below(12);
    for (std::size_t i = 0; i < len; ++i) {
      AnnotatedToken t;
      t.surface = vocab[rng.below(vocab.size())];
      t.pos = static_cast<PartOfSpeech>(rng.below(4));
      t.dep = rng.below(5) == 0 ? DepRole::nsubj : DepRole::other;
      t.position = i;
      q.push_back(t);
    }
    const QuestionBins bins = bin_tokens(q);
    std::vector<std::size_t> seen(len, 0);
    for (const auto& bin : bins) {
      for (const auto& t : bin) ++seen[t.position];
    }
    for (std::size_t i = 0; i < len; ++i) {
      const bool first_two = i < 2;
      if (first_two || q[i].dep == DepRole::nsubj || q[i].pos != PartOfSpeech::det) {
        CHECK(seen[i] == 1);
      } else {
        CHECK(seen[i] == 0);  // excluded determiner
      }
    }
  }
}

TEST_CASE("encoding is invariant to order within a bin") {
  EmbeddingTable table(3);
  Rng rng(8);
  for (const char* w : {"what", "is", "red", "blue", "big", "small", "dog", "cat", "ball"}) {
    table.insert(w, testing::random_vector(3, rng));
  }
  // positions 2..5 land in bin 4; permuting them leaves bin 4's mean unchanged
  auto q = numbered({tok("what"), tok("is"), tok("red"), tok("blue"), tok("big"), tok("small")});
  auto p = numbered({tok("what"), tok("is"), tok("small"), tok("big"), tok("red"), tok("blue")});
  const auto a = encode_qa(q, Words{"dog", "cat"}, table, LanguageScheme::five_bin);
  const auto b = encode_qa(p, Words{"cat", "dog"}, table, LanguageScheme::five_bin);
  CHECK(testing::max_abs_diff(a.flat, b.flat) < 1e-15);
  // Moving a word into the first two positions changes bin 1.
  auto r = numbered({tok("red"), tok("is"), tok("what"), tok("blue"), tok("big"), tok("small")});
  const auto c = encode_qa(r, Words{"dog", "cat"}, table, LanguageScheme::five_bin);
  CHECK(testing::max_abs_diff(a.bins[0], c.bins[0]) > 1e-6);
  // A single-word bin equals that word's vector exactly.
  const auto single = encode_qa(numbered({tok("what")}), Words{"ball"}, table, LanguageScheme::five_bin);
  CHECK(single.bins[0] == *table.find("what"));
  CHECK(single.bins[4] == *table.find("ball"));
}

TEST_CASE("embedding table file round trip") {
  const auto dir = testing::scratch_dir("embeddings");
  EmbeddingTable table(4);
  Rng rng(12);
  for (const char* w : {"zebra", "apple", "mango"}) table.insert(w, testing::random_vector(4, rng));
  table.save(dir / "e.txt");
  const EmbeddingTable back = EmbeddingTable::load(dir / "e.txt");
  CHECK(back.dim() == 4);
  CHECK(back.size() == 3);
  for (const auto& w : table.words()) CHECK(*back.find(w) == *table.find(w));
  CHECK(back.find("nothing") == nullptr);
  CHECK(table.words() == Words{"apple", "mango", "zebra"});
  CHECK_THROWS(table.insert("short", Vector{1.0}));

  std::ofstream(dir / "bad.txt") << "dim 2 count 1\nword 1.0\n";
  CHECK_THROWS(EmbeddingTable::load(dir / "bad.txt"));
}

TEST_CASE("annotated question file") {
  const auto dir = testing::scratch_dir("annotated");
  std::ofstream(dir / "q.jsonl")
      << R"({"id":"q1","tokens":[{"surface":"What","pos":"other","dep":"other"},{"surface":"dog","pos":"noun","dep":"nsubj"},{"surface":"?","pos":"other","dep":"other"}]})"
      << "\n"
      << R"({"id":"q2","text":"what color is the dog?"})" << "\n";
  const auto qs = load_annotated_questions(dir / "q.jsonl", {"dog", "color"});
  REQUIRE(qs.size() == 2);
  CHECK(qs[0].tokens.size() == 2);
  CHECK(qs[0].tokens[0].surface == "what");
  CHECK(qs[0].tokens[1].dep == DepRole::nsubj);
  REQUIRE(qs[1].tokens.size() == 5);
  CHECK(qs[1].tokens[4].surface == "dog");
  CHECK(qs[1].tokens[4].dep == DepRole::nsubj);
  CHECK(qs[1].tokens[3].pos == PartOfSpeech::det);
}
