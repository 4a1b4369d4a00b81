#ifndef REGIONQA_SYNTH_HPP_
#define REGIONQA_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "regionqa/evaluation.hpp"
#include "regionqa/language.hpp"
#include "regionqa/training.hpp"
#include "regionqa/vision.hpp"

namespace regionqa {

/// Desk-scale stand-in for VQA data: "what color is the <noun>" over images
/// whose object regions each carry a noun pattern plus a colour pattern.
struct SyntheticSpec {
  std::size_t num_questions = 2000;
  std::size_t regions_per_image = 8;   // including the whole-image region
  std::size_t feature_dim = 32;
  std::size_t word_dim = 16;
  std::size_t vocab_size = 24;         // content words, split between nouns and colours
  std::size_t choices_per_question = 4;
  double planted_signal_strength = 1.0;
  double feature_noise = 0.5;
  std::size_t image_size = 64;
  /// Adds "near the <other noun>" so the subject is only identifiable
  /// through the nominal-subject bin.
  bool subject_distractor = false;
  std::uint64_t seed = 7;

  void validate() const;
  bool operator==(const SyntheticSpec&) const = default;
};

struct SyntheticData {
  std::vector<McRecord> records;
  FeatureMap features;
  std::vector<ProposalSet> proposals;
  EmbeddingTable embeddings;
  std::vector<RegionAnnotation> annotations;

  // Generator internals, exposed so tests can build an independent decoder.
  std::vector<std::string> nouns;
  std::vector<std::string> colors;
  std::vector<Vector> noun_patterns;
  std::vector<Vector> color_patterns;
  std::vector<std::size_t> key_region;  // per question, index into its RegionSet
};

SyntheticData synth_generate(const SyntheticSpec& spec);

struct SyntheticFiles {
  std::filesystem::path dataset;
  std::filesystem::path features;
  std::filesystem::path proposals;
  std::filesystem::path embeddings;
  std::filesystem::path annotations;
};

/// Writes dataset.jsonl, features.rgnf, proposals.jsonl, embeddings.txt and
/// annotations.jsonl into `dir`.
SyntheticFiles write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace regionqa

#endif  // REGIONQA_SYNTH_HPP_
