#ifndef REGIONQA_EVALUATION_HPP_
#define REGIONQA_EVALUATION_HPP_

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "regionqa/model.hpp"
#include "regionqa/training.hpp"
#include "regionqa/vision.hpp"

namespace regionqa {

/// A choice counts as correct when at least 3 of 10 annotators gave it.
inline constexpr double kConsensusFraction = 0.3;

double mc_accuracy(std::span<const std::size_t> predictions,
                   std::span<const McExample* const> examples);
double mc_accuracy(std::span<const std::size_t> predictions, std::span<const McExample> examples);

// ---------------------------------------------------------------------------
// Question types

struct TypeRule {
  std::vector<std::vector<std::string>> prefixes;  // any prefix of leading tokens matches
  std::string label;
};

inline constexpr const char* kCatchAllType = "none of the above";

/// Table-style default ordering: specific "what ..." forms before generic
/// leading words, catch-all last.
std::vector<TypeRule> default_type_rules();

/// Text format, one rule per line: `label<TAB>prefix one|prefix two|...`.
std::vector<TypeRule> load_type_rules(const std::filesystem::path& path);
void save_type_rules(const std::filesystem::path& path, std::span<const TypeRule> rules);

std::string question_type(std::span<const std::string> question_words,
                          std::span<const TypeRule> rules);

struct TypeRow {
  std::string label;
  std::size_t count = 0;
  double frequency = 0.0;                 // fraction of all questions
  std::map<std::string, double> accuracy;  // per evaluated variant
};

/// First row is "overall". Types appear in rule order; empty types are omitted.
/// `predictions` maps a variant name to one predicted index per example.
std::vector<TypeRow> question_type_breakdown(
    std::span<const McExample* const> examples,
    const std::map<std::string, std::vector<std::size_t>>& predictions,
    std::span<const TypeRule> rules);

/// TSV with columns type, region, image, text, freq (percentages); "-" for a
/// variant that was not evaluated.
void write_breakdown_tsv(const std::filesystem::path& path, std::span<const TypeRow> rows);

// ---------------------------------------------------------------------------
// Pixel weighting

struct PixelWeightMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> weights;  // row-major, height x width

  double at(std::size_t x, std::size_t y) const { return weights[y * width + x]; }
  double max() const;
  double mean() const;
};

/// Pixel (x, y) belongs to a box when its center (x + 0.5, y + 0.5) lies inside.
bool box_contains_pixel(const Box& box, std::size_t x, std::size_t y);

/// Sum of the weights of every region covering a pixel, optionally 3x3 box
/// blurred, then divided by the maximum.
PixelWeightMap pixel_weight_map(const RegionSet& regions, const AttentionMap& attention,
                                std::size_t width, std::size_t height, bool blur = false);

/// 3x3 mean filter; border pixels average their in-bounds neighbours.
std::vector<double> box_blur3(std::span<const double> values, std::size_t width, std::size_t height);

struct RegionAnnotation {
  std::string question_id;
  std::vector<Box> boxes;
};

std::vector<RegionAnnotation> load_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, std::span<const RegionAnnotation> annotations);

/// Mean weight over the union of the annotated boxes minus the mean over all
/// pixels. Throws DataError when the union covers no pixel.
double annotation_weight_score(const PixelWeightMap& map, const RegionAnnotation& annotation);

// ---------------------------------------------------------------------------
// Mask export (binary PGM, maxval 255)

std::vector<unsigned char> quantize(const PixelWeightMap& map);
void export_mask(const PixelWeightMap& map, const std::filesystem::path& path);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<unsigned char> pixels;
};

GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace regionqa

#endif  // REGIONQA_EVALUATION_HPP_
