#ifndef REGIONQA_VISION_HPP_
#define REGIONQA_VISION_HPP_

#include <cstddef>
#include <filesystem>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "regionqa/errors.hpp"
#include "regionqa/tensor.hpp"

namespace regionqa {

/// Corner-format box in pixel coordinates; area is (x2-x1)(y2-y1).
struct Box {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x2 > x1 && y2 > y1; }
  bool within(double image_width, double image_height) const {
    return x1 >= 0.0 && y1 >= 0.0 && x2 <= image_width && y2 <= image_height;
  }

  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

inline constexpr double kDefaultNmsThreshold = 0.2;
inline constexpr std::size_t kDefaultMaxRegions = 100;

/// Greedy suppression. Boxes are visited in descending score order (ties to
/// the lower index); a box is dropped when its IoU with an already kept box
/// is strictly greater than `iou_threshold`. Returns kept indices in visit
/// order.
std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double iou_threshold);

/// Candidate regions of one image. features is feature_dim x regions.
struct RegionSet {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Box> boxes;
  Tensor2 features;
  std::size_t whole_image_index = 0;

  std::size_t size() const { return boxes.size(); }
  std::size_t feature_dim() const { return features.rows(); }
};

struct ProposalSet {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Box> boxes;
  std::vector<double> scores;
};

/// NMS, keep the top max_regions - 1 survivors, then append the full-frame
/// region. `features` holds one column per proposal.
RegionSet assemble_region_set(const ProposalSet& proposals, const Tensor2& features,
                              std::span<const double> whole_image_feature,
                              std::size_t max_regions = kDefaultMaxRegions,
                              double iou_threshold = kDefaultNmsThreshold);

/// Checks the RegionSet invariants; throws DataError on violation.
void validate_region_set(const RegionSet& regions);

// ---------------------------------------------------------------------------
// Feature file (little-endian): "RGNF", u32 version, u32 feature_dim, then per
// record: u32 id length, id bytes, u32 region count R, R x 4 f32 box coords,
// R x feature_dim f32 features (one region per row).

class FeatureFileError : public DataError {
 public:
  enum class Kind { io, bad_magic, bad_version, truncated, dim_mismatch, non_finite, no_records };
  FeatureFileError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kFeatureFileVersion = 1;

using FeatureMap = std::map<std::string, RegionSet>;

/// Rejects any image whose features differ from feature_dim, and with
/// `expected_dim` non-zero also any header that disagrees with it.
FeatureMap load_features(const std::filesystem::path& path, std::size_t expected_dim = 0);

/// Values are narrowed to f32 on write.
void write_features(const std::filesystem::path& path, const FeatureMap& features);

/// JSON-lines: {"id":..,"w":..,"h":..,"boxes":[[x1,y1,x2,y2],..],"scores":[..]}.
std::vector<ProposalSet> load_proposals(const std::filesystem::path& path);
void write_proposals(const std::filesystem::path& path, std::span<const ProposalSet> proposals);

}  // namespace regionqa

#endif  // REGIONQA_VISION_HPP_
