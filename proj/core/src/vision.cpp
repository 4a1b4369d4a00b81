#include "regionqa/vision.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "json_util.hpp"

namespace regionqa {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double iou_threshold) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms: " + std::to_string(boxes.size()) + " boxes but " +
                                std::to_string(scores.size()) + " scores");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(boxes[idx], boxes[k]) > iou_threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

RegionSet assemble_region_set(const ProposalSet& proposals, const Tensor2& features,
                              std::span<const double> whole_image_feature,
                              std::size_t max_regions, double iou_threshold) {
  if (max_regions < 2) throw std::invalid_argument("assemble_region_set: max_regions must be >= 2");
  if (features.cols() != proposals.boxes.size()) {
    throw ShapeError("assemble_region_set: " + std::to_string(proposals.boxes.size()) +
                     " proposals but feature matrix is " + features.shape_string());
  }
  const std::size_t dim = whole_image_feature.size();
  if (!proposals.boxes.empty() && features.rows() != dim) {
    throw ShapeError("assemble_region_set: proposal features have dim " +
                     std::to_string(features.rows()) + ", whole-image feature has " +
                     std::to_string(dim));
  }

  std::vector<std::size_t> kept = nms(proposals.boxes, proposals.scores, iou_threshold);
  if (kept.size() > max_regions - 1) kept.resize(max_regions - 1);

  RegionSet rs;
  rs.image_id = proposals.image_id;
  rs.width = proposals.width;
  rs.height = proposals.height;
  rs.features = Tensor2(dim, kept.size() + 1);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    rs.boxes.push_back(proposals.boxes[kept[i]]);
    for (std::size_t r = 0; r < dim; ++r) rs.features(r, i) = features(r, kept[i]);
  }
  rs.boxes.push_back(Box{0.0, 0.0, proposals.width, proposals.height});
  rs.features.set_col(kept.size(), whole_image_feature);
  rs.whole_image_index = kept.size();
  return rs;
}

void validate_region_set(const RegionSet& rs) {
  if (rs.boxes.empty()) throw DataError("region set '" + rs.image_id + "' is empty");
  if (rs.features.cols() != rs.boxes.size()) {
    throw DataError("region set '" + rs.image_id + "': " + std::to_string(rs.boxes.size()) +
                    " boxes but " + std::to_string(rs.features.cols()) + " feature columns");
  }
  if (rs.whole_image_index >= rs.boxes.size()) {
    throw DataError("region set '" + rs.image_id + "': whole-image index out of range");
  }
  const Box& frame = rs.boxes[rs.whole_image_index];
  if (frame != Box{0.0, 0.0, rs.width, rs.height}) {
    throw DataError("region set '" + rs.image_id + "': whole-image box does not span the frame");
  }
  for (const Box& b : rs.boxes) {
    if (!b.valid() || !b.within(rs.width, rs.height)) {
      throw DataError("region set '" + rs.image_id + "': invalid box");
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'R', 'G', 'N', 'F'};

[[noreturn]] void fail(FeatureFileError::Kind kind, const std::filesystem::path& path,
                       const std::string& msg) {
  throw FeatureFileError(kind, path.string() + ": " + msg);
}

}  // namespace

FeatureMap load_features(const std::filesystem::path& path, std::size_t expected_dim) {
  using Kind = FeatureFileError::Kind;
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Kind::io, path, "cannot open feature file");

  char magic[4];
  if (!in.read(magic, 4)) {
    if (in.gcount() == 0) fail(Kind::no_records, path, "no records");
    fail(Kind::truncated, path, "truncated header");
  }
  if (!std::equal(magic, magic + 4, kMagic)) fail(Kind::bad_magic, path, "bad magic, expected RGNF");
  std::uint32_t version = 0, dim = 0;
  if (!detail::get_u32(in, version) || !detail::get_u32(in, dim)) {
    fail(Kind::truncated, path, "truncated header");
  }
  if (version != kFeatureFileVersion) {
    fail(Kind::bad_version, path, "unsupported version " + std::to_string(version));
  }
  if (expected_dim != 0 && dim != expected_dim) {
    fail(Kind::dim_mismatch, path,
         "feature_dim " + std::to_string(dim) + " but expected " + std::to_string(expected_dim));
  }

  FeatureMap out;
  while (in.peek() != std::char_traits<char>::eof()) {
    RegionSet rs;
    std::uint32_t count = 0;
    if (!detail::get_string(in, rs.image_id) || !detail::get_u32(in, count)) {
      fail(Kind::truncated, path, "truncated record header");
    }
    rs.boxes.resize(count);
    for (Box& b : rs.boxes) {
      float c[4];
      for (float& v : c) {
        if (!detail::get_f32(in, v)) fail(Kind::truncated, path, "truncated boxes for '" + rs.image_id + "'");
        if (!std::isfinite(v)) fail(Kind::non_finite, path, "non-finite box coordinate in '" + rs.image_id + "'");
      }
      b = Box{c[0], c[1], c[2], c[3]};
    }
    rs.features = Tensor2(dim, count);
    for (std::uint32_t r = 0; r < count; ++r) {
      for (std::uint32_t d = 0; d < dim; ++d) {
        float v;
        if (!detail::get_f32(in, v)) fail(Kind::truncated, path, "truncated features for '" + rs.image_id + "'");
        if (!std::isfinite(v)) {
          fail(Kind::non_finite, path, "non-finite feature in '" + rs.image_id + "' region " +
                                           std::to_string(r));
        }
        rs.features(d, r) = v;
      }
    }
    // The frame box is the one reaching the origin and the far corner.
    for (const Box& b : rs.boxes) {
      rs.width = std::max(rs.width, b.x2);
      rs.height = std::max(rs.height, b.y2);
    }
    bool found = false;
    for (std::size_t i = rs.boxes.size(); i-- > 0;) {
      if (rs.boxes[i] == Box{0.0, 0.0, rs.width, rs.height}) {
        rs.whole_image_index = i;
        found = true;
        break;
      }
    }
    if (!found) throw DataError(path.string() + ": '" + rs.image_id + "' has no whole-image region");
    std::string id = rs.image_id;
    out.insert_or_assign(std::move(id), std::move(rs));
  }
  if (out.empty()) fail(Kind::no_records, path, "no records");
  return out;
}

void write_features(const std::filesystem::path& path, const FeatureMap& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FeatureFileError(FeatureFileError::Kind::io, "cannot write " + path.string());
  const std::size_t dim = features.empty() ? 0 : features.begin()->second.feature_dim();
  out.write(kMagic, 4);
  detail::put_u32(out, kFeatureFileVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(dim));
  for (const auto& [id, rs] : features) {
    if (rs.feature_dim() != dim) {
      throw ShapeError("write_features: '" + id + "' has dim " + std::to_string(rs.feature_dim()) +
                       ", file dim is " + std::to_string(dim));
    }
    detail::put_string(out, id);
    detail::put_u32(out, static_cast<std::uint32_t>(rs.size()));
    for (const Box& b : rs.boxes) {
      for (double v : {b.x1, b.y1, b.x2, b.y2}) detail::put_f32(out, static_cast<float>(v));
    }
    for (std::size_t r = 0; r < rs.size(); ++r)
      for (std::size_t d = 0; d < dim; ++d) detail::put_f32(out, static_cast<float>(rs.features(d, r)));
  }
  if (!out) throw FeatureFileError(FeatureFileError::Kind::io, "write failed for " + path.string());
}

std::vector<ProposalSet> load_proposals(const std::filesystem::path& path) {
  std::vector<ProposalSet> out;
  detail::for_each_json_line(path, [&](const nlohmann::json& j) {
    ProposalSet p;
    p.image_id = j.at("id").get<std::string>();
    p.width = j.at("w").get<double>();
    p.height = j.at("h").get<double>();
    for (const auto& b : j.at("boxes")) p.boxes.push_back(detail::parse_box(b));
    p.scores = j.at("scores").get<std::vector<double>>();
    if (p.scores.size() != p.boxes.size()) {
      throw DataError(path.string() + ": '" + p.image_id + "' has " +
                      std::to_string(p.boxes.size()) + " boxes but " +
                      std::to_string(p.scores.size()) + " scores");
    }
    out.push_back(std::move(p));
  });
  return out;
}

void write_proposals(const std::filesystem::path& path, std::span<const ProposalSet> proposals) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const ProposalSet& p : proposals) {
    nlohmann::json j;
    j["id"] = p.image_id;
    j["w"] = p.width;
    j["h"] = p.height;
    j["boxes"] = nlohmann::json::array();
    for (const Box& b : p.boxes) j["boxes"].push_back(detail::box_to_json(b));
    j["scores"] = p.scores;
    out << j.dump() << '\n';
  }
}

}  // namespace regionqa
