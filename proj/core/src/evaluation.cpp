#include "regionqa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "regionqa/errors.hpp"

namespace regionqa {

double mc_accuracy(std::span<const std::size_t> predictions,
                   std::span<const McExample* const> examples) {
  if (predictions.size() != examples.size()) {
    throw std::invalid_argument("mc_accuracy: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(examples.size()) + " questions");
  }
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& fractions = examples[i]->annotator_fraction;
    if (predictions[i] >= fractions.size()) {
      throw std::invalid_argument("mc_accuracy: prediction out of range for question '" +
                                  examples[i]->question_id + "'");
    }
    if (fractions[predictions[i]] >= kConsensusFraction) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

double mc_accuracy(std::span<const std::size_t> predictions, std::span<const McExample> examples) {
  std::vector<const McExample*> ptrs;
  ptrs.reserve(examples.size());
  for (const McExample& e : examples) ptrs.push_back(&e);
  return mc_accuracy(predictions, ptrs);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

TypeRule rule(std::string label, std::initializer_list<const char*> prefixes) {
  TypeRule r;
  r.label = std::move(label);
  for (const char* p : prefixes) r.prefixes.push_back(split_words(p));
  return r;
}

}  // namespace

std::vector<TypeRule> default_type_rules() {
  return {
      rule("what color", {"what color", "what colour"}),
      rule("what time", {"what time"}),
      rule("what brand", {"what brand"}),
      rule("identify scene: what room/sport", {"what room", "what sport"}),
      rule("reading: what does/number/name", {"what does", "what number", "what name", "what is the name"}),
      rule("relational: what is the man/woman",
           {"what is the man", "what is the woman", "what is this man", "what is this woman"}),
      rule("relational: what is in/on", {"what is in", "what is on"}),
      rule("identify: what kind/type/animal", {"what kind", "what type", "what animal"}),
      rule("how many", {"how many"}),
      rule("is/are/was", {"is", "are", "was"}),
      rule("interpret: can/could/does/has", {"can", "could", "does", "has"}),
      rule("where", {"where"}),
      rule("why/how", {"why", "how"}),
      rule("which/who", {"which", "who"}),
  };
}

std::vector<TypeRule> load_type_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open type rules " + path.string());
  std::vector<TypeRule> rules;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path.string() + ": rule line without a tab");
    TypeRule r;
    r.label = line.substr(0, tab);
    std::istringstream prefixes(line.substr(tab + 1));
    std::string p;
    while (std::getline(prefixes, p, '|')) {
      auto words = split_words(p);
      if (!words.empty()) r.prefixes.push_back(std::move(words));
    }
    rules.push_back(std::move(r));
  }
  return rules;
}

void save_type_rules(const std::filesystem::path& path, std::span<const TypeRule> rules) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const TypeRule& r : rules) {
    out << r.label << '\t';
    for (std::size_t i = 0; i < r.prefixes.size(); ++i) {
      if (i) out << '|';
      for (std::size_t k = 0; k < r.prefixes[i].size(); ++k) out << (k ? " " : "") << r.prefixes[i][k];
    }
    out << '\n';
  }
}

std::string question_type(std::span<const std::string> question_words,
                          std::span<const TypeRule> rules) {
  for (const TypeRule& r : rules) {
    for (const auto& prefix : r.prefixes) {
      if (prefix.empty() || prefix.size() > question_words.size()) continue;
      if (std::equal(prefix.begin(), prefix.end(), question_words.begin())) return r.label;
    }
  }
  return kCatchAllType;
}

std::vector<TypeRow> question_type_breakdown(
    std::span<const McExample* const> examples,
    const std::map<std::string, std::vector<std::size_t>>& predictions,
    std::span<const TypeRule> rules) {
  std::vector<std::string> labels;
  for (const TypeRule& r : rules) {
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
  }
  if (std::find(labels.begin(), labels.end(), kCatchAllType) == labels.end()) {
    labels.emplace_back(kCatchAllType);
  }

  std::vector<std::string> assigned;
  assigned.reserve(examples.size());
  for (const McExample* ex : examples) assigned.push_back(question_type(ex->question_words, rules));

  auto make_row = [&](const std::string& label, bool overall) {
    TypeRow row;
    row.label = label;
    std::vector<const McExample*> members;
    std::vector<std::size_t> member_idx;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (overall || assigned[i] == label) {
        members.push_back(examples[i]);
        member_idx.push_back(i);
      }
    }
    row.count = members.size();
    row.frequency = examples.empty() ? 0.0
                                     : static_cast<double>(row.count) / static_cast<double>(examples.size());
    for (const auto& [variant, preds] : predictions) {
      if (preds.size() != examples.size()) {
        throw std::invalid_argument("question_type_breakdown: '" + variant +
                                    "' predictions misaligned with questions");
      }
      std::vector<std::size_t> sub;
      for (std::size_t i : member_idx) sub.push_back(preds[i]);
      row.accuracy[variant] = mc_accuracy(sub, members);
    }
    return row;
  };

  std::vector<TypeRow> rows;
  rows.push_back(make_row("overall", true));
  for (const std::string& label : labels) {
    TypeRow row = make_row(label, false);
    if (row.count > 0) rows.push_back(std::move(row));
  }
  return rows;
}

void write_breakdown_tsv(const std::filesystem::path& path, std::span<const TypeRow> rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "type\tregion\timage\ttext\tfreq\n";
  auto cell = [](const TypeRow& row, const char* variant) {
    auto it = row.accuracy.find(variant);
    if (it == row.accuracy.end()) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * it->second);
    return std::string(buf);
  };
  for (const TypeRow& row : rows) {
    char freq[32];
    std::snprintf(freq, sizeof freq, "%.1f%%", 100.0 * row.frequency);
    out << row.label << '\t' << cell(row, "region_sel") << '\t' << cell(row, "whole_image") << '\t'
        << cell(row, "language_only") << '\t' << freq << '\n';
  }
}

// ---------------------------------------------------------------------------

double PixelWeightMap::max() const {
  return weights.empty() ? 0.0 : *std::max_element(weights.begin(), weights.end());
}

double PixelWeightMap::mean() const {
  if (weights.empty()) return 0.0;
  double s = 0.0;
  for (double w : weights) s += w;
  return s / static_cast<double>(weights.size());
}

bool box_contains_pixel(const Box& box, std::size_t x, std::size_t y) {
  const double cx = static_cast<double>(x) + 0.5;
  const double cy = static_cast<double>(y) + 0.5;
  return cx >= box.x1 && cx < box.x2 && cy >= box.y1 && cy < box.y2;
}

namespace {

/// Pixel index range [lo, hi) whose centers fall in [a, b).
std::pair<std::size_t, std::size_t> pixel_span(double a, double b, std::size_t limit) {
  const double lo = std::max(0.0, std::ceil(a - 0.5));
  const double hi = std::min(static_cast<double>(limit), std::ceil(b - 0.5));
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

std::vector<double> box_blur3(std::span<const double> values, std::size_t width, std::size_t height) {
  std::vector<double> out(values.size(), 0.0);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double s = 0.0;
      int n = 0;
      for (std::size_t yy = (y ? y - 1 : 0); yy <= std::min(height - 1, y + 1); ++yy) {
        for (std::size_t xx = (x ? x - 1 : 0); xx <= std::min(width - 1, x + 1); ++xx) {
          s += values[yy * width + xx];
          ++n;
        }
      }
      out[y * width + x] = s / n;
    }
  }
  return out;
}

PixelWeightMap pixel_weight_map(const RegionSet& regions, const AttentionMap& attention,
                                std::size_t width, std::size_t height, bool blur) {
  if (attention.weights.size() != regions.size()) {
    throw ShapeError("pixel_weight_map: " + std::to_string(attention.weights.size()) +
                     " weights for " + std::to_string(regions.size()) + " regions");
  }
  PixelWeightMap map;
  map.width = width;
  map.height = height;
  map.weights.assign(width * height, 0.0);
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const Box& b = regions.boxes[r];
    const double w = attention.weights[r];
    const auto [x0, x1] = pixel_span(b.x1, b.x2, width);
    const auto [y0, y1] = pixel_span(b.y1, b.y2, height);
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) map.weights[y * width + x] += w;
  }
  if (blur && width > 0 && height > 0) map.weights = box_blur3(map.weights, width, height);
  const double peak = map.max();
  if (peak > 0.0) {
    for (double& v : map.weights) v /= peak;
  }
  return map;
}

std::vector<RegionAnnotation> load_annotations(const std::filesystem::path& path) {
  std::vector<RegionAnnotation> out;
  detail::for_each_json_line(path, [&](const nlohmann::json& j) {
    RegionAnnotation a;
    const auto& qid = j.at("qid");
    a.question_id = qid.is_string() ? qid.get<std::string>() : qid.dump();
    for (const auto& b : j.at("boxes")) a.boxes.push_back(detail::parse_box(b));
    if (a.boxes.empty()) throw DataError(path.string() + ": annotation '" + a.question_id + "' has no boxes");
    out.push_back(std::move(a));
  });
  return out;
}

void write_annotations(const std::filesystem::path& path,
                       std::span<const RegionAnnotation> annotations) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const RegionAnnotation& a : annotations) {
    nlohmann::json j;
    j["qid"] = a.question_id;
    j["boxes"] = nlohmann::json::array();
    for (const Box& b : a.boxes) j["boxes"].push_back(detail::box_to_json(b));
    out << j.dump() << '\n';
  }
}

double annotation_weight_score(const PixelWeightMap& map, const RegionAnnotation& annotation) {
  std::vector<char> inside(map.weights.size(), 0);
  for (const Box& b : annotation.boxes) {
    const auto [x0, x1] = pixel_span(b.x1, b.x2, map.width);
    const auto [y0, y1] = pixel_span(b.y1, b.y2, map.height);
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) inside[y * map.width + x] = 1;
  }
  double sum_in = 0.0;
  std::size_t n_in = 0;
  for (std::size_t i = 0; i < inside.size(); ++i) {
    if (inside[i]) {
      sum_in += map.weights[i];
      ++n_in;
    }
  }
  if (n_in == 0) {
    throw DataError("annotation for '" + annotation.question_id + "' covers no pixels");
  }
  return sum_in / static_cast<double>(n_in) - map.mean();
}

// ---------------------------------------------------------------------------

std::vector<unsigned char> quantize(const PixelWeightMap& map) {
  std::vector<unsigned char> out(map.weights.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(map.weights[i], 0.0, 1.0);
    out[i] = static_cast<unsigned char>(std::lround(255.0 * v));
  }
  return out;
}

void export_mask(const PixelWeightMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  const auto bytes = quantize(map);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  GrayImage img;
  if (!(in >> magic >> img.width >> img.height >> maxval) || magic != "P5" || maxval != 255) {
    throw DataError(path.string() + ": not an 8-bit binary PGM");
  }
  in.get();  // single whitespace before the raster
  img.pixels.resize(img.width * img.height);
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()),
               static_cast<std::streamsize>(img.pixels.size()))) {
    throw DataError(path.string() + ": truncated raster");
  }
  return img;
}

}  // namespace regionqa
