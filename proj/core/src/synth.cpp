#include "regionqa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "regionqa/errors.hpp"
#include "regionqa/rng.hpp"

namespace regionqa {

namespace {

constexpr const char* kNounWords[] = {"dog",  "cat",   "car",   "tree",  "hydrant", "bus",
                                      "kite", "horse", "chair", "table", "boat",    "bird",
                                      "shirt", "umbrella", "bench", "train"};
constexpr const char* kColorWords[] = {"red",   "blue",  "green", "yellow", "white", "black",
                                       "brown", "orange", "pink", "purple", "gray",  "silver",
                                       "gold",  "tan",   "beige", "navy"};
constexpr const char* kFunctionWords[] = {"what", "color", "is", "the", "near"};

std::string word_from(const char* const* list, std::size_t list_size, const char* stem,
                      std::size_t i) {
  if (i < list_size) return list[i];
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%02zu", stem, i);
  return buf;
}

Vector gaussian(std::size_t n, double scale, Rng& rng) {
  Vector v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

/// k distinct values from [0, n), in draw order.
std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

AnnotatedToken token(const std::string& surface, PartOfSpeech pos, DepRole dep = DepRole::other) {
  AnnotatedToken t;
  t.surface = surface;
  t.pos = pos;
  t.dep = dep;
  return t;
}

}  // namespace

void SyntheticSpec::validate() const {
  auto at_least = [](std::size_t v, std::size_t lo, const char* what) {
    if (v < lo) {
      throw std::invalid_argument(std::string("synthetic spec: ") + what + " must be >= " +
                                  std::to_string(lo));
    }
  };
  at_least(num_questions, 1, "num_questions");
  at_least(regions_per_image, 1, "regions_per_image");
  at_least(feature_dim, 1, "feature_dim");
  at_least(word_dim, 1, "word_dim");
  at_least(choices_per_question, 2, "choices_per_question");
  at_least(image_size, 8, "image_size");
  const std::size_t objects = std::max<std::size_t>(1, regions_per_image - 1);
  const std::size_t nouns = vocab_size / 2;
  at_least(nouns, std::max<std::size_t>(objects, subject_distractor ? 2 : 1), "vocab_size / 2");
  at_least(vocab_size - nouns, choices_per_question, "vocab_size - vocab_size / 2");
  if (subject_distractor && objects < 2) {
    throw std::invalid_argument("synthetic spec: subject_distractor needs at least 2 object regions");
  }
}

SyntheticData synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticData data;

  const std::size_t n_nouns = spec.vocab_size / 2;
  const std::size_t n_colors = spec.vocab_size - n_nouns;
  for (std::size_t i = 0; i < n_nouns; ++i)
    data.nouns.push_back(word_from(kNounWords, std::size(kNounWords), "noun", i));
  for (std::size_t i = 0; i < n_colors; ++i)
    data.colors.push_back(word_from(kColorWords, std::size(kColorWords), "color", i));

  // Word vectors: roughly unit norm.
  const double word_scale = 1.0 / std::sqrt(static_cast<double>(spec.word_dim));
  data.embeddings = EmbeddingTable(spec.word_dim);
  auto add_word = [&](const std::string& w) {
    Vector v = gaussian(spec.word_dim, word_scale, rng);
    for (double& x : v) x = as_f32(x);
    data.embeddings.insert(w, std::move(v));
  };
  for (const char* w : kFunctionWords) add_word(w);
  for (const auto& w : data.nouns) add_word(w);
  for (const auto& w : data.colors) add_word(w);

  for (std::size_t i = 0; i < n_nouns; ++i)
    data.noun_patterns.push_back(gaussian(spec.feature_dim, 1.0, rng));
  for (std::size_t i = 0; i < n_colors; ++i)
    data.color_patterns.push_back(gaussian(spec.feature_dim, 1.0, rng));

  const std::size_t objects = std::max<std::size_t>(1, spec.regions_per_image - 1);
  const bool has_proposals = spec.regions_per_image >= 2;
  const double size = static_cast<double>(spec.image_size);
  const std::size_t grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(objects))));
  const double cell = size / static_cast<double>(grid);

  for (std::size_t q = 0; q < spec.num_questions; ++q) {
    char qid[32], img[32];
    std::snprintf(qid, sizeof qid, "q%06zu", q);
    std::snprintf(img, sizeof img, "img%06zu", q);

    const std::vector<std::size_t> obj_noun = sample_distinct(n_nouns, objects, rng);
    std::vector<std::size_t> obj_color;
    if (n_colors >= objects) {
      obj_color = sample_distinct(n_colors, objects, rng);
    } else {
      for (std::size_t o = 0; o < objects; ++o) obj_color.push_back(rng.below(n_colors));
    }
    const std::size_t key = rng.below(objects);
    std::size_t other = key;
    if (objects >= 2) {
      other = rng.below(objects - 1);
      if (other >= key) ++other;
    }

    // Object features and boxes, one per grid cell.
    const std::vector<std::size_t> cells = sample_distinct(grid * grid, objects, rng);
    std::vector<Box> obj_box(objects);
    Tensor2 obj_feat(spec.feature_dim, objects);
    for (std::size_t o = 0; o < objects; ++o) {
      const double cx0 = static_cast<double>(cells[o] % grid) * cell;
      const double cy0 = static_cast<double>(cells[o] / grid) * cell;
      const double w = std::floor(cell * rng.uniform(0.6, 0.9));
      const double h = std::floor(cell * rng.uniform(0.6, 0.9));
      const double x1 = std::floor(cx0 + rng.uniform(0.0, cell - w));
      const double y1 = std::floor(cy0 + rng.uniform(0.0, cell - h));
      obj_box[o] = Box{x1, y1, x1 + w, y1 + h};
      for (std::size_t d = 0; d < spec.feature_dim; ++d) {
        const double v = spec.planted_signal_strength *
                             (data.noun_patterns[obj_noun[o]][d] + data.color_patterns[obj_color[o]][d]) +
                         spec.feature_noise * rng.normal();
        obj_feat(d, o) = as_f32(v);
      }
    }
    Vector whole(spec.feature_dim, 0.0);
    for (std::size_t o = 0; o < objects; ++o)
      for (std::size_t d = 0; d < spec.feature_dim; ++d) whole[d] += obj_feat(d, o);
    for (double& v : whole) v = as_f32(v / static_cast<double>(objects));

    // Proposals: every object plus jittered, lower-scored near-duplicates that
    // suppression removes.
    ProposalSet props;
    props.image_id = img;
    props.width = size;
    props.height = size;
    std::vector<Vector> prop_feat;
    std::vector<std::size_t> prop_object;
    if (has_proposals) {
      for (std::size_t o = 0; o < objects; ++o) {
        const double score = rng.uniform(0.5, 1.0);
        props.boxes.push_back(obj_box[o]);
        props.scores.push_back(score);
        prop_feat.push_back(obj_feat.col(o));
        prop_object.push_back(o);
        const std::size_t dups = 1 + rng.below(2);
        for (std::size_t k = 0; k < dups; ++k) {
          const double dx = static_cast<double>(rng.below(5)) - 2.0;
          const double dy = static_cast<double>(rng.below(5)) - 2.0;
          const Box& b = obj_box[o];
          Box j{std::clamp(b.x1 + dx, 0.0, size - 1.0), std::clamp(b.y1 + dy, 0.0, size - 1.0),
                std::clamp(b.x2 + dx, 1.0, size), std::clamp(b.y2 + dy, 1.0, size)};
          props.boxes.push_back(j);
          props.scores.push_back(score * rng.uniform(0.5, 0.99));
          Vector f = obj_feat.col(o);
          for (double& v : f) v = as_f32(v + spec.feature_noise * rng.normal());
          prop_feat.push_back(std::move(f));
          prop_object.push_back(o);
        }
      }
    }
    Tensor2 pf(spec.feature_dim, prop_feat.size());
    for (std::size_t i = 0; i < prop_feat.size(); ++i) pf.set_col(i, prop_feat[i]);
    const std::vector<std::size_t> kept =
        has_proposals ? nms(props.boxes, props.scores, kDefaultNmsThreshold) : std::vector<std::size_t>{};
    RegionSet rs;
    if (has_proposals) {
      rs = assemble_region_set(props, pf, whole, spec.regions_per_image, kDefaultNmsThreshold);
    } else {
      // One region: the full frame is all there is.
      rs.image_id = img;
      rs.width = size;
      rs.height = size;
      rs.boxes = {Box{0.0, 0.0, size, size}};
      rs.features = Tensor2(spec.feature_dim, 1);
      rs.features.set_col(0, whole);
      rs.whole_image_index = 0;
    }

    std::size_t key_region = rs.whole_image_index;
    for (std::size_t i = 0; i < kept.size() && i + 1 < spec.regions_per_image; ++i) {
      if (prop_object[kept[i]] == key && props.boxes[kept[i]] == obj_box[key]) key_region = i;
    }
    data.key_region.push_back(key_region);

    // Question.
    McRecord rec;
    rec.question_id = qid;
    rec.image_id = img;
    rec.question = {token("what", PartOfSpeech::other), token("color", PartOfSpeech::noun),
                    token("is", PartOfSpeech::verb), token("the", PartOfSpeech::det),
                    token(data.nouns[obj_noun[key]], PartOfSpeech::noun, DepRole::nsubj)};
    if (spec.subject_distractor) {
      rec.question.push_back(token("near", PartOfSpeech::other));
      rec.question.push_back(token("the", PartOfSpeech::det));
      rec.question.push_back(token(data.nouns[obj_noun[other]], PartOfSpeech::noun));
    }
    for (std::size_t i = 0; i < rec.question.size(); ++i) rec.question[i].position = i;

    // Choices: the key colour, in-image decoys, then colours absent from the image.
    const std::size_t n_choices = spec.choices_per_question;
    std::vector<std::size_t> choice_colors{obj_color[key]};
    const std::size_t in_image = std::max<std::size_t>(1, (n_choices - 1) / 2);
    std::vector<std::size_t> decoy_objects;
    if (objects >= 2) {
      decoy_objects.push_back(other);
      for (std::size_t o : sample_distinct(objects, objects, rng)) {
        if (o != key && o != other) decoy_objects.push_back(o);
      }
    }
    auto already = [&](std::size_t c) {
      return std::find(choice_colors.begin(), choice_colors.end(), c) != choice_colors.end();
    };
    for (std::size_t o : decoy_objects) {
      if (choice_colors.size() >= 1 + in_image) break;
      if (!already(obj_color[o])) choice_colors.push_back(obj_color[o]);
    }
    for (std::size_t c : sample_distinct(n_colors, n_colors, rng)) {
      if (choice_colors.size() >= n_choices) break;
      const bool present = std::find(obj_color.begin(), obj_color.end(), c) != obj_color.end();
      if (!present && !already(c)) choice_colors.push_back(c);
    }
    for (std::size_t c = 0; choice_colors.size() < n_choices && c < n_colors; ++c) {
      if (!already(c)) choice_colors.push_back(c);
    }
    if (choice_colors.size() < n_choices) {
      throw std::invalid_argument("synthetic spec: not enough colours for the requested choices");
    }

    std::vector<double> fractions(n_choices, 0.0);
    const std::size_t agree = 6 + rng.below(5);
    fractions[0] = static_cast<double>(agree) / 10.0;
    std::size_t remaining = 10 - agree;
    for (std::size_t c = 1; c < n_choices && remaining > 0; ++c) {
      const std::size_t votes = std::min<std::size_t>(remaining, rng.below(3));
      fractions[c] = static_cast<double>(votes) / 10.0;
      remaining -= votes;
    }
    const std::vector<std::size_t> perm = sample_distinct(n_choices, n_choices, rng);
    for (std::size_t k = 0; k < n_choices; ++k) {
      rec.answers.push_back({data.colors[choice_colors[perm[k]]]});
      rec.fractions.push_back(fractions[perm[k]]);
    }

    data.annotations.push_back(RegionAnnotation{qid, {rs.boxes[key_region]}});
    data.proposals.push_back(std::move(props));
    data.records.push_back(std::move(rec));
    data.features.emplace(img, std::move(rs));
  }
  return data;
}

SyntheticFiles write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SyntheticFiles files{dir / "dataset.jsonl", dir / "features.rgnf", dir / "proposals.jsonl",
                       dir / "embeddings.txt", dir / "annotations.jsonl"};
  write_records(files.dataset, data.records);
  write_features(files.features, data.features);
  write_proposals(files.proposals, data.proposals);
  data.embeddings.save(files.embeddings);
  write_annotations(files.annotations, data.annotations);
  return files;
}

}  // namespace regionqa
