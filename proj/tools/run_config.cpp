#include "run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "regionqa/errors.hpp"

namespace regionqa::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::size_t> to_dims(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::istringstream in(v);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(to_size(key, trim(part)));
  if (out.empty()) throw ConfigError("config: '" + key + "' expects a comma-separated list");
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_dims(const std::vector<std::size_t>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) out += (i ? "," : "") + std::to_string(dims[i]);
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"paths.dataset", [](RunConfig& c, auto&, auto& v) { c.paths.dataset = v; }},
      {"paths.features", [](RunConfig& c, auto&, auto& v) { c.paths.features = v; }},
      {"paths.embeddings", [](RunConfig& c, auto&, auto& v) { c.paths.embeddings = v; }},
      {"paths.annotations", [](RunConfig& c, auto&, auto& v) { c.paths.annotations = v; }},
      {"paths.checkpoint", [](RunConfig& c, auto&, auto& v) { c.paths.checkpoint = v; }},
      {"paths.output_dir", [](RunConfig& c, auto&, auto& v) { c.paths.output_dir = v; }},
      {"paths.type_rules", [](RunConfig& c, auto&, auto& v) { c.paths.type_rules = v; }},
      {"paths.noun_lexicon", [](RunConfig& c, auto&, auto& v) { c.paths.noun_lexicon = v; }},

      {"model.word_dim", [](RunConfig& c, auto& k, auto& v) { c.model.word_dim = to_size(k, v); }},
      {"model.lang_hidden_dims",
       [](RunConfig& c, auto& k, auto& v) { c.model.lang_hidden_dims = to_dims(k, v); }},
      {"model.embed_dim", [](RunConfig& c, auto& k, auto& v) { c.model.embed_dim = to_size(k, v); }},
      {"model.fused_dim", [](RunConfig& c, auto& k, auto& v) { c.model.fused_dim = to_size(k, v); }},
      {"model.head_dims", [](RunConfig& c, auto& k, auto& v) { c.model.head_dims = to_dims(k, v); }},
      {"model.feature_dim",
       [](RunConfig& c, auto& k, auto& v) { c.model.feature_dim = to_size(k, v); }},
      {"model.variant",
       [](RunConfig& c, auto&, auto& v) {
         try {
           c.model.variant = parse_variant(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       }},
      {"model.language_scheme",
       [](RunConfig& c, auto&, auto& v) {
         try {
           c.model.language_scheme = parse_language_scheme(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       }},
      {"model.bn_epsilon",
       [](RunConfig& c, auto& k, auto& v) { c.model.bn_epsilon = to_double(k, v); }},
      {"model.bn_momentum",
       [](RunConfig& c, auto& k, auto& v) { c.model.bn_momentum = to_double(k, v); }},

      {"train.learning_rate",
       [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = to_double(k, v); }},
      {"train.batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = to_size(k, v); }},
      {"train.epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = to_size(k, v); }},
      {"train.seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = to_u64(k, v); }},
      {"train.heldout_fraction",
       [](RunConfig& c, auto& k, auto& v) { c.train.heldout_fraction = to_double(k, v); }},
      {"train.patience", [](RunConfig& c, auto& k, auto& v) { c.train.patience = to_size(k, v); }},

      {"synth.num_questions",
       [](RunConfig& c, auto& k, auto& v) { c.synth.num_questions = to_size(k, v); }},
      {"synth.regions_per_image",
       [](RunConfig& c, auto& k, auto& v) { c.synth.regions_per_image = to_size(k, v); }},
      {"synth.feature_dim",
       [](RunConfig& c, auto& k, auto& v) { c.synth.feature_dim = to_size(k, v); }},
      {"synth.word_dim", [](RunConfig& c, auto& k, auto& v) { c.synth.word_dim = to_size(k, v); }},
      {"synth.vocab_size", [](RunConfig& c, auto& k, auto& v) { c.synth.vocab_size = to_size(k, v); }},
      {"synth.choices_per_question",
       [](RunConfig& c, auto& k, auto& v) { c.synth.choices_per_question = to_size(k, v); }},
      {"synth.planted_signal_strength",
       [](RunConfig& c, auto& k, auto& v) { c.synth.planted_signal_strength = to_double(k, v); }},
      {"synth.feature_noise",
       [](RunConfig& c, auto& k, auto& v) { c.synth.feature_noise = to_double(k, v); }},
      {"synth.image_size", [](RunConfig& c, auto& k, auto& v) { c.synth.image_size = to_size(k, v); }},
      {"synth.subject_distractor",
       [](RunConfig& c, auto& k, auto& v) { c.synth.subject_distractor = to_bool(k, v); }},
      {"synth.seed", [](RunConfig& c, auto& k, auto& v) { c.synth.seed = to_u64(k, v); }},

      {"eval.blur", [](RunConfig& c, auto& k, auto& v) { c.eval.blur = to_bool(k, v); }},
      {"eval.question", [](RunConfig& c, auto&, auto& v) { c.eval.question = v; }},
  };
  return table;
}

}  // namespace

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second(config, key, value);
}

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    set_config_value(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return base;
}

std::string emit_run_config(const RunConfig& c) {
  std::ostringstream out;
  auto line = [&](const char* key, const std::string& value) { out << key << " = " << value << '\n'; };
  line("paths.dataset", c.paths.dataset);
  line("paths.features", c.paths.features);
  line("paths.embeddings", c.paths.embeddings);
  line("paths.annotations", c.paths.annotations);
  line("paths.checkpoint", c.paths.checkpoint);
  line("paths.output_dir", c.paths.output_dir);
  line("paths.type_rules", c.paths.type_rules);
  line("paths.noun_lexicon", c.paths.noun_lexicon);
  out << '\n';
  line("model.word_dim", std::to_string(c.model.word_dim));
  line("model.lang_hidden_dims", fmt_dims(c.model.lang_hidden_dims));
  line("model.embed_dim", std::to_string(c.model.embed_dim));
  line("model.fused_dim", std::to_string(c.model.fused_dim));
  line("model.head_dims", fmt_dims(c.model.head_dims));
  line("model.feature_dim", std::to_string(c.model.feature_dim));
  line("model.variant", std::string(to_string(c.model.variant)));
  line("model.language_scheme", std::string(to_string(c.model.language_scheme)));
  line("model.bn_epsilon", fmt_double(c.model.bn_epsilon));
  line("model.bn_momentum", fmt_double(c.model.bn_momentum));
  out << '\n';
  line("train.learning_rate", fmt_double(c.train.learning_rate));
  line("train.batch_size", std::to_string(c.train.batch_size));
  line("train.epochs", std::to_string(c.train.epochs));
  line("train.seed", std::to_string(c.train.seed));
  line("train.heldout_fraction", fmt_double(c.train.heldout_fraction));
  line("train.patience", std::to_string(c.train.patience));
  out << '\n';
  line("synth.num_questions", std::to_string(c.synth.num_questions));
  line("synth.regions_per_image", std::to_string(c.synth.regions_per_image));
  line("synth.feature_dim", std::to_string(c.synth.feature_dim));
  line("synth.word_dim", std::to_string(c.synth.word_dim));
  line("synth.vocab_size", std::to_string(c.synth.vocab_size));
  line("synth.choices_per_question", std::to_string(c.synth.choices_per_question));
  line("synth.planted_signal_strength", fmt_double(c.synth.planted_signal_strength));
  line("synth.feature_noise", fmt_double(c.synth.feature_noise));
  line("synth.image_size", std::to_string(c.synth.image_size));
  line("synth.subject_distractor", c.synth.subject_distractor ? "true" : "false");
  line("synth.seed", std::to_string(c.synth.seed));
  out << '\n';
  line("eval.blur", c.eval.blur ? "true" : "false");
  line("eval.question", c.eval.question);
  return out.str();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write config " + path.string());
  out << emit_run_config(config);
}

}  // namespace regionqa::cli
