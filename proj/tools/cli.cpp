#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "regionqa/checkpoint.hpp"
#include "regionqa/errors.hpp"
#include "regionqa/evaluation.hpp"
#include "regionqa/synth.hpp"
#include "regionqa/training.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;

namespace regionqa::cli {

namespace {

struct Options {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string variant;
  std::string language_scheme;
  std::string qid;
  std::vector<std::string> checkpoints;
  std::vector<std::string> overrides;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

RunConfig effective_config(const Options& opt) {
  RunConfig cfg = opt.config_path.empty() ? RunConfig{} : load_run_config(opt.config_path);
  for (const std::string& kv : opt.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opt.seed) {
    cfg.train.seed = *opt.seed;
    cfg.synth.seed = *opt.seed;
  }
  if (!opt.out_dir.empty()) cfg.paths.output_dir = opt.out_dir;
  if (!opt.variant.empty()) set_config_value(cfg, "model.variant", opt.variant);
  if (!opt.language_scheme.empty()) set_config_value(cfg, "model.language_scheme", opt.language_scheme);
  if (!opt.qid.empty()) cfg.eval.question = opt.qid;
  if (!opt.checkpoints.empty()) cfg.paths.checkpoint = opt.checkpoints.front();
  return cfg;
}

const std::string& require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string("missing required setting '") + key + "'");
  if (!fs::exists(value)) throw DataError(std::string(key) + ": no such file '" + value + "'");
  return value;
}

std::unordered_set<std::string> load_lexicon(const std::string& path) {
  std::unordered_set<std::string> out;
  if (path.empty()) return out;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open noun lexicon " + path);
  std::string w;
  while (in >> w) out.insert(w);
  return out;
}

struct LoadedData {
  std::vector<McRecord> records;
  EmbeddingTable table;
  FeatureMap features;
};

LoadedData load_data(const RunConfig& cfg, std::size_t expected_feature_dim) {
  LoadedData d;
  d.records = load_records(require_path(cfg.paths.dataset, "paths.dataset"),
                           load_lexicon(cfg.paths.noun_lexicon));
  d.table = EmbeddingTable::load(require_path(cfg.paths.embeddings, "paths.embeddings"));
  d.features = load_features(require_path(cfg.paths.features, "paths.features"));
  const std::size_t dim = d.features.begin()->second.feature_dim();
  if (expected_feature_dim != 0 && dim != expected_feature_dim) {
    throw DataError("feature file has feature_dim " + std::to_string(dim) +
                    " but the model config says " + std::to_string(expected_feature_dim));
  }
  return d;
}

void check_word_dim(const EmbeddingTable& table, const ModelConfig& model) {
  if (table.dim() != model.word_dim) {
    throw DataError("embedding table has dim " + std::to_string(table.dim()) +
                    " but the model config says word_dim " + std::to_string(model.word_dim));
  }
}

std::vector<const McExample*> pointers(const std::vector<McExample>& v, std::span<const std::size_t> idx) {
  std::vector<const McExample*> out;
  for (std::size_t i : idx) out.push_back(&v[i]);
  return out;
}

const McExample& find_question(const std::vector<McExample>& examples, const std::string& qid) {
  if (qid.empty()) throw ConfigError("missing question id (--qid or eval.question)");
  for (const McExample& e : examples) {
    if (e.question_id == qid) return e;
  }
  throw DataError("question '" + qid + "' not found in dataset");
}

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir = cfg.paths.output_dir.empty() ? fs::path("out") : fs::path(cfg.paths.output_dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

int cmd_synth(RunConfig cfg, std::ostream& out) {
  const fs::path dir = output_dir(cfg);
  const SyntheticData data = synth_generate(cfg.synth);
  const SyntheticFiles files = write_synthetic(data, dir);
  cfg.paths.dataset = fs::absolute(files.dataset).string();
  cfg.paths.features = fs::absolute(files.features).string();
  cfg.paths.embeddings = fs::absolute(files.embeddings).string();
  cfg.paths.annotations = fs::absolute(files.annotations).string();
  cfg.model.word_dim = cfg.synth.word_dim;
  cfg.model.feature_dim = cfg.synth.feature_dim;
  save_run_config(dir / "run.cfg", cfg);
  out << "wrote " << data.records.size() << " questions to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const LoadedData d = load_data(cfg, cfg.model.feature_dim);
  check_word_dim(d.table, cfg.model);
  const std::vector<McExample> examples = encode_records(d.records, d.table, cfg.model.language_scheme);
  const fs::path dir = output_dir(cfg);
  save_run_config(dir / "effective.cfg", cfg);

  const TrainResult result = train(examples, d.features, cfg.train, cfg.model);
  write_history_csv(dir / "train_log.csv", result.history);
  Checkpoint ck{cfg.model, cfg.train, result.best, result.best_epoch, result.best_heldout_acc};
  const fs::path ck_path = cfg.paths.checkpoint.empty() ? dir / "model.frnk" : fs::path(cfg.paths.checkpoint);
  save_checkpoint(ck_path, ck);
  out << "best_epoch " << result.best_epoch << " heldout_acc " << fmt(result.best_heldout_acc) << '\n';
  out << "checkpoint " << ck_path.string() << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::vector<std::string>& checkpoint_paths, std::ostream& out) {
  std::vector<std::string> paths = checkpoint_paths;
  if (paths.empty()) paths.push_back(require_path(cfg.paths.checkpoint, "paths.checkpoint"));
  const LoadedData d = load_data(cfg, 0);
  const std::vector<TypeRule> rules =
      cfg.paths.type_rules.empty() ? default_type_rules() : load_type_rules(cfg.paths.type_rules);
  std::vector<RegionAnnotation> annotations;
  if (!cfg.paths.annotations.empty()) annotations = load_annotations(require_path(cfg.paths.annotations, "paths.annotations"));

  const fs::path dir = output_dir(cfg);
  save_run_config(dir / "effective.cfg", cfg);
  std::map<std::string, std::vector<std::size_t>> predictions;
  std::vector<const McExample*> heldout_ptrs;
  std::vector<McExample> reference;  // encodings of the first checkpoint, for the breakdown

  for (const std::string& path : paths) {
    const Checkpoint ck = load_checkpoint(require_path(path, "--checkpoint"));
    check_word_dim(d.table, ck.model);
    std::vector<McExample> examples = encode_records(d.records, d.table, ck.model.language_scheme);
    const DatasetSplit split = split_dataset(examples, ck.train.heldout_fraction);
    const auto heldout = pointers(examples, split.heldout);
    const auto preds = predict(ck.params, ck.model, heldout, d.features);
    const double acc = mc_accuracy(preds, heldout);

    std::vector<std::size_t> all_idx(examples.size());
    for (std::size_t i = 0; i < all_idx.size(); ++i) all_idx[i] = i;
    const auto all = pointers(examples, all_idx);
    const double overall = mc_accuracy(predict(ck.params, ck.model, all, d.features), all);

    out << "checkpoint " << path << " variant " << to_string(ck.model.variant) << " heldout_acc "
        << fmt(acc) << " heldout_questions " << heldout.size() << " overall_acc " << fmt(overall) << '\n';

    const std::string variant(to_string(ck.model.variant));
    predictions[variant] = preds;
    if (reference.empty()) {
      reference = std::move(examples);
      heldout_ptrs = pointers(reference, split.heldout);
    }

    if (!annotations.empty() && ck.model.has_attention()) {
      std::map<std::string, const RegionAnnotation*> by_qid;
      for (const auto& a : annotations) by_qid[a.question_id] = &a;
      std::ofstream tsv(dir / ("region_eval_" + variant + ".tsv"));
      tsv << "qid\tmu_in_minus_mu\n";
      std::size_t positive = 0, total = 0;
      double sum = 0.0;
      for (const McExample* ex : heldout) {
        auto it = by_qid.find(ex->question_id);
        if (it == by_qid.end()) continue;
        const RegionSet& rs = d.features.at(ex->image_id);
        const auto scores = score_question(ck.params, ck.model, *ex, d.features);
        const PixelWeightMap map =
            pixel_weight_map(rs, scores[ex->correct_index].attention,
                             static_cast<std::size_t>(rs.width), static_cast<std::size_t>(rs.height));
        const double diff = annotation_weight_score(map, *it->second);
        tsv << ex->question_id << '\t' << fmt(diff) << '\n';
        positive += diff > 0.0 ? 1 : 0;
        sum += diff;
        ++total;
      }
      if (total > 0) {
        out << "region_eval variant " << variant << " positive " << positive << "/" << total
            << " fraction " << fmt(static_cast<double>(positive) / static_cast<double>(total))
            << " mean_diff " << fmt(sum / static_cast<double>(total)) << '\n';
      }
    }
  }

  if (predictions.size() == paths.size()) {
    const auto rows = question_type_breakdown(heldout_ptrs, predictions, rules);
    write_breakdown_tsv(dir / "breakdown.tsv", rows);
  } else {
    throw ConfigError("eval: two checkpoints share a variant");
  }
  return kExitOk;
}

int cmd_score(const RunConfig& cfg, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(require_path(cfg.paths.checkpoint, "paths.checkpoint"));
  const LoadedData d = load_data(cfg, ck.model.has_fusion() ? ck.model.feature_dim : 0);
  check_word_dim(d.table, ck.model);
  const auto examples = encode_records(d.records, d.table, ck.model.language_scheme);
  const McExample& ex = find_question(examples, cfg.eval.question);
  const auto scores = score_question(ck.params, ck.model, ex, d.features);

  nlohmann::ordered_json j;
  j["qid"] = ex.question_id;
  j["image"] = ex.image_id;
  j["variant"] = std::string(to_string(ck.model.variant));
  j["choices"] = nlohmann::ordered_json::array();
  std::size_t best = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    nlohmann::ordered_json choice;
    std::string answer;
    for (const auto& w : ex.answers[c]) answer += (answer.empty() ? "" : " ") + w;
    choice["answer"] = answer;
    choice["score"] = scores[c].score;
    choice["attention"] = scores[c].attention.weights;
    j["choices"].push_back(std::move(choice));
    if (scores[c].score > scores[best].score) best = c;
  }
  j["predicted"] = best;
  out << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_explain(const RunConfig& cfg, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(require_path(cfg.paths.checkpoint, "paths.checkpoint"));
  if (!ck.model.has_fusion()) throw ConfigError("explain: language_only checkpoints have no region weights");
  const LoadedData d = load_data(cfg, ck.model.feature_dim);
  check_word_dim(d.table, ck.model);
  const auto examples = encode_records(d.records, d.table, ck.model.language_scheme);
  const McExample& ex = find_question(examples, cfg.eval.question);
  const RegionSet& rs = d.features.at(ex.image_id);
  const auto scores = score_question(ck.params, ck.model, ex, d.features);
  const fs::path dir = output_dir(cfg);
  save_run_config(dir / "effective.cfg", cfg);
  for (std::size_t c = 0; c < scores.size(); ++c) {
    const PixelWeightMap map = pixel_weight_map(rs, scores[c].attention,
                                                static_cast<std::size_t>(rs.width),
                                                static_cast<std::size_t>(rs.height), cfg.eval.blur);
    char name[64];
    std::snprintf(name, sizeof name, "_choice%02zu.pgm", c);
    const fs::path path = dir / (ex.question_id + name);
    export_mask(map, path);
    out << path.string() << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Region-selection multiple-choice VQA scorer"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Run config file (key = value)");
    sub->add_option("--seed", opt.seed, "Seed for training and synthesis");
    sub->add_option("--out", opt.out_dir, "Output directory");
    sub->add_option("--variant", opt.variant, "region_sel|language_only|whole_image|uniform_regions")
        ->check(CLI::IsMember({"region_sel", "language_only", "whole_image", "uniform_regions"}));
    sub->add_option("--language-scheme", opt.language_scheme, "five_bin|two_bin")
        ->check(CLI::IsMember({"five_bin", "two_bin"}));
    sub->add_option("--set", opt.overrides, "Override a config key: section.key=value");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "Train a scorer and write a checkpoint");
  CLI::App* eval_cmd = app.add_subcommand("eval", "Held-out accuracy, type breakdown, region evaluation");
  CLI::App* score_cmd = app.add_subcommand("score", "Per-choice scores for one question as JSON");
  CLI::App* explain_cmd = app.add_subcommand("explain", "Per-choice attention masks as PGM files");
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  for (CLI::App* sub : {train_cmd, eval_cmd, score_cmd, explain_cmd, synth_cmd}) add_common(sub);
  for (CLI::App* sub : {eval_cmd, score_cmd, explain_cmd}) {
    sub->add_option("--checkpoint", opt.checkpoints, "Checkpoint file");
  }
  for (CLI::App* sub : {score_cmd, explain_cmd}) sub->add_option("--qid", opt.qid, "Question id");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const RunConfig cfg = effective_config(opt);
    if (train_cmd->parsed()) return cmd_train(cfg, out);
    if (eval_cmd->parsed()) return cmd_eval(cfg, opt.checkpoints, out);
    if (score_cmd->parsed()) return cmd_score(cfg, out);
    if (explain_cmd->parsed()) return cmd_explain(cfg, out);
    if (synth_cmd->parsed()) return cmd_synth(cfg, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  err << "error: no command\n";
  return kExitUsage;
}

}  // namespace regionqa::cli
