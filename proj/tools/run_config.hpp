#ifndef REGIONQA_TOOLS_RUN_CONFIG_HPP_
#define REGIONQA_TOOLS_RUN_CONFIG_HPP_

#include <filesystem>
#include <stdexcept>
#include <string>

#include "regionqa/model.hpp"
#include "regionqa/synth.hpp"
#include "regionqa/training.hpp"

namespace regionqa::cli {

/// Bad config key or value; maps to the usage exit code.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunPaths {
  std::string dataset;
  std::string features;
  std::string embeddings;
  std::string annotations;
  std::string checkpoint;
  std::string output_dir = "out";
  std::string type_rules;
  std::string noun_lexicon;

  bool operator==(const RunPaths&) const = default;
};

struct EvalFlags {
  bool blur = true;        // export paths only
  std::string question;    // qid for score / explain

  bool operator==(const EvalFlags&) const = default;
};

struct RunConfig {
  RunPaths paths;
  ModelConfig model = ModelConfig::desk();
  TrainConfig train;
  SyntheticSpec synth;
  EvalFlags eval;

  bool operator==(const RunConfig&) const = default;
};

/// Applies one `section.key = value` assignment.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Flat text: `section.key = value` per line, `#` comments.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
std::string emit_run_config(const RunConfig& config);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace regionqa::cli

#endif  // REGIONQA_TOOLS_RUN_CONFIG_HPP_
