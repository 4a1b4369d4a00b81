#include "regionqa/checkpoint.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "binary_io.hpp"
#include "regionqa/errors.hpp"

namespace regionqa {

namespace {

constexpr char kMagic[4] = {'F', 'R', 'N', 'K'};

nlohmann::json to_json(const ModelConfig& c) {
  return {{"word_dim", c.word_dim},
          {"lang_hidden_dims", c.lang_hidden_dims},
          {"embed_dim", c.embed_dim},
          {"fused_dim", c.fused_dim},
          {"head_dims", c.head_dims},
          {"feature_dim", c.feature_dim},
          {"variant", to_string(c.variant)},
          {"language_scheme", to_string(c.language_scheme)},
          {"bn_epsilon", c.bn_epsilon},
          {"bn_momentum", c.bn_momentum}};
}

ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.word_dim = j.at("word_dim").get<std::size_t>();
  c.lang_hidden_dims = j.at("lang_hidden_dims").get<std::vector<std::size_t>>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.fused_dim = j.at("fused_dim").get<std::size_t>();
  c.head_dims = j.at("head_dims").get<std::vector<std::size_t>>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.language_scheme = parse_language_scheme(j.at("language_scheme").get<std::string>());
  c.bn_epsilon = j.at("bn_epsilon").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"epochs", c.epochs},               {"seed", c.seed},
          {"heldout_fraction", c.heldout_fraction}, {"patience", c.patience}};
}

TrainConfig train_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.heldout_fraction = j.at("heldout_fraction").get<double>();
  c.patience = j.at("patience").get<std::size_t>();
  return c;
}

[[noreturn]] void corrupt(const std::filesystem::path& path, const std::string& msg) {
  throw DataError(path.string() + ": " + msg);
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return to_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return model_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  ck.model.validate();
  {
    Rng rng(0);
    const ModelParameters skeleton = init_model(ck.model, rng);
    std::vector<std::pair<std::string, std::string>> want;
    skeleton.for_each_tensor(
        [&](const std::string& n, const Tensor2& t) { want.emplace_back(n, t.shape_string()); });
    std::size_t i = 0;
    ck.params.for_each_tensor([&](const std::string& n, const Tensor2& t) {
      if (i >= want.size() || want[i].first != n || want[i].second != t.shape_string()) {
        throw ShapeError("save_checkpoint: tensor '" + n + "' is " + t.shape_string() +
                         ", which does not fit the model config");
      }
      ++i;
    });
    if (i != want.size()) throw ShapeError("save_checkpoint: parameters do not fit the model config");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  detail::put_u32(out, kCheckpointVersion);

  const nlohmann::json header = {{"model", to_json(ck.model)},
                                 {"train", to_json(ck.train)},
                                 {"best_epoch", ck.best_epoch},
                                 {"best_heldout_acc", ck.best_heldout_acc}};
  detail::put_string(out, header.dump());

  std::vector<std::pair<std::string, const Tensor2*>> tensors;
  ck.params.for_each_tensor([&](const std::string& n, const Tensor2& t) { tensors.emplace_back(n, &t); });
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put_string(out, name);
    detail::put_u32(out, 2);
    detail::put_u32(out, static_cast<std::uint32_t>(t->rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(t->cols()));
    for (double v : t->data()) detail::put_f64(out, v);
  }
  if (!out) throw DataError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) corrupt(path, "bad magic, expected FRNK");
  std::uint32_t version = 0;
  if (!detail::get_u32(in, version)) corrupt(path, "truncated header");
  if (version != kCheckpointVersion) corrupt(path, "unsupported version " + std::to_string(version));

  std::string header_text;
  if (!detail::get_string(in, header_text)) corrupt(path, "truncated config blob");
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(header_text);
    ck.model = model_from_json(header.at("model"));
    ck.train = train_from_json(header.at("train"));
    ck.best_epoch = header.at("best_epoch").get<std::size_t>();
    ck.best_heldout_acc = header.at("best_heldout_acc").get<double>();
  } catch (const nlohmann::json::exception& e) {
    corrupt(path, std::string("bad config blob: ") + e.what());
  } catch (const std::invalid_argument& e) {
    corrupt(path, std::string("bad config blob: ") + e.what());
  }

  std::uint32_t count = 0;
  if (!detail::get_u32(in, count)) corrupt(path, "truncated tensor count");
  std::map<std::string, Tensor2> stored;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    std::uint32_t rank = 0, rows = 0, cols = 0;
    if (!detail::get_string(in, name) || !detail::get_u32(in, rank)) corrupt(path, "truncated tensor header");
    if (rank != 2) corrupt(path, "tensor '" + name + "' has rank " + std::to_string(rank));
    if (!detail::get_u32(in, rows) || !detail::get_u32(in, cols)) corrupt(path, "truncated tensor dims");
    const std::uint64_t remaining = file_size - static_cast<std::uint64_t>(in.tellg());
    if (static_cast<std::uint64_t>(rows) * cols > remaining / 8) {
      corrupt(path, "truncated data for tensor '" + name + "'");
    }
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (double& v : data) {
      if (!detail::get_f64(in, v)) corrupt(path, "truncated data for tensor '" + name + "'");
    }
    stored.emplace(name, Tensor2(rows, cols, std::move(data)));
  }

  if (in.peek() != std::char_traits<char>::eof()) corrupt(path, "trailing bytes after the last tensor");

  // Build the skeleton for the stored config and fill it by name.
  ck.model.validate();
  Rng rng(0);
  ck.params = init_model(ck.model, rng);
  std::size_t matched = 0;
  ck.params.for_each_tensor([&](const std::string& name, Tensor2& t) {
    auto it = stored.find(name);
    if (it == stored.end()) corrupt(path, "missing tensor '" + name + "'");
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) {
      corrupt(path, "tensor '" + name + "' is " + it->second.shape_string() + ", config expects " +
                        t.shape_string());
    }
    t = std::move(it->second);
    ++matched;
  });
  if (matched != stored.size()) corrupt(path, "checkpoint has tensors the config does not use");
  return ck;
}

}  // namespace regionqa
