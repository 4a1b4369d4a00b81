#include "json_util.hpp"

#include <cctype>
#include <fstream>

#include "regionqa/errors.hpp"

namespace regionqa::detail {

void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const nlohmann::json&)>& on_record) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      on_record(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

namespace {

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::vector<AnnotatedToken> parse_question_tokens(
    const nlohmann::json& tokens, const std::unordered_set<std::string>& noun_lexicon) {
  if (!tokens.is_array()) throw DataError("question tokens must be an array");
  bool annotated = !tokens.empty() && tokens.front().is_object();
  std::vector<AnnotatedToken> out;
  if (annotated) {
    for (const auto& t : tokens) {
      AnnotatedToken tok;
      tok.surface = lowercase(t.at("surface").get<std::string>());
      if (tok.surface.empty()) throw DataError("question token with empty surface");
      tok.pos = parse_pos(t.value("pos", "other"));
      tok.dep = parse_dep(t.value("dep", "other"));
      tok.position = out.size();
      out.push_back(std::move(tok));
    }
  } else {
    std::vector<std::string> words;
    for (const auto& t : tokens) {
      std::string w = lowercase(t.get<std::string>());
      if (!is_punctuation(w)) words.push_back(std::move(w));
    }
    out = fallback_tag(words, noun_lexicon, default_determiners());
  }
  return strip_punctuation(out);
}

Box parse_box(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be [x1,y1,x2,y2]");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

nlohmann::json box_to_json(const Box& b) { return nlohmann::json::array({b.x1, b.y1, b.x2, b.y2}); }

}  // namespace regionqa::detail
