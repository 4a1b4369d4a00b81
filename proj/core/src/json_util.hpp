#ifndef REGIONQA_SRC_JSON_UTIL_HPP_
#define REGIONQA_SRC_JSON_UTIL_HPP_

#include <filesystem>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "regionqa/language.hpp"
#include "regionqa/vision.hpp"

namespace regionqa::detail {

/// Calls `on_record` for every non-blank line of a JSON-lines file. Parse
/// failures become DataError tagged with path and line number.
void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const nlohmann::json&)>& on_record);

/// Accepts either annotated token objects or plain strings; plain strings go
/// through fallback_tag. Punctuation is stripped.
std::vector<AnnotatedToken> parse_question_tokens(
    const nlohmann::json& tokens, const std::unordered_set<std::string>& noun_lexicon);

Box parse_box(const nlohmann::json& j);
nlohmann::json box_to_json(const Box& b);

}  // namespace regionqa::detail

#endif  // REGIONQA_SRC_JSON_UTIL_HPP_
