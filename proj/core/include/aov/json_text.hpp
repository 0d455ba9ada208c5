#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace aov {

using Json = nlohmann::json;

// Text with a per-character map back to the original input offsets.
struct MappedText {
  std::string text;
  std::vector<std::size_t> origin;

  std::size_t original_offset(std::size_t pos) const;
};

// Quotes bare identifier object keys (`{tasks: 1}` -> `{"tasks": 1}`).
// String literals and bare values (true/false/null) are left alone.
MappedText quote_bare_keys(std::string_view text);

struct ObjectSpan {
  std::size_t offset = 0;
  std::string_view text;
};

// First balanced top-level `{...}` in free text, honouring string literals.
// Returns nullopt when no opening brace exists or braces never balance.
std::optional<ObjectSpan> extract_first_object(std::string_view text);

// Python `json.dumps` layout: `", "` and `": "` separators, no newlines.
// Key order follows the container's iteration order.
std::string dump_compact(const Json& value);
std::string dump_compact(const nlohmann::ordered_json& value);

}  // namespace aov
