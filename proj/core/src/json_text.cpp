#include "aov/json_text.hpp"

#include <cctype>

namespace aov {

namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-';
}

template <typename J>
void emit(const J& value, std::string& out) {
  if (value.is_object()) {
    out += '{';
    bool first = true;
    for (auto it = value.begin(); it != value.end(); ++it) {
      if (!first) out += ", ";
      first = false;
      out += J(it.key()).dump(-1, ' ', false, J::error_handler_t::replace);
      out += ": ";
      emit(it.value(), out);
    }
    out += '}';
  } else if (value.is_array()) {
    out += '[';
    bool first = true;
    for (const auto& element : value) {
      if (!first) out += ", ";
      first = false;
      emit(element, out);
    }
    out += ']';
  } else {
    out += value.dump(-1, ' ', false, J::error_handler_t::replace);
  }
}

}  // namespace

std::size_t MappedText::original_offset(std::size_t pos) const {
  if (origin.empty()) return 0;
  if (pos >= origin.size()) return origin.back() + 1;
  return origin[pos];
}

MappedText quote_bare_keys(std::string_view text) {
  MappedText out;
  out.text.reserve(text.size() + 16);
  out.origin.reserve(text.size() + 16);
  auto put = [&out](char c, std::size_t from) {
    out.text.push_back(c);
    out.origin.push_back(from);
  };

  bool in_string = false;
  bool escaped = false;
  char last_significant = '\0';
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (in_string) {
      put(c, i);
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
        last_significant = '"';
      }
      ++i;
      continue;
    }
    if (c == '"') {
      in_string = true;
      put(c, i);
      ++i;
      continue;
    }
    if (is_ident_start(c) && (last_significant == '{' || last_significant == ',')) {
      std::size_t end = i;
      while (end < text.size() && is_ident_char(text[end])) ++end;
      std::size_t look = end;
      while (look < text.size() && std::isspace(static_cast<unsigned char>(text[look])) != 0) {
        ++look;
      }
      if (look < text.size() && text[look] == ':') {
        put('"', i);
        for (std::size_t k = i; k < end; ++k) put(text[k], k);
        put('"', end - 1);
        last_significant = '"';
        i = end;
        continue;
      }
    }
    if (std::isspace(static_cast<unsigned char>(c)) == 0) last_significant = c;
    put(c, i);
    ++i;
  }
  return out;
}

std::optional<ObjectSpan> extract_first_object(std::string_view text) {
  const auto start = text.find('{');
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return ObjectSpan{start, text.substr(start, i - start + 1)};
    }
  }
  return std::nullopt;
}

std::string dump_compact(const Json& value) {
  std::string out;
  emit(value, out);
  return out;
}

std::string dump_compact(const nlohmann::ordered_json& value) {
  std::string out;
  emit(value, out);
  return out;
}

}  // namespace aov
