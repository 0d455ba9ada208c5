#include "aov/prompts.hpp"

#include <sstream>
#include <stdexcept>

namespace aov {

namespace detail {
struct EmbeddedPrompt {
  const char* name;
  const char* text;
};
extern const EmbeddedPrompt kEmbeddedPrompts[];
extern const std::size_t kEmbeddedPromptCount;
}  // namespace detail

namespace {

std::string strip_comments(std::string_view raw) {
  std::istringstream in{std::string(raw)};
  std::string out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("#!", 0) == 0) continue;
    out += line;
    out += '\n';
  }
  while (!out.empty() && (out.back() == '\n' || out.back() == ' ')) out.pop_back();
  return out;
}

const std::map<std::string, std::string, std::less<>>& table() {
  static const auto prompts = [] {
    std::map<std::string, std::string, std::less<>> out;
    for (std::size_t i = 0; i < detail::kEmbeddedPromptCount; ++i) {
      out.emplace(detail::kEmbeddedPrompts[i].name, strip_comments(detail::kEmbeddedPrompts[i].text));
    }
    return out;
  }();
  return prompts;
}

}  // namespace

const std::string& prompt_template(std::string_view name) {
  const auto& prompts = table();
  auto it = prompts.find(name);
  if (it == prompts.end()) throw std::out_of_range("unknown prompt template '" + std::string(name) + "'");
  return it->second;
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    const auto open = tmpl.find("{{", i);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    out.append(tmpl.substr(i, open - i));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    auto it = vars.find(key);
    if (it != vars.end()) {
      out += it->second;
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    i = close + 2;
  }
  return out;
}

}  // namespace aov
