#pragma once

#include <map>
#include <string>
#include <string_view>

namespace aov {

// Bumped whenever a template under core/prompts/ changes wording.
inline constexpr std::string_view kPromptVersion = "2025.1";

// Template text by file stem (e.g. "planner_system"), with `#!` comment
// lines removed. Throws std::out_of_range for unknown names.
const std::string& prompt_template(std::string_view name);

// Replaces every `{{key}}`. Unknown placeholders are left as-is.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace aov
