#include "aov/llm.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "aov/graph.hpp"
#include "aov/prompts.hpp"

namespace aov {

namespace {

std::string_view param_type_name(ParamType type) {
  switch (type) {
    case ParamType::kString: return "string";
    case ParamType::kInteger: return "integer";
    case ParamType::kNumber: return "number";
    case ParamType::kBoolean: return "boolean";
    case ParamType::kDate: return "string";
  }
  return "string";
}

ToolCall tool_call_from_json(const Json& json) {
  ToolCall call;
  call.id = json.value("id", "");
  const Json* fn = json.contains("function") ? &json.at("function") : &json;
  if (!fn->contains("name") || !fn->at("name").is_string()) {
    throw ProtocolError("tool call without a function name");
  }
  call.name = fn->at("name").get<std::string>();
  if (fn->contains("arguments")) {
    const Json& args = fn->at("arguments");
    if (args.is_string()) {
      const auto& text = args.get_ref<const std::string&>();
      if (text.empty()) {
        call.arguments = Json::object();
      } else {
        try {
          call.arguments = Json::parse(text);
        } catch (const Json::parse_error& e) {
          throw ProtocolError("tool call '" + call.name + "' has malformed arguments: " + e.what());
        }
      }
    } else {
      call.arguments = args;
    }
  }
  if (!call.arguments.is_object()) {
    throw ProtocolError("tool call '" + call.name + "' arguments must be a JSON object");
  }
  return call;
}

std::string preview(std::string_view text, std::size_t n) {
  if (text.size() <= n) return std::string(text);
  return std::string(text.substr(0, n)) + "...";
}

ScriptMatcher matcher_from_json(const Json& json) {
  ScriptMatcher m;
  if (json.contains("role")) {
    auto role = parse_role(json.at("role").get<std::string>());
    if (!role) throw ParseError(0, "unknown role in script matcher");
    m.role = role;
  }
  if (json.contains("content_prefix")) m.content_prefix = json.at("content_prefix").get<std::string>();
  if (json.contains("tool_name")) m.tool_name = json.at("tool_name").get<std::string>();
  return m;
}

Json matcher_to_json(const ScriptMatcher& m) {
  Json out = Json::object();
  if (m.role) out["role"] = std::string(to_string(*m.role));
  if (m.content_prefix) out["content_prefix"] = *m.content_prefix;
  if (m.tool_name) out["tool_name"] = *m.tool_name;
  return out;
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
    case Role::kTool: return "tool";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view text) {
  if (text == "system") return Role::kSystem;
  if (text == "user") return Role::kUser;
  if (text == "assistant") return Role::kAssistant;
  if (text == "tool") return Role::kTool;
  return std::nullopt;
}

Json to_json(const ChatMessage& message) {
  Json out = Json::object();
  out["role"] = std::string(to_string(message.role));
  if (message.role == Role::kAssistant && !message.tool_calls.empty() && message.content.empty()) {
    out["content"] = nullptr;
  } else {
    out["content"] = message.content;
  }
  if (!message.tool_calls.empty()) {
    Json calls = Json::array();
    for (const auto& call : message.tool_calls) {
      calls.push_back({{"id", call.id},
                       {"type", "function"},
                       {"function", {{"name", call.name}, {"arguments", call.arguments.dump()}}}});
    }
    out["tool_calls"] = std::move(calls);
  }
  if (message.tool_call_id) out["tool_call_id"] = *message.tool_call_id;
  return out;
}

ChatMessage message_from_json(const Json& json) {
  if (!json.is_object()) throw ProtocolError("message must be a JSON object");
  ChatMessage message;
  const auto role = parse_role(json.value("role", "assistant"));
  if (!role) throw ProtocolError("unknown message role");
  message.role = *role;
  if (json.contains("content") && json.at("content").is_string()) {
    message.content = json.at("content").get<std::string>();
  }
  if (json.contains("tool_calls") && json.at("tool_calls").is_array()) {
    for (const auto& call : json.at("tool_calls")) message.tool_calls.push_back(tool_call_from_json(call));
  }
  if (json.contains("tool_call_id") && json.at("tool_call_id").is_string()) {
    message.tool_call_id = json.at("tool_call_id").get<std::string>();
  }
  return message;
}

const ParamSpec* ToolSchema::param(std::string_view key) const {
  for (const auto& p : params) {
    if (p.name == key) return &p;
  }
  return nullptr;
}

Json ToolSchema::to_openai() const {
  Json properties = Json::object();
  Json required = Json::array();
  for (const auto& p : params) {
    Json prop = {{"type", std::string(param_type_name(p.type))}};
    if (!p.description.empty()) prop["description"] = p.description;
    if (p.type == ParamType::kDate) prop["format"] = "date";
    if (!p.enum_values.empty()) prop["enum"] = p.enum_values;
    properties[p.name] = std::move(prop);
    if (p.required) required.push_back(p.name);
  }
  return {{"type", "function"},
          {"function",
           {{"name", name},
            {"description", description},
            {"parameters", {{"type", "object"}, {"properties", properties}, {"required", required}}}}}};
}

Json to_json(const Usage& usage) {
  return {{"prompt_tokens", usage.prompt_tokens}, {"completion_tokens", usage.completion_tokens}};
}

Usage usage_from_json(const Json& json) {
  Usage usage;
  if (json.contains("prompt_tokens") && json.at("prompt_tokens").is_number_integer()) {
    usage.prompt_tokens = json.at("prompt_tokens").get<std::int64_t>();
  }
  if (json.contains("completion_tokens") && json.at("completion_tokens").is_number_integer()) {
    usage.completion_tokens = json.at("completion_tokens").get<std::int64_t>();
  }
  if (usage.prompt_tokens < 0 || usage.completion_tokens < 0) {
    throw ProtocolError("negative token counts in usage");
  }
  return usage;
}

std::string BackendConfig::label() const {
  if (!name.empty()) return name;
  if (kind == BackendKind::kScripted) return "scripted";
  return model;
}

BackendConfig backend_config_from_json(const Json& json) {
  BackendConfig config;
  const std::string kind = json.value("kind", "scripted");
  if (kind == "http_openai_compatible") {
    config.kind = BackendKind::kHttpOpenAiCompatible;
  } else if (kind == "scripted") {
    config.kind = BackendKind::kScripted;
  } else {
    throw std::invalid_argument("unknown backend kind '" + kind + "'");
  }
  config.name = json.value("name", "");
  config.base_url = json.value("base_url", "");
  config.model = json.value("model", "");
  config.api_key_env = json.value("api_key_env", "");
  config.temperature = json.value("temperature", 0.0);
  config.max_retries = json.value("max_retries", 2);
  config.timeout = std::chrono::milliseconds(json.value("timeout_ms", 60000));
  config.retry_backoff = std::chrono::milliseconds(json.value("retry_backoff_ms", 250));
  config.script = json.value("script", "");
  if (config.kind == BackendKind::kHttpOpenAiCompatible && (config.base_url.empty() || config.model.empty())) {
    throw std::invalid_argument("http_openai_compatible backend requires base_url and model");
  }
  if (config.max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
  return config;
}

Json to_json(const BackendConfig& config) {
  Json out = {{"kind", config.kind == BackendKind::kScripted ? "scripted" : "http_openai_compatible"},
              {"name", config.name},
              {"model", config.model},
              {"temperature", config.temperature},
              {"max_retries", config.max_retries},
              {"timeout_ms", config.timeout.count()}};
  if (!config.base_url.empty()) out["base_url"] = config.base_url;
  if (!config.api_key_env.empty()) out["api_key_env"] = config.api_key_env;
  if (!config.script.empty()) out["script"] = config.script;
  return out;
}

void check_request(std::span<const ChatMessage> messages) {
  if (messages.empty()) throw std::invalid_argument("chat request needs at least one message");
  if (messages.front().role != Role::kSystem) {
    throw std::invalid_argument("chat request must start with a system message");
  }
  for (const auto& m : messages) {
    if (!m.tool_calls.empty() && m.role != Role::kAssistant) {
      throw std::invalid_argument("tool_calls are only valid on assistant messages");
    }
    if (m.tool_call_id.has_value() != (m.role == Role::kTool)) {
      throw std::invalid_argument("tool_call_id must be set exactly on tool messages");
    }
  }
}

Script script_parse(std::string_view text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(e.byte == 0 ? 0 : e.byte - 1, e.what());
  }
  const Json* entries = &root;
  if (root.is_object()) {
    if (!root.contains("entries")) throw ParseError(0, "script object needs an 'entries' array");
    entries = &root.at("entries");
  }
  if (!entries->is_array()) throw ParseError(0, "script entries must be an array");
  Script script;
  std::size_t i = 0;
  for (const auto& e : *entries) {
    try {
      ScriptEntry entry;
      if (e.contains("match")) entry.match = matcher_from_json(e.at("match"));
      Json reply = e.at("reply");
      if (reply.is_string()) reply = Json{{"content", reply}};
      reply["role"] = "assistant";
      entry.reply = message_from_json(reply);
      if (e.contains("usage")) entry.usage = usage_from_json(e.at("usage"));
      entry.sticky = e.value("sticky", false);
      script.entries.push_back(std::move(entry));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ParseError(0, "script entry " + std::to_string(i) + ": " + ex.what());
    }
    ++i;
  }
  return script;
}

Script script_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open script file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return script_parse(buffer.str());
}

Json to_json(const Script& script) {
  Json entries = Json::array();
  for (const auto& e : script.entries) {
    Json reply = {{"content", e.reply.content}};
    if (!e.reply.tool_calls.empty()) {
      Json calls = Json::array();
      for (const auto& c : e.reply.tool_calls) {
        calls.push_back({{"id", c.id}, {"name", c.name}, {"arguments", c.arguments}});
      }
      reply["tool_calls"] = std::move(calls);
    }
    Json entry = {{"match", matcher_to_json(e.match)}, {"reply", std::move(reply)}};
    if (e.usage) entry["usage"] = to_json(*e.usage);
    if (e.sticky) entry["sticky"] = true;
    entries.push_back(std::move(entry));
  }
  return {{"entries", std::move(entries)}};
}

Usage simulated_usage(std::span<const ChatMessage> messages, std::span<const ToolSchema> tools,
                      const ChatMessage& reply) {
  Json request = {{"messages", Json::array()}, {"tools", Json::array()}};
  for (const auto& m : messages) request["messages"].push_back(to_json(m));
  for (const auto& t : tools) request["tools"].push_back(t.to_openai());
  const auto prompt_bytes = static_cast<std::int64_t>(request.dump().size());
  const auto reply_bytes = static_cast<std::int64_t>(to_json(reply).dump().size());
  return {(prompt_bytes + 3) / 4, (reply_bytes + 3) / 4};
}

ScriptedBackend::ScriptedBackend(Script script, std::string label)
    : script_(std::move(script)), label_(std::move(label)) {}

Completion ScriptedBackend::complete(std::span<const ChatMessage> messages,
                                     std::span<const ToolSchema> tools) {
  check_request(messages);
  std::lock_guard lock(mutex_);
  if (cursor_ >= script_.entries.size()) {
    throw ScriptMismatch("script exhausted after " + std::to_string(cursor_) +
                         " replies; unexpected request whose last message is " +
                         std::string(to_string(messages.back().role)) + ": \"" +
                         preview(messages.back().content, 80) + "\"");
  }
  const ScriptEntry& entry = script_.entries[cursor_];
  const std::string where = "script entry " + std::to_string(cursor_);
  if (entry.match.role && messages.back().role != *entry.match.role) {
    throw ScriptMismatch(where + ": expected last message role " + std::string(to_string(*entry.match.role)) +
                         ", got " + std::string(to_string(messages.back().role)));
  }
  if (entry.match.content_prefix) {
    const std::string& system = messages.front().content;
    const std::string& prefix = *entry.match.content_prefix;
    if (system.compare(0, prefix.size(), prefix) != 0) {
      throw ScriptMismatch(where + ": expected system prompt prefix \"" + prefix + "\", got \"" +
                           preview(system, prefix.size() + 20) + "\"");
    }
  }
  if (entry.match.tool_name) {
    const bool offered = std::any_of(tools.begin(), tools.end(),
                                     [&](const ToolSchema& t) { return t.name == *entry.match.tool_name; });
    if (!offered) {
      throw ScriptMismatch(where + ": expected tool \"" + *entry.match.tool_name + "\" to be offered");
    }
  }
  Completion out{entry.reply, entry.usage.value_or(simulated_usage(messages, tools, entry.reply))};
  if (!entry.sticky) ++cursor_;
  return out;
}

bool ScriptedBackend::exhausted() const {
  std::lock_guard lock(mutex_);
  return cursor_ >= script_.entries.size();
}

std::size_t ScriptedBackend::consumed() const {
  std::lock_guard lock(mutex_);
  return cursor_;
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config) {
  if (config.kind == BackendKind::kHttpOpenAiCompatible) return std::make_unique<HttpBackend>(config);
  if (config.script.empty() || config.script == "ground_truth") {
    throw std::invalid_argument("scripted backend '" + config.label() +
                                "' needs a script file; ground-truth scripts are built per task");
  }
  return std::make_unique<ScriptedBackend>(script_load(config.script), config.label());
}

std::optional<int> parse_judge_reply(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])) == 0) ++i;
  if (i == text.size()) return std::nullopt;
  std::size_t j = i;
  while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])) != 0) ++j;
  if (j - i > 2) return std::nullopt;
  const int value = std::stoi(std::string(text.substr(i, j - i)));
  if (value < 1 || value > 5) return std::nullopt;
  return value;
}

JudgeVerdict judge_objective(ChatBackend& judge, std::string_view candidate, std::string_view ground_truth) {
  if (candidate.empty() || ground_truth.empty()) {
    throw std::invalid_argument("judge needs non-empty candidate and reference objectives");
  }
  std::vector<ChatMessage> messages{
      ChatMessage::system(prompt_template("judge_system")),
      ChatMessage::user(render(prompt_template("judge_user"), {{"reference", std::string(ground_truth)},
                                                               {"candidate", std::string(candidate)}}))};
  JudgeVerdict verdict;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Completion reply = judge.complete(messages, {});
    verdict.usage += reply.usage;
    if (auto score = parse_judge_reply(reply.message.content)) {
      verdict.score = *score;
      return verdict;
    }
    messages.push_back(ChatMessage::assistant(reply.message.content));
    messages.push_back(ChatMessage::user(prompt_template("judge_reprompt")));
  }
  throw JudgeFormatError("judge reply is not an integer in [1, 5] after one reprompt: \"" +
                         preview(messages[messages.size() - 2].content, 60) + "\"");
}

}  // namespace aov
