#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aov/json_text.hpp"

namespace aov {

enum class Role { kSystem, kUser, kAssistant, kTool };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

struct ToolCall {
  std::string id;
  std::string name;
  Json arguments = Json::object();

  bool operator==(const ToolCall&) const = default;
};

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;
  std::vector<ToolCall> tool_calls;        // assistant only
  std::optional<std::string> tool_call_id; // tool only

  static ChatMessage system(std::string text) { return {Role::kSystem, std::move(text), {}, {}}; }
  static ChatMessage user(std::string text) { return {Role::kUser, std::move(text), {}, {}}; }
  static ChatMessage assistant(std::string text, std::vector<ToolCall> calls = {}) {
    return {Role::kAssistant, std::move(text), std::move(calls), {}};
  }
  static ChatMessage tool(std::string call_id, std::string text) {
    return {Role::kTool, std::move(text), {}, std::move(call_id)};
  }

  bool operator==(const ChatMessage&) const = default;
};

// Wire form used by chat-completions endpoints and run records.
Json to_json(const ChatMessage& message);
ChatMessage message_from_json(const Json& json);

enum class ParamType { kString, kInteger, kNumber, kBoolean, kDate };

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::kString;
  std::string description;
  bool required = true;
  std::vector<std::string> enum_values;
};

struct ToolSchema {
  std::string name;
  std::string description;
  std::vector<ParamSpec> params;

  const ParamSpec* param(std::string_view key) const;
  // {"type": "function", "function": {name, description, parameters}}.
  Json to_openai() const;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  std::int64_t total() const { return prompt_tokens + completion_tokens; }
  Usage& operator+=(const Usage& other) {
    prompt_tokens += other.prompt_tokens;
    completion_tokens += other.completion_tokens;
    return *this;
  }
  friend Usage operator+(Usage a, const Usage& b) { return a += b; }
  bool operator==(const Usage&) const = default;
};

Json to_json(const Usage& usage);
Usage usage_from_json(const Json& json);

enum class BackendKind { kHttpOpenAiCompatible, kScripted };

struct BackendConfig {
  BackendKind kind = BackendKind::kScripted;
  std::string name;  // label used in reports
  std::string base_url;
  std::string model;
  std::string api_key_env;
  double temperature = 0.0;
  int max_retries = 2;
  std::chrono::milliseconds timeout{60000};
  std::chrono::milliseconds retry_backoff{250};
  // Scripted backends: a script file, a directory of per-run scripts, or
  // "ground_truth" to synthesize replies from the task's ground truth.
  std::string script;

  std::string label() const;
};

BackendConfig backend_config_from_json(const Json& json);
Json to_json(const BackendConfig& config);

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Connection failures, timeouts, 429 and 5xx. Retried.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

// Malformed or unexpected response body. Never retried.
class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

class AuthError : public BackendError {
 public:
  using BackendError::BackendError;
};

class ScriptMismatch : public BackendError {
 public:
  using BackendError::BackendError;
};

class JudgeFormatError : public BackendError {
 public:
  using BackendError::BackendError;
};

struct Completion {
  ChatMessage message;
  Usage usage;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  // messages must be non-empty and start with a system message.
  virtual Completion complete(std::span<const ChatMessage> messages,
                              std::span<const ToolSchema> tools) = 0;
  virtual std::string describe() const = 0;
};

// Throws std::invalid_argument when the message list violates the contract.
void check_request(std::span<const ChatMessage> messages);

class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(BackendConfig config);

  Completion complete(std::span<const ChatMessage> messages,
                      std::span<const ToolSchema> tools) override;
  std::string describe() const override;

  // Request body for POST {base_url}/chat/completions.
  Json request_body(std::span<const ChatMessage> messages, std::span<const ToolSchema> tools) const;
  // Parses a chat-completions response body; throws ProtocolError.
  static Completion parse_response(std::string_view body);

 private:
  BackendConfig config_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;    // path prefix + /chat/completions
};

struct ScriptMatcher {
  std::optional<Role> role;                   // role of the last request message
  std::optional<std::string> content_prefix;  // prefix of the system prompt
  std::optional<std::string> tool_name;       // a tool offered in the request
};

struct ScriptEntry {
  ScriptMatcher match;
  ChatMessage reply;
  // Omitted usage is reported from the request and reply sizes.
  std::optional<Usage> usage;
  // A sticky entry is never consumed; it answers every remaining call.
  bool sticky = false;
};

struct Script {
  std::vector<ScriptEntry> entries;
};

Script script_parse(std::string_view text);
Script script_load(const std::string& path);
Json to_json(const Script& script);

// Token counts a scripted backend reports when an entry has no usage pair:
// one token per four bytes of the serialized request and reply.
Usage simulated_usage(std::span<const ChatMessage> messages, std::span<const ToolSchema> tools,
                      const ChatMessage& reply);

class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(Script script, std::string label = "scripted");

  Completion complete(std::span<const ChatMessage> messages,
                      std::span<const ToolSchema> tools) override;
  std::string describe() const override { return label_; }

  bool exhausted() const;
  std::size_t consumed() const;

 private:
  mutable std::mutex mutex_;
  Script script_;
  std::string label_;
  std::size_t cursor_ = 0;
};

// HTTP backends, or scripted backends loaded from a script file.
std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config);

// Parses a judge reply: a bare integer, or the first digit run in the text.
// Values outside [1, 5] are rejected.
std::optional<int> parse_judge_reply(std::string_view text);

struct JudgeVerdict {
  int score = 0;
  Usage usage;
};

// Rates a candidate objective against the reference on a 1-5 scale. One
// reprompt on an unparseable reply, then JudgeFormatError.
JudgeVerdict judge_objective(ChatBackend& judge, std::string_view candidate,
                             std::string_view ground_truth);

inline int judge_score(ChatBackend& judge, std::string_view candidate, std::string_view ground_truth) {
  return judge_objective(judge, candidate, ground_truth).score;
}

}  // namespace aov
