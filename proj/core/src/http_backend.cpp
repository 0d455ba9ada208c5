#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "aov/llm.hpp"

namespace aov {

namespace {

struct SplitUrl {
  std::string origin;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.origin = url;
  } else {
    out.origin = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty() || config_.model.empty()) {
    throw std::invalid_argument("http backend requires base_url and model");
  }
  auto parts = split_url(config_.base_url);
  origin_ = std::move(parts.origin);
  path_ = parts.path + "/chat/completions";
}

std::string HttpBackend::describe() const { return config_.label() + " (" + config_.base_url + ")"; }

Json HttpBackend::request_body(std::span<const ChatMessage> messages, std::span<const ToolSchema> tools) const {
  Json body = {{"model", config_.model}, {"temperature", config_.temperature}, {"messages", Json::array()}};
  for (const auto& m : messages) body["messages"].push_back(to_json(m));
  if (!tools.empty()) {
    Json list = Json::array();
    for (const auto& t : tools) list.push_back(t.to_openai());
    body["tools"] = std::move(list);
  }
  return body;
}

Completion HttpBackend::parse_response(std::string_view body) {
  Json root;
  try {
    root = Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw ProtocolError(std::string("response is not JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("choices") || !root.at("choices").is_array() ||
      root.at("choices").empty()) {
    throw ProtocolError("response has no choices");
  }
  const Json& choice = root.at("choices").at(0);
  if (!choice.is_object() || !choice.contains("message")) throw ProtocolError("choice has no message");
  Json message = choice.at("message");
  if (!message.is_object()) throw ProtocolError("choice message is not an object");
  message["role"] = "assistant";
  Completion out;
  out.message = message_from_json(message);
  out.message.tool_call_id.reset();
  if (root.contains("usage") && root.at("usage").is_object()) out.usage = usage_from_json(root.at("usage"));
  return out;
}

Completion HttpBackend::complete(std::span<const ChatMessage> messages, std::span<const ToolSchema> tools) {
  check_request(messages);

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw AuthError("environment variable " + config_.api_key_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string payload = request_body(messages, tools).dump();

  httplib::Client client(origin_);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.retry_backoff * (1 << (attempt - 1)));
    auto result = client.Post(path_, headers, payload, "application/json");
    if (!result) {
      last_error = "request to " + origin_ + path_ + " failed: " + httplib::to_string(result.error());
      continue;
    }
    const int status = result->status;
    if (status == 401 || status == 403) {
      throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(status) + ")");
    }
    if (retryable_status(status)) {
      last_error = "HTTP " + std::to_string(status) + " from " + origin_ + path_;
      continue;
    }
    if (status < 200 || status >= 300) {
      throw ProtocolError("HTTP " + std::to_string(status) + ": " + result->body.substr(0, 200));
    }
    return parse_response(result->body);
  }
  throw TransportError(last_error + " (after " + std::to_string(config_.max_retries + 1) + " attempts)");
}

}  // namespace aov
