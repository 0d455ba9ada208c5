#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "aov/graph.hpp"
#include "aov/llm.hpp"

namespace aov {
namespace {

std::vector<ChatMessage> request(const std::string& system, const std::string& user) {
  return {ChatMessage::system(system), ChatMessage::user(user)};
}

TEST(Messages, JsonRoundTrip) {
  const ChatMessage call = ChatMessage::assistant({}, {ToolCall{"c1", "run_detector", {{"dataset", "ds-1"}}}});
  const Json j = to_json(call);
  EXPECT_TRUE(j["content"].is_null());
  EXPECT_EQ(j["tool_calls"][0]["function"]["arguments"], R"({"dataset":"ds-1"})");
  EXPECT_EQ(message_from_json(j), call);
  const ChatMessage tool = ChatMessage::tool("c1", "{}");
  EXPECT_EQ(message_from_json(to_json(tool)), tool);
}

TEST(Messages, RequestShapeIsChecked) {
  EXPECT_THROW(check_request({}), std::invalid_argument);
  const std::vector<ChatMessage> no_system{ChatMessage::user("hi")};
  EXPECT_THROW(check_request(no_system), std::invalid_argument);
  std::vector<ChatMessage> bad_tool{ChatMessage::system("s"), ChatMessage{Role::kTool, "x", {}, std::nullopt}};
  EXPECT_THROW(check_request(bad_tool), std::invalid_argument);
}

TEST(Scripted, RepliesInOrderAndChecksMatchers) {
  const Script script = script_parse(R"({"entries": [
    {"match": {"role": "user", "content_prefix": "You are a"}, "reply": "first", "usage": {"prompt_tokens": 10, "completion_tokens": 2}},
    {"match": {"tool_name": "annotate"}, "reply": {"content": null, "tool_calls": [{"id": "c", "name": "annotate", "arguments": {"layer": "layer-1", "text": "t"}}]}}
  ]})");
  ScriptedBackend backend(script);
  const Completion a = backend.complete(request("You are a planner", "go"), {});
  EXPECT_EQ(a.message.content, "first");
  EXPECT_EQ(a.usage, (Usage{10, 2}));

  const std::vector<ToolSchema> wrong{ToolSchema{"render_layer", "", {}}};
  EXPECT_THROW(backend.complete(request("x", "y"), wrong), ScriptMismatch);
  const std::vector<ToolSchema> right{ToolSchema{"annotate", "", {}}};
  const Completion b = backend.complete(request("x", "y"), right);
  ASSERT_EQ(b.message.tool_calls.size(), 1u);
  EXPECT_EQ(b.message.tool_calls[0].arguments["layer"], "layer-1");
  EXPECT_TRUE(backend.exhausted());
  EXPECT_THROW(backend.complete(request("x", "y"), {}), ScriptMismatch);
}

TEST(Scripted, MismatchDoesNotConsume) {
  ScriptedBackend backend(script_parse(R"([{"match": {"content_prefix": "You are vision_agent."}, "reply": "ok"}])"));
  EXPECT_THROW(backend.complete(request("You are map_agent.", "u"), {}), ScriptMismatch);
  EXPECT_EQ(backend.consumed(), 0u);
  EXPECT_EQ(backend.complete(request("You are vision_agent.", "u"), {}).message.content, "ok");
}

TEST(Scripted, StickyEntryAnswersForever) {
  ScriptedBackend backend(script_parse(R"([{"reply": "5", "sticky": true}])"));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(backend.complete(request("s", "u"), {}).message.content, "5");
  EXPECT_FALSE(backend.exhausted());
}

TEST(Scripted, SimulatedUsageTracksRequestAndReplySize) {
  const auto messages = request("system prompt", "user");
  const ChatMessage reply = ChatMessage::assistant("done");
  Json body = {{"messages", Json::array({to_json(messages[0]), to_json(messages[1])})}, {"tools", Json::array()}};
  const auto expected_prompt = static_cast<std::int64_t>((body.dump().size() + 3) / 4);
  const auto expected_completion = static_cast<std::int64_t>((to_json(reply).dump().size() + 3) / 4);
  EXPECT_EQ(simulated_usage(messages, {}, reply), (Usage{expected_prompt, expected_completion}));

  const std::vector<ToolSchema> tools{ToolSchema{"annotate", "Add a note", {ParamSpec{"text"}}}};
  EXPECT_GT(simulated_usage(messages, tools, reply).prompt_tokens, expected_prompt);
}

TEST(Scripted, MalformedScripts) {
  EXPECT_THROW(script_parse("[{"), ParseError);
  EXPECT_THROW(script_parse(R"({"nope": []})"), ParseError);
  EXPECT_THROW(script_parse(R"([{"match": {"role": "robot"}, "reply": "x"}])"), ParseError);
  EXPECT_THROW(script_parse(R"([{"match": {}}])"), ParseError);
}

TEST(Scripted, ScriptJsonRoundTrip) {
  const Script s = script_parse(
      R"([{"match": {"role": "user"}, "reply": {"content": "", "tool_calls": [{"id": "c1", "name": "annotate", "arguments": {"text": "a"}}]}, "usage": {"prompt_tokens": 1, "completion_tokens": 2}, "sticky": true}])");
  const Script back = script_parse(to_json(s).dump());
  ASSERT_EQ(back.entries.size(), 1u);
  EXPECT_EQ(back.entries[0].reply, s.entries[0].reply);
  EXPECT_EQ(back.entries[0].usage, s.entries[0].usage);
  EXPECT_TRUE(back.entries[0].sticky);
  EXPECT_EQ(back.entries[0].match.role, Role::kUser);
}

TEST(Judge, ReplyParsing) {
  EXPECT_EQ(parse_judge_reply("4"), 4);
  EXPECT_EQ(parse_judge_reply("Score: 5/5"), 5);
  EXPECT_EQ(parse_judge_reply("  3\n"), 3);
  EXPECT_EQ(parse_judge_reply("I would rate this 2."), 2);
  EXPECT_FALSE(parse_judge_reply("excellent").has_value());
  EXPECT_FALSE(parse_judge_reply("0").has_value());
  EXPECT_FALSE(parse_judge_reply("7").has_value());
  EXPECT_FALSE(parse_judge_reply("12345").has_value());
}

TEST(Judge, OneReprompt) {
  ScriptedBackend ok(script_parse(R"([{"reply": "great", "usage": {"prompt_tokens": 3, "completion_tokens": 1}},
                                      {"reply": "4", "usage": {"prompt_tokens": 5, "completion_tokens": 1}}])"));
  const JudgeVerdict v = judge_objective(ok, "load imagery", "Load EO imagery");
  EXPECT_EQ(v.score, 4);
  EXPECT_EQ(v.usage, (Usage{8, 2}));

  ScriptedBackend bad(script_parse(R"([{"reply": "great"}, {"reply": "very good"}])"));
  EXPECT_THROW(judge_objective(bad, "a", "b"), JudgeFormatError);
  EXPECT_THROW(judge_objective(bad, "", "b"), std::invalid_argument);
}

TEST(BackendConfig, JsonRoundTripAndChecks) {
  const BackendConfig c = backend_config_from_json(
      {{"kind", "http_openai_compatible"}, {"base_url", "http://localhost:1/v1"}, {"model", "m"}, {"name", "local"}});
  EXPECT_EQ(c.kind, BackendKind::kHttpOpenAiCompatible);
  EXPECT_EQ(c.label(), "local");
  EXPECT_EQ(backend_config_from_json(to_json(c)).base_url, "http://localhost:1/v1");
  EXPECT_THROW(backend_config_from_json({{"kind", "http_openai_compatible"}}), std::invalid_argument);
  EXPECT_THROW(backend_config_from_json({{"kind", "telepathy"}}), std::invalid_argument);
}

// Minimal OpenAI-compatible endpoint.
class FakeEndpoint {
 public:
  FakeEndpoint() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++hits_;
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      if (n <= fail_first_) {
        res.status = 503;
        return;
      }
      if (status_ != 200) {
        res.status = status_;
        return;
      }
      res.set_content(reply_, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  BackendConfig config() const {
    BackendConfig c;
    c.kind = BackendKind::kHttpOpenAiCompatible;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/";
    c.model = "test-model";
    c.retry_backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(2000);
    return c;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  int fail_first_ = 0;
  int status_ = 200;
  std::string reply_;
  std::string last_body_;
  std::string last_auth_;
};

TEST(Http, ParsesToolCallsAndUsage) {
  FakeEndpoint fake;
  fake.reply_ = R"({"choices": [{"message": {"role": "assistant", "content": null, "tool_calls": [
      {"id": "call_1", "type": "function", "function": {"name": "run_detector", "arguments": "{\"dataset\": \"ds-1\"}"}}]}}],
      "usage": {"prompt_tokens": 120, "completion_tokens": 14, "total_tokens": 134}})";
  HttpBackend backend(fake.config());
  const std::vector<ToolSchema> tools{ToolSchema{"run_detector", "Detect", {ParamSpec{"dataset"}}}};
  const Completion c = backend.complete(request("sys", "detect"), tools);
  ASSERT_EQ(c.message.tool_calls.size(), 1u);
  EXPECT_EQ(c.message.tool_calls[0].name, "run_detector");
  EXPECT_EQ(c.message.tool_calls[0].arguments["dataset"], "ds-1");
  EXPECT_EQ(c.usage, (Usage{120, 14}));

  const Json sent = Json::parse(fake.last_body_);
  EXPECT_EQ(sent["model"], "test-model");
  EXPECT_EQ(sent["messages"].size(), 2u);
  EXPECT_EQ(sent["tools"][0]["function"]["name"], "run_detector");
}

TEST(Http, RetriesTransientStatusThenSucceeds) {
  FakeEndpoint fake;
  fake.fail_first_ = 2;
  fake.reply_ = R"({"choices": [{"message": {"content": "hello"}}]})";
  HttpBackend backend(fake.config());
  EXPECT_EQ(backend.complete(request("s", "u"), {}).message.content, "hello");
  EXPECT_EQ(fake.hits_.load(), 3);
}

TEST(Http, GivesUpAfterRetryBudget) {
  FakeEndpoint fake;
  fake.fail_first_ = 100;
  HttpBackend backend(fake.config());
  EXPECT_THROW(backend.complete(request("s", "u"), {}), TransportError);
  EXPECT_EQ(fake.hits_.load(), 3);
}

TEST(Http, AuthAndProtocolErrors) {
  FakeEndpoint fake;
  fake.status_ = 401;
  EXPECT_THROW(HttpBackend(fake.config()).complete(request("s", "u"), {}), AuthError);
  fake.status_ = 200;
  fake.reply_ = R"({"choices": []})";
  EXPECT_THROW(HttpBackend(fake.config()).complete(request("s", "u"), {}), ProtocolError);
  fake.reply_ = "not json";
  EXPECT_THROW(HttpBackend(fake.config()).complete(request("s", "u"), {}), ProtocolError);

  BackendConfig missing_key = fake.config();
  missing_key.api_key_env = "AOVFLOW_TEST_KEY_THAT_IS_NOT_SET";
  EXPECT_THROW(HttpBackend(missing_key).complete(request("s", "u"), {}), AuthError);
}

TEST(Http, SendsBearerToken) {
  FakeEndpoint fake;
  fake.reply_ = R"({"choices": [{"message": {"content": "ok"}}]})";
  ::setenv("AOVFLOW_TEST_KEY", "sekret", 1);
  BackendConfig c = fake.config();
  c.api_key_env = "AOVFLOW_TEST_KEY";
  HttpBackend(c).complete(request("s", "u"), {});
  EXPECT_EQ(fake.last_auth_, "Bearer sekret");
}

TEST(Http, UnreachableEndpointIsTransportError) {
  BackendConfig c;
  c.kind = BackendKind::kHttpOpenAiCompatible;
  c.base_url = "http://127.0.0.1:1/v1";
  c.model = "m";
  c.max_retries = 0;
  c.timeout = std::chrono::milliseconds(500);
  EXPECT_THROW(HttpBackend(c).complete(request("s", "u"), {}), TransportError);
}

}  // namespace
}  // namespace aov
