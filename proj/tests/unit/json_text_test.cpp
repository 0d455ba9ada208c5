#include <gtest/gtest.h>

#include "aov/json_text.hpp"

namespace aov {
namespace {

TEST(QuoteBareKeys, QuotesIdentifierKeysOnly) {
  const MappedText m = quote_bare_keys(R"({tasks: {"a": true, b_2: null, "s": "x: y"}})");
  EXPECT_EQ(m.text, R"({"tasks": {"a": true, "b_2": null, "s": "x: y"}})");
  EXPECT_EQ(Json::parse(m.text)["tasks"]["s"], "x: y");
}

TEST(QuoteBareKeys, MapsOffsetsBackToInput) {
  const std::string input = "{tasks: [1, }";
  const MappedText m = quote_bare_keys(input);
  const std::size_t bad = m.text.find('}');
  EXPECT_EQ(m.original_offset(bad), input.find('}'));
  EXPECT_EQ(m.original_offset(0), 0u);
}

TEST(ExtractFirstObject, SkipsProseAndFences) {
  const std::string reply = "Sure! Here it is:\n```json\n{\"a\": \"}{\", \"b\": {\"c\": 1}}\n```\n{\"second\": 1}";
  const auto span = extract_first_object(reply);
  ASSERT_TRUE(span.has_value());
  EXPECT_EQ(span->text, R"({"a": "}{", "b": {"c": 1}})");
  EXPECT_EQ(reply.substr(span->offset, span->text.size()), span->text);
}

TEST(ExtractFirstObject, MissingOrUnbalanced) {
  EXPECT_FALSE(extract_first_object("no json here").has_value());
  EXPECT_FALSE(extract_first_object("{\"a\": {\"b\": 1}").has_value());
}

TEST(DumpCompact, UsesPythonSeparators) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["b"] = 1;
  j["a"] = {1, "x"};
  EXPECT_EQ(dump_compact(j), R"({"b": 1, "a": [1, "x"]})");
  EXPECT_EQ(dump_compact(Json::object()), "{}");
  EXPECT_EQ(dump_compact(Json::array()), "[]");
}

}  // namespace
}  // namespace aov
