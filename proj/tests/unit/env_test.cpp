#include <gtest/gtest.h>

#include "aov/env.hpp"

namespace aov {
namespace {

const Json kLoadEo = {{"aoi", "Port of Rotterdam"}, {"start", "2023-11-01"}, {"end", "2023-11-30"}, {"source", "EO"}};

TEST(Catalog, DefaultAgentsAndOwnership) {
  const AgentCatalog c = catalog_default();
  EXPECT_EQ(c.names(), (std::set<std::string>{"analytics_agent", "database_agent", "map_agent", "vision_agent"}));
  EXPECT_EQ(c.agents().front().name, "database_agent");
  EXPECT_EQ(c.owner_of("run_detector")->name, "vision_agent");
  EXPECT_EQ(c.owner_of("nope"), nullptr);
  EXPECT_EQ(c.all_tools().size(), 8u);
  const std::string block = c.prompt_block();
  EXPECT_NE(block.find("- database_agent: APIs fetching satellite images"), std::string::npos);
  EXPECT_NE(block.find("model in {swin-l-eo, swin-l-sar, landcover-cls}"), std::string::npos);
  EXPECT_NE(block.find("title?"), std::string::npos);
}

TEST(Catalog, RejectsDuplicates) {
  EXPECT_THROW(AgentCatalog({AgentSpec{"a", "", {}}, AgentSpec{"a", "", {}}}), std::invalid_argument);
  EXPECT_THROW(AgentCatalog({AgentSpec{"a", "", {ToolSchema{"t", "", {}}, ToolSchema{"t", "", {}}}}}),
               std::invalid_argument);
}

TEST(Arguments, CanonicalizedBeforeExecution) {
  const AgentCatalog c = catalog_default();
  const Json raw = {{" AOI ", " Port of Rotterdam "}, {"start", "2023/11/1"}, {"end", "20231130"}, {"source", "eo"}};
  const Json canonical = canonicalize_arguments(*c.find("database_agent")->tool("load_satellite_imagery"), raw);
  EXPECT_EQ(canonical, kLoadEo);
}

TEST(Arguments, Violations) {
  const AgentCatalog catalog = catalog_default();
  const ToolSchema& load = *catalog.find("database_agent")->tool("load_satellite_imagery");
  Json extra = kLoadEo;
  extra["cloud"] = 3;
  EXPECT_THROW(canonicalize_arguments(load, extra), SchemaViolationError);
  Json missing = kLoadEo;
  missing.erase("aoi");
  EXPECT_THROW(canonicalize_arguments(load, missing), SchemaViolationError);
  Json bad_date = kLoadEo;
  bad_date["end"] = "2023-02-30";
  EXPECT_THROW(canonicalize_arguments(load, bad_date), SchemaViolationError);
  Json bad_enum = kLoadEo;
  bad_enum["source"] = "lidar";
  EXPECT_THROW(canonicalize_arguments(load, bad_enum), SchemaViolationError);
  EXPECT_THROW(canonicalize_arguments(load, Json::array()), SchemaViolationError);
}

TEST(Dates, Normalization) {
  EXPECT_EQ(normalize_date("2024-2-29"), "2024-02-29");
  EXPECT_EQ(normalize_date("2024.03"), "2024-03-01");
  EXPECT_FALSE(normalize_date("2023-02-29").has_value());
  EXPECT_FALSE(normalize_date("2023-11/01").has_value());
  EXPECT_FALSE(normalize_date("Nov 1 2023").has_value());
  EXPECT_EQ(normalize_date("1900-02-29"), std::nullopt);
  EXPECT_EQ(normalize_date("2000-02-29"), "2000-02-29");
}

TEST(Environment, PipelineMutatesState) {
  Environment env(catalog_default());
  const auto& load = env.call("database_agent", "load_satellite_imagery", kLoadEo);
  ASSERT_TRUE(load.ok());
  EXPECT_EQ(load.result["dataset"], "ds-1");
  const auto& det = env.call("vision_agent", "run_detector",
                             {{"dataset", "ds-1"}, {"model", "swin-l-eo"}, {"category", "ship"}});
  ASSERT_TRUE(det.ok());
  const std::int64_t count = det.result["count"];
  env.call("map_agent", "render_layer", {{"target", "det-1"}, {"title", "Ships"}});
  env.call("map_agent", "annotate", {{"layer", "layer-1"}, {"text", "note"}});
  env.call("analytics_agent", "count_objects", {{"detection", "det-1"}});

  const EnvState& s = env.state();
  EXPECT_EQ(s.loaded_rasters.at("ds-1").source, "EO");
  EXPECT_EQ(s.detections.at("det-1").count, count);
  ASSERT_EQ(s.map_layers.size(), 1u);
  EXPECT_EQ(s.map_layers[0].annotations, std::vector<std::string>{"note"});
  EXPECT_EQ(s.analytics.at("count:det-1"), static_cast<double>(count));
  ASSERT_EQ(env.trace().size(), 5u);
  for (std::size_t i = 0; i < env.trace().size(); ++i) EXPECT_EQ(env.trace()[i].seq, static_cast<std::int64_t>(i + 1));
}

TEST(Environment, ErrorsAreRecordedNotThrown) {
  Environment env(catalog_default());
  const auto& wrong_agent = env.call("map_agent", "run_detector", Json::object());
  EXPECT_EQ(wrong_agent.error->kind, ToolErrorKind::kUnknownTool);
  const auto& schema = env.call("vision_agent", "run_detector", {{"dataset", "ds-9"}});
  EXPECT_EQ(schema.error->kind, ToolErrorKind::kSchemaViolation);
  const auto& missing = env.call("vision_agent", "run_detector",
                                 {{"dataset", "ds-9"}, {"model", "swin-l-eo"}, {"category", "ship"}});
  EXPECT_EQ(missing.error->kind, ToolErrorKind::kSchemaViolation);
  EXPECT_NE(missing.error->message.find("unknown dataset"), std::string::npos);
  EXPECT_TRUE(env.state() == EnvState{});
  EXPECT_EQ(env.trace().size(), 3u);
  EXPECT_EQ(missing.result["error"], "SchemaViolation");
}

TEST(Environment, SensorMismatchIsRejected) {
  Environment env(catalog_default());
  Json sar = kLoadEo;
  sar["source"] = "SAR";
  env.call("database_agent", "load_satellite_imagery", sar);
  const auto& r = env.call("vision_agent", "run_detector",
                           {{"dataset", "ds-1"}, {"model", "swin-l-eo"}, {"category", "ship"}});
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(env.call("vision_agent", "run_detector",
                       {{"dataset", "ds-1"}, {"model", "swin-l-sar"}, {"category", "ship"}})
                  .ok());
}

TEST(Environment, ResultsDependOnContentAndSeedOnly) {
  Environment a(catalog_default(), {}, 7);
  Environment b(catalog_default(), {}, 7);
  Environment c(catalog_default(), {}, 8);
  a.call("database_agent", "load_satellite_imagery", kLoadEo);
  b.call("database_agent", "query_catalog", {{"aoi", "x"}, {"start", "2024-01-01"}, {"end", "2024-01-02"}});
  b.call("database_agent", "load_satellite_imagery", kLoadEo);
  c.call("database_agent", "load_satellite_imagery", kLoadEo);
  EXPECT_EQ(a.trace()[0].result["scenes"], b.trace()[1].result["scenes"]);
  EXPECT_EQ(a.state().fingerprint(), b.state().fingerprint());
  EXPECT_NE(a.trace()[0].result, Json());
  (void)c;
}

TEST(Faults, ErrorWrongResultAndOccurrence) {
  FaultPlan plan = FaultPlan::from_json(Json::array({
      {{"agent", "database_agent"}, {"tool", "load_satellite_imagery"}, {"occurrence", 2}, {"effect", "error"},
       {"message", "timeout"}},
      {{"agent", "vision_agent"}, {"tool", "run_detector"}, {"effect", "wrong_result"}},
  }));
  Environment env(catalog_default(), plan);
  Environment clean(catalog_default());
  EXPECT_TRUE(env.call("database_agent", "load_satellite_imagery", kLoadEo).ok());
  const auto& second = env.call("database_agent", "load_satellite_imagery", kLoadEo);
  EXPECT_EQ(second.error->kind, ToolErrorKind::kInjectedFault);
  EXPECT_EQ(second.error->message, "timeout");
  EXPECT_EQ(env.state().loaded_rasters.size(), 1u);

  clean.call("database_agent", "load_satellite_imagery", kLoadEo);
  const Json det = {{"dataset", "ds-1"}, {"model", "swin-l-eo"}, {"category", "ship"}};
  const auto& good = clean.call("vision_agent", "run_detector", det);
  const auto& shifted = env.call("vision_agent", "run_detector", det);
  EXPECT_TRUE(shifted.perturbed);
  EXPECT_EQ(shifted.result["count"].get<std::int64_t>(), good.result["count"].get<std::int64_t>() + 7);
  EXPECT_EQ(FaultPlan::from_json(plan.to_json()).entries.size(), 2u);
}

TEST(Faults, MalformedPlans) {
  EXPECT_THROW(FaultPlan::from_json(Json::array({{{"tool", "x"}}})), std::invalid_argument);
  EXPECT_THROW(FaultPlan::from_json(Json::array({{{"agent", "a"}, {"tool", "x"}, {"effect", "explode"}}})),
               std::invalid_argument);
  EXPECT_THROW(FaultPlan::from_json(Json::array({{{"agent", "a"}, {"tool", "x"}, {"occurrence", 0}}})),
               std::invalid_argument);
}

TEST(Invoke, IsPure) {
  const AgentCatalog c = catalog_default();
  const EnvState before;
  const InvokeOutcome out = invoke(before, c, "database_agent", "load_satellite_imagery", kLoadEo, {}, 1, 1);
  EXPECT_TRUE(before == EnvState{});
  EXPECT_EQ(out.state.loaded_rasters.size(), 1u);
  const InvokeOutcome again = invoke(before, c, "database_agent", "load_satellite_imagery", kLoadEo, {}, 1, 1);
  EXPECT_EQ(out.record, again.record);
}

TEST(State, JsonRoundTrip) {
  Environment env(catalog_default());
  env.call("database_agent", "load_satellite_imagery", kLoadEo);
  env.call("analytics_agent", "area_stats", {{"dataset", "ds-1"}, {"category", "water"}});
  const EnvState& s = env.state();
  EXPECT_TRUE(EnvState::from_json(s.to_json()) == s);
  const ToolCallRecord& r = env.trace()[1];
  EXPECT_EQ(ToolCallRecord::from_json(r.to_json()), r);
}

TEST(Assertions, PathsAndComparators) {
  Environment env(catalog_default());
  env.call("database_agent", "load_satellite_imagery", kLoadEo);
  env.call("vision_agent", "run_detector", {{"dataset", "ds-1"}, {"model", "swin-l-eo"}, {"category", "ship"}});
  env.call("map_agent", "render_layer", {{"target", "det-1"}, {"title", "Ships in port"}});
  const Json root = env.state().to_json();
  EXPECT_EQ(resolve_path(root, "detections[*].category"), std::vector<Json>{"ship"});
  EXPECT_EQ(resolve_path(root, "map_layers[0].title"), std::vector<Json>{"Ships in port"});
  EXPECT_TRUE(resolve_path(root, "map_layers[3].title").empty());

  auto check = [&](Json a) {
    const std::vector<Assertion> list{Assertion::from_json(a)};
    return assert_final_state(env.state(), list).ok;
  };
  EXPECT_TRUE(check({{"path", "loaded_rasters[*].aoi"}, {"op", "=="}, {"value", "Port of Rotterdam"}}));
  EXPECT_FALSE(check({{"path", "loaded_rasters[*].source"}, {"op", "=="}, {"value", "SAR"}}));
  EXPECT_TRUE(check({{"path", "detections[*].count"}, {"op", ">="}, {"value", 0}}));
  EXPECT_TRUE(check({{"path", "map_layers[*].title"}, {"op", "contains"}, {"value", "port"}}));
  EXPECT_FALSE(check({{"path", "analytics.count:det-1"}}));
  EXPECT_FALSE(check({{"path", "loaded_rasters[*].aoi"}, {"op", "!="}, {"value", "x"}, {"min_count", 2}}));

  EXPECT_THROW(resolve_path(root, "weather.today"), BadAssertionPath);
  EXPECT_THROW(resolve_path(root, "detections[x]"), BadAssertionPath);
  EXPECT_THROW(resolve_path(root, "detections..a"), BadAssertionPath);
  EXPECT_THROW(Assertion::from_json({{"path", "a"}, {"op", "~="}, {"value", 1}}), BadAssertionPath);
  EXPECT_THROW(Assertion::from_json({{"path", "a"}, {"op", "=="}}), BadAssertionPath);
}

}  // namespace
}  // namespace aov
