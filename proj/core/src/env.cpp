#include "aov/env.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <thread>

namespace aov {

namespace {

ParamSpec str(std::string name, std::string description, bool required = true) {
  return {std::move(name), ParamType::kString, std::move(description), required, {}};
}

ParamSpec date(std::string name, std::string description) {
  return {std::move(name), ParamType::kDate, std::move(description), true, {}};
}

ParamSpec choice(std::string name, std::string description, std::vector<std::string> values,
                 bool required = true) {
  return {std::move(name), ParamType::kString, std::move(description), required, std::move(values)};
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b])) != 0) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])) != 0) --e;
  return std::string(s.substr(b, e - b));
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

int days_in_month(int year, int month) {
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2) {
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return leap ? 29 : 28;
  }
  return kDays[month - 1];
}

std::string pad2(int v) { return (v < 10 ? "0" : "") + std::to_string(v); }

// Simulated outputs are keyed on what the call is about, not on the ids the
// environment happened to hand out.
std::uint64_t content_hash(std::uint64_t seed, std::string_view tool, const Json& key) {
  return fnv1a64(std::string(tool) + "|" + key.dump(), seed);
}

Json raster_json(const Raster& r) {
  return {{"aoi", r.aoi}, {"start", r.start}, {"end", r.end}, {"source", r.source}};
}

class CallFailed : public std::runtime_error {
 public:
  CallFailed(ToolErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  ToolErrorKind kind() const { return kind_; }

 private:
  ToolErrorKind kind_;
};

[[noreturn]] void reject(const std::string& message) {
  throw CallFailed(ToolErrorKind::kSchemaViolation, message);
}

const Raster& require_dataset(const EnvState& state, const std::string& id) {
  auto it = state.loaded_rasters.find(id);
  if (it == state.loaded_rasters.end()) reject("unknown dataset '" + id + "'");
  return it->second;
}

const Detection& require_detection(const EnvState& state, const std::string& id) {
  auto it = state.detections.find(id);
  if (it == state.detections.end()) reject("unknown detection '" + id + "'");
  return it->second;
}

std::string next_id(std::string_view prefix, std::size_t existing) {
  return std::string(prefix) + "-" + std::to_string(existing + 1);
}

// Executes one well-formed call against `state` (mutated in place).
Json execute(EnvState& state, const std::string& tool, const Json& args, std::uint64_t seed) {
  auto s = [&args](const char* key) { return args.at(key).get<std::string>(); };

  if (tool == "load_satellite_imagery") {
    Raster raster{s("aoi"), s("start"), s("end"), s("source")};
    if (raster.start > raster.end) reject("start date " + raster.start + " is after end date " + raster.end);
    const std::string id = next_id("ds", state.loaded_rasters.size());
    const auto h = content_hash(seed, tool, raster_json(raster));
    state.loaded_rasters[id] = raster;
    Json out = raster_json(raster);
    out["dataset"] = id;
    out["scenes"] = static_cast<std::int64_t>(h % 40 + 1);
    return out;
  }
  if (tool == "query_catalog") {
    Json key = {{"aoi", s("aoi")}, {"start", s("start")}, {"end", s("end")}};
    if (key["start"].get<std::string>() > key["end"].get<std::string>()) reject("start date is after end date");
    const auto h = content_hash(seed, tool, key);
    Json available = {{"EO", static_cast<std::int64_t>(h % 50 + 1)},
                      {"SAR", static_cast<std::int64_t>((h >> 16) % 30 + 1)}};
    if (args.contains("source")) available = Json{{s("source"), available[s("source")]}};
    key["available_scenes"] = std::move(available);
    return key;
  }
  if (tool == "run_detector") {
    const std::string dataset = s("dataset");
    const Raster& raster = require_dataset(state, dataset);
    const std::string model = s("model");
    if (model == "swin-l-eo" && raster.source != "EO") {
      reject("model 'swin-l-eo' expects EO imagery but '" + dataset + "' is " + raster.source);
    }
    if (model == "swin-l-sar" && raster.source != "SAR") {
      reject("model 'swin-l-sar' expects SAR imagery but '" + dataset + "' is " + raster.source);
    }
    Detection detection{dataset, model, s("category"), 0};
    const auto h = content_hash(seed, tool,
                                {{"raster", raster_json(raster)}, {"model", model}, {"category", detection.category}});
    detection.count = static_cast<std::int64_t>(h % 250);
    const std::string id = next_id("det", state.detections.size());
    state.detections[id] = detection;
    return {{"detection", id}, {"dataset", dataset}, {"model", model}, {"category", detection.category},
            {"count", detection.count}};
  }
  if (tool == "summarize_detections") {
    const std::string id = s("detection");
    const Detection& d = require_detection(state, id);
    const Raster& r = state.loaded_rasters.at(d.dataset);
    std::ostringstream summary;
    summary << d.count << " " << d.category << " found by " << d.model << " over " << r.aoi << " (" << r.start
            << " to " << r.end << ", " << r.source << ")";
    return {{"detection", id}, {"category", d.category}, {"count", d.count}, {"summary", summary.str()}};
  }
  if (tool == "render_layer") {
    const std::string target = s("target");
    if (!state.loaded_rasters.count(target) && !state.detections.count(target)) {
      reject("unknown layer target '" + target + "'");
    }
    MapLayer layer{next_id("layer", state.map_layers.size()), target,
                   args.contains("title") ? s("title") : target, {}};
    state.map_layers.push_back(layer);
    return {{"layer", layer.id}, {"target", target}, {"title", layer.title}};
  }
  if (tool == "annotate") {
    const std::string id = s("layer");
    auto it = std::find_if(state.map_layers.begin(), state.map_layers.end(),
                           [&](const MapLayer& l) { return l.id == id; });
    if (it == state.map_layers.end()) reject("unknown layer '" + id + "'");
    it->annotations.push_back(s("text"));
    return {{"layer", id}, {"annotations", static_cast<std::int64_t>(it->annotations.size())}};
  }
  if (tool == "count_objects") {
    const std::string id = s("detection");
    const Detection& d = require_detection(state, id);
    if (args.contains("category") && s("category") != d.category) {
      reject("detection '" + id + "' holds category '" + d.category + "', not '" + s("category") + "'");
    }
    const std::string metric = "count:" + id;
    state.analytics[metric] = static_cast<double>(d.count);
    return {{"metric", metric}, {"value", d.count}};
  }
  if (tool == "area_stats") {
    const std::string dataset = s("dataset");
    const Raster& raster = require_dataset(state, dataset);
    const std::string category = s("category");
    const auto h = content_hash(seed, tool, {{"raster", raster_json(raster)}, {"category", category}});
    const double area = static_cast<double>(h % 100000) / 100.0;
    const std::string metric = "area:" + dataset + ":" + category;
    state.analytics[metric] = area;
    return {{"metric", metric}, {"value", area}, {"unit", "km2"}};
  }
  throw CallFailed(ToolErrorKind::kUnknownTool, "no simulator for tool '" + tool + "'");
}

// wrong_result faults shift every count-like field by a fixed offset.
void perturb(Json& result, EnvState& state) {
  constexpr std::int64_t kShift = 7;
  if (result.contains("count") && result["count"].is_number_integer()) {
    result["count"] = result["count"].get<std::int64_t>() + kShift;
    if (result.contains("detection")) {
      auto it = state.detections.find(result["detection"].get<std::string>());
      if (it != state.detections.end() && result.contains("model")) it->second.count += kShift;
    }
  }
  if (result.contains("value") && result["value"].is_number() && result.contains("metric")) {
    const double v = result["value"].get<double>() + kShift;
    result["value"] = v;
    state.analytics[result["metric"].get<std::string>()] = v;
  }
  if (result.contains("scenes") && result["scenes"].is_number_integer()) {
    result["scenes"] = result["scenes"].get<std::int64_t>() + kShift;
  }
}

bool compare(const Json& actual, const std::string& op, const Json& expected) {
  if (op == "exists") return true;
  if (op == "==") {
    if (actual.is_number() && expected.is_number()) return actual.get<double>() == expected.get<double>();
    return actual == expected;
  }
  if (op == "!=") return !compare(actual, "==", expected);
  if (op == "contains") {
    return actual.is_string() && expected.is_string() &&
           actual.get<std::string>().find(expected.get<std::string>()) != std::string::npos;
  }
  if (actual.is_number() && expected.is_number()) {
    const double a = actual.get<double>();
    const double b = expected.get<double>();
    if (op == "<") return a < b;
    if (op == "<=") return a <= b;
    if (op == ">") return a > b;
    if (op == ">=") return a >= b;
  } else if (actual.is_string() && expected.is_string()) {
    const auto& a = actual.get_ref<const std::string&>();
    const auto& b = expected.get_ref<const std::string&>();
    if (op == "<") return a < b;
    if (op == "<=") return a <= b;
    if (op == ">") return a > b;
    if (op == ">=") return a >= b;
  }
  return false;
}

const std::set<std::string>& known_ops() {
  static const std::set<std::string> ops = {"==", "!=", "<", "<=", ">", ">=", "exists", "contains"};
  return ops;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

const ToolSchema* AgentSpec::tool(std::string_view tool_name) const {
  for (const auto& t : tools) {
    if (t.name == tool_name) return &t;
  }
  return nullptr;
}

AgentCatalog::AgentCatalog(std::vector<AgentSpec> agents) : agents_(std::move(agents)) {
  std::set<std::string> seen;
  for (const auto& a : agents_) {
    if (!seen.insert(a.name).second) throw std::invalid_argument("duplicate agent '" + a.name + "'");
    std::set<std::string> tools;
    for (const auto& t : a.tools) {
      if (!tools.insert(t.name).second) {
        throw std::invalid_argument("duplicate tool '" + t.name + "' in agent '" + a.name + "'");
      }
    }
  }
}

const AgentSpec* AgentCatalog::find(std::string_view name) const {
  for (const auto& a : agents_) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

const AgentSpec* AgentCatalog::owner_of(std::string_view tool_name) const {
  for (const auto& a : agents_) {
    if (a.tool(tool_name) != nullptr) return &a;
  }
  return nullptr;
}

std::set<std::string> AgentCatalog::names() const {
  std::set<std::string> out;
  for (const auto& a : agents_) out.insert(a.name);
  return out;
}

std::vector<ToolSchema> AgentCatalog::all_tools() const {
  std::vector<ToolSchema> out;
  for (const auto& a : agents_) out.insert(out.end(), a.tools.begin(), a.tools.end());
  return out;
}

std::string AgentCatalog::prompt_block() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& a : agents_) {
    if (!first) out << "\n";
    first = false;
    out << "- " << a.name << ": " << a.description << "\n  APIs:";
    for (const auto& t : a.tools) {
      out << "\n    " << t.name << "(";
      for (std::size_t i = 0; i < t.params.size(); ++i) {
        const auto& p = t.params[i];
        out << (i ? ", " : "") << p.name << (p.required ? "" : "?");
        if (!p.enum_values.empty()) {
          out << " in {";
          for (std::size_t k = 0; k < p.enum_values.size(); ++k) out << (k ? ", " : "") << p.enum_values[k];
          out << "}";
        }
      }
      out << "): " << t.description;
    }
  }
  return out.str();
}

Json AgentCatalog::to_json() const {
  Json agents = Json::array();
  for (const auto& a : agents_) {
    Json tools = Json::array();
    for (const auto& t : a.tools) tools.push_back(t.to_openai()["function"]);
    agents.push_back({{"name", a.name}, {"description", a.description}, {"tools", tools}});
  }
  return {{"agents", agents}};
}

AgentCatalog catalog_default() {
  const std::vector<std::string> sources = {"EO", "SAR"};
  std::vector<AgentSpec> agents;
  agents.push_back(
      {"database_agent",
       "APIs fetching satellite images and searching the imagery catalog.",
       {{"load_satellite_imagery",
         "Load satellite imagery over an area of interest for a date range from one data source. "
         "Returns a dataset id.",
         {str("aoi", "Area-of-interest region id."), date("start", "First day, YYYY-MM-DD."),
          date("end", "Last day, YYYY-MM-DD."), choice("source", "Imagery source.", sources)}},
        {"query_catalog",
         "Count the scenes available over an area of interest for a date range.",
         {str("aoi", "Area-of-interest region id."), date("start", "First day, YYYY-MM-DD."),
          date("end", "Last day, YYYY-MM-DD."), choice("source", "Restrict to one source.", sources, false)}}}});
  agents.push_back(
      {"vision_agent",
       "Satellite vision APIs: object detectors and land-cover classification over loaded datasets.",
       {{"run_detector",
         "Run a vision model over a loaded dataset. swin-l-eo needs EO imagery, swin-l-sar needs SAR imagery, "
         "landcover-cls classifies land cover on either. Returns a detection id and object count.",
         {str("dataset", "Dataset id returned by load_satellite_imagery."),
          choice("model", "Vision model.", {"swin-l-eo", "swin-l-sar", "landcover-cls"}),
          str("category", "Object or land-cover class to report.")}},
        {"summarize_detections",
         "Summarize a detection result in one sentence.",
         {str("detection", "Detection id returned by run_detector.")}}}});
  agents.push_back(
      {"map_agent",
       "Mapping APIs that render datasets or detections as map layers and annotate them.",
       {{"render_layer",
         "Render a dataset or detection as a new map layer. Returns a layer id.",
         {str("target", "Dataset or detection id."), str("title", "Layer title.", false)}},
        {"annotate",
         "Attach a text annotation to an existing map layer.",
         {str("layer", "Layer id returned by render_layer."), str("text", "Annotation text.")}}}});
  agents.push_back(
      {"analytics_agent",
       "Analytics APIs computing statistics over detections and datasets.",
       {{"count_objects",
         "Record the object count of a detection as an analytics metric.",
         {str("detection", "Detection id returned by run_detector."),
          str("category", "Expected class of the detection.", false)}},
        {"area_stats",
         "Estimate the area in square kilometres covered by a class within a dataset.",
         {str("dataset", "Dataset id returned by load_satellite_imagery."),
          str("category", "Land-cover class.")}}}});
  return AgentCatalog(std::move(agents));
}

Json EnvState::to_json() const {
  Json rasters = Json::object();
  for (const auto& [id, r] : loaded_rasters) rasters[id] = raster_json(r);
  Json detections_json = Json::object();
  for (const auto& [id, d] : detections) {
    detections_json[id] = {{"dataset", d.dataset}, {"model", d.model}, {"category", d.category}, {"count", d.count}};
  }
  Json layers = Json::array();
  for (const auto& l : map_layers) {
    layers.push_back({{"id", l.id}, {"target", l.target}, {"title", l.title}, {"annotations", l.annotations}});
  }
  Json metrics = Json::object();
  for (const auto& [k, v] : analytics) metrics[k] = v;
  return {{"loaded_rasters", rasters}, {"detections", detections_json}, {"map_layers", layers}, {"analytics", metrics}};
}

EnvState EnvState::from_json(const Json& json) {
  EnvState state;
  for (const auto& [id, r] : json.at("loaded_rasters").items()) {
    state.loaded_rasters[id] = {r.at("aoi"), r.at("start"), r.at("end"), r.at("source")};
  }
  for (const auto& [id, d] : json.at("detections").items()) {
    state.detections[id] = {d.at("dataset"), d.at("model"), d.at("category"), d.at("count").get<std::int64_t>()};
  }
  for (const auto& l : json.at("map_layers")) {
    state.map_layers.push_back({l.at("id"), l.at("target"), l.at("title"),
                                l.at("annotations").get<std::vector<std::string>>()});
  }
  for (const auto& [k, v] : json.at("analytics").items()) state.analytics[k] = v.get<double>();
  return state;
}

std::uint64_t EnvState::fingerprint() const { return fnv1a64(to_json().dump()); }

std::string_view to_string(ToolErrorKind kind) {
  switch (kind) {
    case ToolErrorKind::kUnknownTool: return "UnknownTool";
    case ToolErrorKind::kSchemaViolation: return "SchemaViolation";
    case ToolErrorKind::kInjectedFault: return "InjectedFault";
  }
  return "UnknownTool";
}

Json ToolCallRecord::to_json() const {
  Json out = {{"seq", seq},
              {"agent", agent},
              {"tool", tool},
              {"arguments", arguments},
              {"result", result},
              {"usage", aov::to_json(usage_attribution)}};
  if (error) out["error"] = {{"kind", std::string(aov::to_string(error->kind))}, {"message", error->message}};
  if (perturbed) out["perturbed"] = true;
  return out;
}

ToolCallRecord ToolCallRecord::from_json(const Json& json) {
  ToolCallRecord r;
  r.seq = json.at("seq").get<std::int64_t>();
  r.agent = json.at("agent");
  r.tool = json.at("tool");
  r.arguments = json.at("arguments");
  r.result = json.value("result", Json());
  r.usage_attribution = usage_from_json(json.value("usage", Json::object()));
  r.perturbed = json.value("perturbed", false);
  if (json.contains("error")) {
    const std::string kind = json.at("error").at("kind");
    ToolErrorKind k = ToolErrorKind::kUnknownTool;
    if (kind == "SchemaViolation") k = ToolErrorKind::kSchemaViolation;
    if (kind == "InjectedFault") k = ToolErrorKind::kInjectedFault;
    r.error = ToolError{k, json.at("error").at("message")};
  }
  return r;
}

const FaultEntry* FaultPlan::match(std::string_view agent, std::string_view tool, int occurrence) const {
  for (const auto& e : entries) {
    if (e.agent == agent && e.tool == tool && e.occurrence == occurrence) return &e;
  }
  return nullptr;
}

Json FaultPlan::to_json() const {
  Json out = Json::array();
  for (const auto& e : entries) {
    Json entry = {{"agent", e.agent}, {"tool", e.tool}, {"occurrence", e.occurrence}};
    switch (e.effect) {
      case FaultEffect::kError: entry["effect"] = "error"; entry["message"] = e.message; break;
      case FaultEffect::kWrongResult: entry["effect"] = "wrong_result"; break;
      case FaultEffect::kDelay: entry["effect"] = "delay"; entry["delay_ms"] = e.delay_ms; break;
    }
    out.push_back(std::move(entry));
  }
  return {{"entries", out}};
}

FaultPlan FaultPlan::from_json(const Json& json) try {
  const Json& list = json.is_array() ? json : json.at("entries");
  FaultPlan plan;
  for (const auto& e : list) {
    FaultEntry entry;
    entry.agent = e.at("agent").get<std::string>();
    entry.tool = e.at("tool").get<std::string>();
    entry.occurrence = e.value("occurrence", 1);
    if (entry.occurrence < 1) throw std::invalid_argument("fault occurrence must be >= 1");
    const std::string effect = e.value("effect", "error");
    if (effect == "error") {
      entry.effect = FaultEffect::kError;
      entry.message = e.value("message", "injected fault");
    } else if (effect == "wrong_result") {
      entry.effect = FaultEffect::kWrongResult;
    } else if (effect == "delay") {
      entry.effect = FaultEffect::kDelay;
      entry.delay_ms = e.value("delay_ms", 10);
    } else {
      throw std::invalid_argument("unknown fault effect '" + effect + "'");
    }
    plan.entries.push_back(std::move(entry));
  }
  return plan;
} catch (const Json::exception& e) {
  throw std::invalid_argument(std::string("malformed fault plan: ") + e.what());
}

std::optional<std::string> normalize_date(std::string_view raw) {
  const std::string text = trim(raw);
  std::string y, m, d;
  if (text.size() == 8 && all_digits(text)) {
    y = text.substr(0, 4);
    m = text.substr(4, 2);
    d = text.substr(6, 2);
  } else {
    std::vector<std::string> parts;
    std::string cur;
    char sep = '\0';
    for (char c : text) {
      if (c == '-' || c == '/' || c == '.') {
        if (sep != '\0' && c != sep) return std::nullopt;
        sep = c;
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    parts.push_back(cur);
    if (parts.size() < 2 || parts.size() > 3) return std::nullopt;
    y = parts[0];
    m = parts[1];
    d = parts.size() == 3 ? parts[2] : "1";
  }
  if (y.size() != 4 || !all_digits(y) || !all_digits(m) || !all_digits(d) || m.size() > 2 || d.size() > 2) {
    return std::nullopt;
  }
  const int year = std::stoi(y);
  const int month = std::stoi(m);
  const int day = std::stoi(d);
  if (month < 1 || month > 12 || day < 1 || day > days_in_month(year, month)) return std::nullopt;
  return y + "-" + pad2(month) + "-" + pad2(day);
}

Json canonicalize_arguments(const ToolSchema& schema, const Json& arguments) {
  if (!arguments.is_object()) throw SchemaViolationError(schema.name + ": arguments must be an object");
  Json out = Json::object();
  for (const auto& [raw_key, value] : arguments.items()) {
    const std::string key = lower(trim(raw_key));
    const ParamSpec* p = schema.param(key);
    if (p == nullptr) throw SchemaViolationError(schema.name + ": unexpected argument '" + raw_key + "'");
    if (out.contains(key)) throw SchemaViolationError(schema.name + ": argument '" + key + "' given twice");
    switch (p->type) {
      case ParamType::kString: {
        if (!value.is_string()) throw SchemaViolationError(schema.name + ": '" + key + "' must be a string");
        std::string v = trim(value.get<std::string>());
        if (!p->enum_values.empty()) {
          auto it = std::find_if(p->enum_values.begin(), p->enum_values.end(),
                                 [&](const std::string& e) { return lower(e) == lower(v); });
          if (it == p->enum_values.end()) {
            throw SchemaViolationError(schema.name + ": '" + key + "' must be one of the declared values, got '" +
                                       v + "'");
          }
          v = *it;
        }
        if (v.empty()) throw SchemaViolationError(schema.name + ": '" + key + "' must not be empty");
        out[key] = v;
        break;
      }
      case ParamType::kDate: {
        if (!value.is_string()) throw SchemaViolationError(schema.name + ": '" + key + "' must be a date string");
        auto normalized = normalize_date(value.get<std::string>());
        if (!normalized) {
          throw SchemaViolationError(schema.name + ": '" + key + "' is not a valid date: " + value.dump());
        }
        out[key] = *normalized;
        break;
      }
      case ParamType::kInteger:
        if (!value.is_number_integer()) throw SchemaViolationError(schema.name + ": '" + key + "' must be an integer");
        out[key] = value;
        break;
      case ParamType::kNumber:
        if (!value.is_number()) throw SchemaViolationError(schema.name + ": '" + key + "' must be a number");
        out[key] = value;
        break;
      case ParamType::kBoolean:
        if (!value.is_boolean()) throw SchemaViolationError(schema.name + ": '" + key + "' must be a boolean");
        out[key] = value;
        break;
    }
  }
  for (const auto& p : schema.params) {
    if (p.required && !out.contains(p.name)) {
      throw SchemaViolationError(schema.name + ": missing required argument '" + p.name + "'");
    }
  }
  return out;
}

InvokeOutcome invoke(const EnvState& state, const AgentCatalog& catalog, const std::string& agent,
                     const std::string& tool, const Json& arguments, const FaultPlan& faults, int occurrence,
                     std::int64_t seq, std::uint64_t seed, Usage attribution) {
  InvokeOutcome out{Json(), state, {}};
  out.record.seq = seq;
  out.record.agent = agent;
  out.record.tool = tool;
  out.record.arguments = arguments.is_object() ? arguments : Json::object();
  out.record.usage_attribution = attribution;

  auto fail = [&](ToolErrorKind kind, std::string message) {
    out.state = state;
    out.result = {{"error", std::string(to_string(kind))}, {"message", message}};
    out.record.result = out.result;
    out.record.error = ToolError{kind, std::move(message)};
    return out;
  };

  const AgentSpec* spec = catalog.find(agent);
  if (spec == nullptr) return fail(ToolErrorKind::kUnknownTool, "unknown agent '" + agent + "'");
  const ToolSchema* schema = spec->tool(tool);
  if (schema == nullptr) {
    return fail(ToolErrorKind::kUnknownTool, "agent '" + agent + "' has no API named '" + tool + "'");
  }
  Json canonical;
  try {
    canonical = canonicalize_arguments(*schema, arguments);
  } catch (const SchemaViolationError& e) {
    return fail(ToolErrorKind::kSchemaViolation, e.what());
  }
  out.record.arguments = canonical;

  const FaultEntry* fault = faults.match(agent, tool, occurrence);
  if (fault != nullptr && fault->effect == FaultEffect::kError) {
    return fail(ToolErrorKind::kInjectedFault, fault->message);
  }
  if (fault != nullptr && fault->effect == FaultEffect::kDelay) {
    std::this_thread::sleep_for(std::chrono::milliseconds(fault->delay_ms));
  }

  try {
    out.result = execute(out.state, tool, canonical, seed);
  } catch (const CallFailed& e) {
    return fail(e.kind(), e.what());
  }
  if (fault != nullptr && fault->effect == FaultEffect::kWrongResult) {
    perturb(out.result, out.state);
    out.record.perturbed = true;
  }
  out.record.result = out.result;
  return out;
}

Environment::Environment(AgentCatalog catalog, FaultPlan faults, std::uint64_t seed, EnvState initial)
    : catalog_(std::move(catalog)), faults_(std::move(faults)), seed_(seed), state_(std::move(initial)) {}

const ToolCallRecord& Environment::call(const std::string& agent, const std::string& tool, const Json& arguments,
                                        Usage attribution) {
  const int occurrence = ++occurrences_[{agent, tool}];
  auto outcome = invoke(state_, catalog_, agent, tool, arguments, faults_, occurrence,
                        static_cast<std::int64_t>(trace_.size()) + 1, seed_, attribution);
  state_ = std::move(outcome.state);
  trace_.push_back(std::move(outcome.record));
  return trace_.back();
}

Json Assertion::to_json() const {
  Json out = {{"path", path}, {"op", op}};
  if (!value.is_null()) out["value"] = value;
  if (min_count != 1) out["min_count"] = min_count;
  return out;
}

Assertion Assertion::from_json(const Json& json) {
  Assertion a;
  a.path = json.at("path").get<std::string>();
  a.op = json.value("op", "exists");
  a.value = json.value("value", Json());
  a.min_count = json.value("min_count", 1);
  if (!known_ops().count(a.op)) throw BadAssertionPath("unknown comparator '" + a.op + "'");
  if (a.min_count < 1) throw BadAssertionPath("min_count must be >= 1");
  if (a.op != "exists" && a.value.is_null()) throw BadAssertionPath("comparator '" + a.op + "' needs a value");
  return a;
}

std::string Assertion::describe() const {
  std::string out = path + " " + op;
  if (op != "exists") out += " " + value.dump();
  if (min_count != 1) out += " (at least " + std::to_string(min_count) + ")";
  return out;
}

std::vector<Json> resolve_path(const Json& root, std::string_view path) {
  static const std::set<std::string> kRoots = {"loaded_rasters", "detections", "map_layers", "analytics"};
  if (path.empty()) throw BadAssertionPath("empty assertion path");

  struct Step {
    std::string key;
    std::vector<std::string> selectors;  // "*" or an index
  };
  std::vector<Step> steps;
  std::size_t i = 0;
  while (i <= path.size()) {
    const auto dot = path.find('.', i);
    const std::string_view segment = path.substr(i, dot == std::string_view::npos ? std::string_view::npos : dot - i);
    if (segment.empty()) throw BadAssertionPath("empty segment in path '" + std::string(path) + "'");
    Step step;
    const auto bracket = segment.find('[');
    step.key = std::string(segment.substr(0, bracket));
    if (step.key.empty()) throw BadAssertionPath("missing key before '[' in '" + std::string(path) + "'");
    std::size_t b = bracket;
    while (b != std::string_view::npos && b < segment.size()) {
      if (segment[b] != '[') throw BadAssertionPath("malformed selector in '" + std::string(path) + "'");
      const auto close = segment.find(']', b);
      if (close == std::string_view::npos) throw BadAssertionPath("unclosed '[' in '" + std::string(path) + "'");
      const std::string sel(segment.substr(b + 1, close - b - 1));
      if (sel != "*" && !all_digits(sel)) {
        throw BadAssertionPath("selector must be * or an index in '" + std::string(path) + "'");
      }
      step.selectors.push_back(sel);
      b = close + 1;
    }
    steps.push_back(std::move(step));
    if (dot == std::string_view::npos) break;
    i = dot + 1;
  }
  if (!kRoots.count(steps.front().key)) {
    throw BadAssertionPath("path must start with a state field, got '" + steps.front().key + "'");
  }

  std::vector<Json> current{root};
  for (const auto& step : steps) {
    std::vector<Json> next;
    for (const auto& node : current) {
      if (node.is_object() && node.contains(step.key)) next.push_back(node.at(step.key));
    }
    for (const auto& sel : step.selectors) {
      std::vector<Json> expanded;
      for (const auto& node : next) {
        if (sel == "*") {
          if (node.is_object() || node.is_array()) {
            for (const auto& child : node) expanded.push_back(child);
          }
        } else if (node.is_array()) {
          const std::size_t idx = std::stoul(sel);
          if (idx < node.size()) expanded.push_back(node.at(idx));
        }
      }
      next = std::move(expanded);
    }
    current = std::move(next);
  }
  return current;
}

AssertionOutcome assert_final_state(const EnvState& state, std::span<const Assertion> assertions) {
  AssertionOutcome outcome;
  if (assertions.empty()) return outcome;
  const Json root = state.to_json();
  for (const auto& a : assertions) {
    if (!known_ops().count(a.op)) throw BadAssertionPath("unknown comparator '" + a.op + "'");
    const auto values = resolve_path(root, a.path);
    const auto matched = std::count_if(values.begin(), values.end(),
                                       [&](const Json& v) { return compare(v, a.op, a.value); });
    if (matched < a.min_count) {
      outcome.ok = false;
      outcome.failures.push_back(a.describe() + ": " + std::to_string(matched) + " of " +
                                 std::to_string(values.size()) + " values matched");
    }
  }
  return outcome;
}

}  // namespace aov
