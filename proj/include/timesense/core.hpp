#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace timesense {

using json = nlohmann::json;

// Shortest decimal rendering that parses back to the identical double.
inline std::string fmt_num(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  (void)ec;
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// MultiSeries: channel-major D x L real matrix.

struct MultiSeries {
  std::vector<std::vector<double>> values;  // D rows of L entries
  std::vector<std::string> channel_names;   // D names
  int length = 0;                           // L

  int channels() const { return static_cast<int>(values.size()); }
};

struct Validation {
  bool ok = true;
  std::string message;
  explicit operator bool() const { return ok; }
};

inline Validation validate_series(const MultiSeries& s) {
  const int d = static_cast<int>(s.values.size());
  if (d < 1) return {false, "dimension mismatch: no channels"};
  if (s.length < 1) return {false, "dimension mismatch: non-positive length"};
  if (static_cast<int>(s.channel_names.size()) != d)
    return {false, "dimension mismatch: " + std::to_string(s.channel_names.size()) +
                       " names for " + std::to_string(d) + " channels"};
  for (int c = 0; c < d; ++c) {
    if (static_cast<int>(s.values[c].size()) != s.length)
      return {false, "dimension mismatch: channel " + std::to_string(c) + " has " +
                         std::to_string(s.values[c].size()) + " steps, expected " +
                         std::to_string(s.length)};
    for (int t = 0; t < s.length; ++t) {
      if (!std::isfinite(s.values[c][t]))
        return {false, "non-finite value at channel " + std::to_string(c) +
                           ", step " + std::to_string(t)};
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// FeatureEvent: one structured generator event. Point events (change_point,
// spike) use end == start + 1. The trend family of a segment_trend event is
// implied by its param keys: slope -> linear, level -> constant,
// amplitude/period/phase -> oscillatory.

enum class EventKind { change_point, segment_trend, spike };

inline std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::change_point: return "change_point";
    case EventKind::segment_trend: return "segment_trend";
    case EventKind::spike: return "spike";
  }
  throw std::invalid_argument("unknown event kind");
}

inline EventKind event_kind_from_string(const std::string& s) {
  if (s == "change_point") return EventKind::change_point;
  if (s == "segment_trend") return EventKind::segment_trend;
  if (s == "spike") return EventKind::spike;
  throw std::invalid_argument("unknown event kind: " + s);
}

struct FeatureEvent {
  EventKind kind = EventKind::change_point;
  int channel = 0;
  int start = 0;  // step index for point events, span start otherwise
  int end = 1;    // exclusive
  std::map<std::string, double> params;

  int pos() const { return start; }
  double param(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end())
      throw std::invalid_argument("missing event param: " + key);
    return it->second;
  }
  bool has(const std::string& key) const { return params.count(key) > 0; }

  bool operator==(const FeatureEvent&) const = default;
};

inline Validation validate_event(const FeatureEvent& e, int d, int l) {
  if (e.channel < 0 || e.channel >= d)
    return {false, "event channel out of range"};
  if (e.start < 0 || e.end > l || e.start >= e.end)
    return {false, "event span out of range"};
  switch (e.kind) {
    case EventKind::change_point:
      break;
    case EventKind::spike:
      if (!e.has("height") || !e.has("direction"))
        return {false, "spike event requires height and direction"};
      break;
    case EventKind::segment_trend: {
      const bool linear = e.has("slope");
      const bool constant = e.has("level");
      const bool osc = e.has("amplitude") && e.has("period");
      if (!e.has("start_value") || (!linear && !constant && !osc))
        return {false, "segment_trend event requires a trend param set"};
      break;
    }
  }
  return {};
}

struct SegmentAnnotation {
  int start = 0;
  int end = 0;  // exclusive
  std::string text;
  std::vector<int> events;  // indices into the feature array

  bool operator==(const SegmentAnnotation&) const = default;
};

// ---------------------------------------------------------------------------
// QARecord and structured answers.

enum class TaskCategory { atomic, molecular, compositional };

enum class TaskKind {
  change_point,
  extreme,
  spike,
  trend,
  value_at_index,
  segment,
  comparison,
  relative,
  describe,
  rca,
  anomaly_detection,
};

inline std::string to_string(TaskCategory c) {
  switch (c) {
    case TaskCategory::atomic: return "atomic";
    case TaskCategory::molecular: return "molecular";
    case TaskCategory::compositional: return "compositional";
  }
  throw std::invalid_argument("unknown category");
}

inline TaskCategory category_from_string(const std::string& s) {
  if (s == "atomic") return TaskCategory::atomic;
  if (s == "molecular") return TaskCategory::molecular;
  if (s == "compositional") return TaskCategory::compositional;
  throw std::invalid_argument("unknown category: " + s);
}

inline std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::change_point: return "change_point";
    case TaskKind::extreme: return "extreme";
    case TaskKind::spike: return "spike";
    case TaskKind::trend: return "trend";
    case TaskKind::value_at_index: return "value_at_index";
    case TaskKind::segment: return "segment";
    case TaskKind::comparison: return "comparison";
    case TaskKind::relative: return "relative";
    case TaskKind::describe: return "describe";
    case TaskKind::rca: return "rca";
    case TaskKind::anomaly_detection: return "anomaly_detection";
  }
  throw std::invalid_argument("unknown task");
}

inline TaskKind task_from_string(const std::string& s) {
  static const std::map<std::string, TaskKind> m = {
      {"change_point", TaskKind::change_point},
      {"extreme", TaskKind::extreme},
      {"spike", TaskKind::spike},
      {"trend", TaskKind::trend},
      {"value_at_index", TaskKind::value_at_index},
      {"segment", TaskKind::segment},
      {"comparison", TaskKind::comparison},
      {"relative", TaskKind::relative},
      {"describe", TaskKind::describe},
      {"rca", TaskKind::rca},
      {"anomaly_detection", TaskKind::anomaly_detection},
  };
  auto it = m.find(s);
  if (it == m.end()) throw std::invalid_argument("unknown task: " + s);
  return it->second;
}

inline TaskCategory category_of(TaskKind t) {
  switch (t) {
    case TaskKind::change_point:
    case TaskKind::extreme:
    case TaskKind::spike:
    case TaskKind::trend:
    case TaskKind::value_at_index:
      return TaskCategory::atomic;
    case TaskKind::segment:
    case TaskKind::comparison:
    case TaskKind::relative:
      return TaskCategory::molecular;
    case TaskKind::describe:
    case TaskKind::rca:
    case TaskKind::anomaly_detection:
      return TaskCategory::compositional;
  }
  throw std::invalid_argument("unknown task");
}

// One structured answer feature: a named bag of numeric/string attributes.
using AttrValue = std::variant<double, std::string>;

struct AnswerFeature {
  std::string name;
  std::map<std::string, AttrValue> attrs;

  AnswerFeature() = default;
  AnswerFeature(std::string n) : name(std::move(n)) {}

  AnswerFeature& set(const std::string& key, double v) {
    attrs[key] = v;
    return *this;
  }
  AnswerFeature& set(const std::string& key, const std::string& v) {
    attrs[key] = v;
    return *this;
  }
  AnswerFeature& set(const std::string& key, const char* v) {
    attrs[key] = std::string(v);
    return *this;
  }

  bool operator==(const AnswerFeature&) const = default;
};

struct QARecord {
  std::string id;
  TaskCategory category = TaskCategory::atomic;
  TaskKind task = TaskKind::trend;
  std::string variant = "uni";  // uni | multi
  std::string question;         // contains "<ts:k>" placeholders
  std::vector<MultiSeries> series;
  std::string answer_text;
  std::vector<AnswerFeature> answer_features;
  std::vector<std::string> choices;  // MCQA variant, empty otherwise
  json meta = json::object();        // features, tolerances, seeds
};

struct LossBreakdown {
  double total = 0.0;
  double txt = 0.0;
  double ts_time = 0.0;
  double ts_freq = 0.0;
};

// ---------------------------------------------------------------------------
// JSON conversions.

inline json to_json(const MultiSeries& s) {
  return json{{"channel_names", s.channel_names},
              {"length", s.length},
              {"values", s.values}};
}

inline MultiSeries series_from_json(const json& j) {
  MultiSeries s;
  s.channel_names = j.at("channel_names").get<std::vector<std::string>>();
  s.length = j.at("length").get<int>();
  s.values = j.at("values").get<std::vector<std::vector<double>>>();
  return s;
}

inline json to_json(const FeatureEvent& e) {
  return json{{"kind", to_string(e.kind)},
              {"channel", e.channel},
              {"start", e.start},
              {"end", e.end},
              {"params", e.params}};
}

inline FeatureEvent event_from_json(const json& j) {
  FeatureEvent e;
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  e.channel = j.at("channel").get<int>();
  e.start = j.at("start").get<int>();
  e.end = j.at("end").get<int>();
  e.params = j.at("params").get<std::map<std::string, double>>();
  return e;
}

inline json to_json(const AnswerFeature& f) {
  json attrs = json::object();
  for (const auto& [k, v] : f.attrs) {
    if (std::holds_alternative<double>(v))
      attrs[k] = std::get<double>(v);
    else
      attrs[k] = std::get<std::string>(v);
  }
  return json{{"name", f.name}, {"attrs", attrs}};
}

inline AnswerFeature feature_from_json(const json& j) {
  AnswerFeature f;
  f.name = j.at("name").get<std::string>();
  for (const auto& [k, v] : j.at("attrs").items()) {
    if (v.is_string())
      f.attrs[k] = v.get<std::string>();
    else
      f.attrs[k] = v.get<double>();
  }
  return f;
}

inline json to_json(const QARecord& r) {
  json series = json::array();
  for (const auto& s : r.series) series.push_back(to_json(s));
  json feats = json::array();
  for (const auto& f : r.answer_features) feats.push_back(to_json(f));
  json j{{"id", r.id},
         {"category", to_string(r.category)},
         {"task", to_string(r.task)},
         {"variant", r.variant},
         {"question", r.question},
         {"series", series},
         {"answer_text", r.answer_text},
         {"answer_features", feats}};
  if (!r.choices.empty()) j["choices"] = r.choices;
  if (!r.meta.empty()) j["meta"] = r.meta;
  return j;
}

inline QARecord record_from_json(const json& j) {
  QARecord r;
  r.id = j.at("id").get<std::string>();
  r.category = category_from_string(j.at("category").get<std::string>());
  r.task = task_from_string(j.at("task").get<std::string>());
  r.variant = j.at("variant").get<std::string>();
  r.question = j.at("question").get<std::string>();
  for (const auto& s : j.at("series")) r.series.push_back(series_from_json(s));
  r.answer_text = j.at("answer_text").get<std::string>();
  for (const auto& f : j.at("answer_features"))
    r.answer_features.push_back(feature_from_json(f));
  if (j.contains("choices"))
    r.choices = j.at("choices").get<std::vector<std::string>>();
  if (j.contains("meta")) r.meta = j.at("meta");
  return r;
}

// ---------------------------------------------------------------------------
// JSON-lines dataset I/O. One record per line; nlohmann renders doubles with
// shortest exact decimals, so read(write(x)) == x field-for-field.

inline std::size_t write_records(const std::string& path,
                                 const std::vector<QARecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& r : records) {
    out << to_json(r).dump() << "\n";
    if (!out) throw std::runtime_error("write failure: " + path);
  }
  return records.size();
}

inline std::vector<QARecord> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::vector<QARecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("malformed line " + std::to_string(lineno) +
                               " in " + path + ": " + e.what());
    }
  }
  return records;
}

}  // namespace timesense
