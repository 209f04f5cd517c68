#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "timesense/chrongen.hpp"
#include "timesense/core.hpp"
#include "timesense/rng.hpp"

namespace timesense::taskgen {

struct TaskSpec {
  TaskKind task = TaskKind::trend;
  std::string variant = "uni";  // uni | multi
  int count = 1;
  int length_min = 48;
  int length_max = 128;
  int channels_min = 2;
  int channels_max = 3;
  bool mcqa = false;
};

inline Validation validate_spec(const TaskSpec& s) {
  if (s.count < 1) return {false, "count must be >= 1"};
  if (s.length_min < 4 || s.length_max < s.length_min)
    return {false, "empty or too-small length range"};
  if (s.variant != "uni" && s.variant != "multi")
    return {false, "variant must be uni or multi"};
  if (s.variant == "multi" && s.channels_min < 2)
    return {false, "multi variant requires channels_range min >= 2"};
  if (s.channels_max < s.channels_min) return {false, "empty channels range"};
  return {};
}

// ---------------------------------------------------------------------------
// Trend classes.

inline std::string trend_class(const FeatureEvent& e) {
  if (e.has("slope")) {
    const double s = e.param("slope");
    if (s > 0.0) return "increasing";
    if (s < 0.0) return "decreasing";
    return "flat";
  }
  if (e.has("level")) return "flat";
  return "oscillating";
}

// Last segment_trend event per span, ordered by span start: the trend that
// actually survives in the emitted series.
inline std::vector<FeatureEvent> final_segments(
    const std::vector<FeatureEvent>& features, int channel) {
  std::map<std::pair<int, int>, FeatureEvent> by_span;
  for (const auto& e : features)
    if (e.kind == EventKind::segment_trend && e.channel == channel)
      by_span[{e.start, e.end}] = e;
  std::vector<FeatureEvent> out;
  for (auto& [span, e] : by_span) out.push_back(e);
  return out;
}

// ---------------------------------------------------------------------------
// Anomaly-detection rule grammar, embedded verbatim in questions.

struct AdRule {
  std::string kind;  // threshold | spike_polarity | slope_sign
  double threshold = 0.0;
  std::string direction;  // up | down (spike_polarity)

  std::string text() const {
    if (kind == "threshold")
      return "any step whose value exceeds " + fmt_num(threshold) + " is an anomaly";
    if (kind == "spike_polarity")
      return "any " + std::string(direction == "up" ? "upward" : "downward") +
             " spike is an anomaly";
    return "the start step of any segment with a decreasing trend is an anomaly";
  }
};

struct TaskQuery {
  int channel = 0;
  int index = 0;              // value_at_index
  std::string extreme = "max";
  AdRule rule;
};

inline json to_json(const TaskQuery& q) {
  return json{{"channel", q.channel},
              {"index", q.index},
              {"extreme", q.extreme},
              {"rule", {{"kind", q.rule.kind},
                        {"threshold", q.rule.threshold},
                        {"direction", q.rule.direction}}}};
}

inline TaskQuery query_from_json(const json& j) {
  TaskQuery q;
  q.channel = j.at("channel").get<int>();
  q.index = j.at("index").get<int>();
  q.extreme = j.at("extreme").get<std::string>();
  q.rule.kind = j.at("rule").at("kind").get<std::string>();
  q.rule.threshold = j.at("rule").at("threshold").get<double>();
  q.rule.direction = j.at("rule").at("direction").get<std::string>();
  return q;
}

// ---------------------------------------------------------------------------
// Structured answer derivation. The generator feature arrays are the ground
// truth; the series itself is consulted only where the task asks about raw
// values (extreme, value_at_index, threshold rules).

struct Answer {
  std::vector<AnswerFeature> features;
  std::string text;
};

namespace detail {

inline std::string join(const std::vector<std::string>& parts,
                        const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::string render_features(const std::vector<AnswerFeature>& feats) {
  if (feats.empty()) return "FEATURES: none";
  std::vector<std::string> parts;
  for (const auto& f : feats) {
    std::vector<std::string> kv;
    for (const auto& [k, v] : f.attrs) {
      if (std::holds_alternative<double>(v))
        kv.push_back(k + "=" + fmt_num(std::get<double>(v)));
      else
        kv.push_back(k + "=" + std::get<std::string>(v));
    }
    parts.push_back(f.name + "(" + join(kv, ",") + ")");
  }
  return "FEATURES: " + join(parts, "; ");
}

inline std::string steps_list(const std::vector<int>& steps) {
  std::vector<std::string> parts;
  for (int s : steps) parts.push_back(std::to_string(s));
  return join(parts, ", ");
}

}  // namespace detail

inline Answer derive_answer(
    TaskKind task, const std::vector<MultiSeries>& series,
    const std::vector<std::vector<FeatureEvent>>& features,
    const TaskQuery& query = {}) {
  if (series.empty() || features.size() != series.size())
    throw std::invalid_argument("derive_answer: series/features mismatch");
  const MultiSeries& s0 = series[0];
  const auto& f0 = features[0];
  const int ch = query.channel;
  if (ch < 0 || ch >= s0.channels())
    throw std::invalid_argument("derive_answer: channel out of range");
  Answer ans;
  std::string prose;

  switch (task) {
    case TaskKind::change_point: {
      std::vector<int> steps;
      for (const auto& e : f0)
        if (e.kind == EventKind::change_point && e.channel == ch) {
          steps.push_back(e.pos());
          ans.features.push_back(AnswerFeature("change_point")
                                     .set("pos", static_cast<double>(e.pos())));
        }
      if (steps.empty())
        throw std::invalid_argument("change_point task on a series without change points");
      prose = "The pattern changes at step" + std::string(steps.size() > 1 ? "s " : " ") +
              detail::steps_list(steps) + ".";
      break;
    }
    case TaskKind::extreme: {
      const auto& xs = s0.values[ch];
      int best = 0;
      for (int t = 1; t < s0.length; ++t) {
        if (query.extreme == "max" ? xs[t] > xs[best] : xs[t] < xs[best]) best = t;
      }
      ans.features.push_back(AnswerFeature("extreme")
                                 .set("mode", query.extreme)
                                 .set("step", static_cast<double>(best))
                                 .set("value", xs[best]));
      prose = "The " + std::string(query.extreme == "max" ? "maximum" : "minimum") +
              " value is " + fmt_num(xs[best]) + " at step " + std::to_string(best) + ".";
      break;
    }
    case TaskKind::spike: {
      std::vector<std::string> parts;
      for (const auto& e : f0)
        if (e.kind == EventKind::spike && e.channel == ch) {
          const std::string dir = e.param("direction") >= 0.0 ? "up" : "down";
          ans.features.push_back(AnswerFeature("spike")
                                     .set("pos", static_cast<double>(e.pos()))
                                     .set("direction", dir));
          parts.push_back(std::string(dir == "up" ? "an upward" : "a downward") +
                          " spike at step " + std::to_string(e.pos()));
        }
      if (ans.features.empty())
        throw std::invalid_argument("spike task on a spike-free series");
      prose = "There " + std::string(parts.size() > 1 ? "are " : "is ") +
              detail::join(parts, ", ") + ".";
      break;
    }
    case TaskKind::trend: {
      const auto segs = final_segments(f0, ch);
      if (segs.empty()) throw std::invalid_argument("trend task without segments");
      std::map<std::string, int> span_by_class;
      std::vector<std::string> order;
      for (const auto& e : segs) {
        const std::string cls = trend_class(e);
        if (!span_by_class.count(cls)) order.push_back(cls);
        span_by_class[cls] += e.end - e.start;
      }
      std::string best = order[0];
      for (const auto& cls : order)
        if (span_by_class[cls] > span_by_class[best]) best = cls;
      ans.features.push_back(AnswerFeature("trend").set("class", best));
      prose = "The overall trend is " + best + ".";
      break;
    }
    case TaskKind::value_at_index: {
      if (query.index < 0 || query.index >= s0.length)
        throw std::invalid_argument("value_at_index: index out of range");
      const double v = s0.values[ch][query.index];
      ans.features.push_back(AnswerFeature("value_at_index")
                                 .set("step", static_cast<double>(query.index))
                                 .set("value", v));
      prose = "The value at step " + std::to_string(query.index) + " is " + fmt_num(v) + ".";
      break;
    }
    case TaskKind::segment: {
      const auto segs = final_segments(f0, ch);
      std::vector<std::string> parts;
      for (const auto& e : segs) {
        const std::string cls = trend_class(e);
        ans.features.push_back(AnswerFeature("segment")
                                   .set("start", static_cast<double>(e.start))
                                   .set("end", static_cast<double>(e.end))
                                   .set("class", cls));
        parts.push_back(cls + " from step " + std::to_string(e.start) + " to step " +
                        std::to_string(e.end));
      }
      prose = "The series has " + std::to_string(segs.size()) + " segments: " +
              detail::join(parts, "; ") + ".";
      break;
    }
    case TaskKind::comparison: {
      if (series.size() < 2)
        throw std::invalid_argument("comparison task requires two series");
      const auto sa = final_segments(features[0], 0);
      const auto sb = final_segments(features[1], 0);
      if (sa.size() != sb.size())
        throw std::invalid_argument("comparison task requires aligned segments");
      std::vector<std::string> parts;
      for (std::size_t i = 0; i < sa.size(); ++i) {
        const std::string ca = trend_class(sa[i]);
        const std::string cb = trend_class(sb[i]);
        const std::string rel = ca == cb ? "same" : "different";
        ans.features.push_back(AnswerFeature("comparison")
                                   .set("start", static_cast<double>(sa[i].start))
                                   .set("end", static_cast<double>(sa[i].end))
                                   .set("first", ca)
                                   .set("second", cb)
                                   .set("relation", rel));
        parts.push_back("from step " + std::to_string(sa[i].start) + " to step " +
                        std::to_string(sa[i].end) + " the trends are " + rel +
                        " (" + ca + " vs " + cb + ")");
      }
      prose = "Comparing the two series: " + detail::join(parts, "; ") + ".";
      break;
    }
    case TaskKind::relative: {
      const auto segs = final_segments(f0, ch);
      if (segs.size() < 2)
        throw std::invalid_argument("relative task requires >= 2 segments");
      std::vector<std::string> parts;
      for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
        if (!segs[i].has("slope") || !segs[i + 1].has("slope"))
          throw std::invalid_argument("relative task requires linear trends");
        const double a = segs[i].param("slope");
        const double b = segs[i + 1].param("slope");
        std::string rel;
        if (a * b < 0.0) rel = "reversed";
        else rel = std::abs(b) > std::abs(a) ? "faster" : "slower";
        ans.features.push_back(AnswerFeature("relative")
                                   .set("pos", static_cast<double>(segs[i + 1].start))
                                   .set("relation", rel));
        parts.push_back("at step " + std::to_string(segs[i + 1].start) +
                        " the trend becomes " + rel);
      }
      prose = "Relative to each preceding trend: " + detail::join(parts, "; ") + ".";
      break;
    }
    case TaskKind::describe: {
      std::vector<std::pair<int, const FeatureEvent*>> ordered;
      for (const auto& e : f0)
        if (e.channel == ch) ordered.push_back({e.start, &e});
      std::stable_sort(ordered.begin(), ordered.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      std::vector<std::string> parts;
      for (const auto& [start, e] : ordered) {
        parts.push_back(chrongen::render_annotation(*e));
        AnswerFeature f(to_string(e->kind));
        switch (e->kind) {
          case EventKind::change_point:
            f.set("pos", static_cast<double>(e->pos()));
            break;
          case EventKind::spike:
            f.set("pos", static_cast<double>(e->pos()))
                .set("direction", e->param("direction") >= 0.0 ? "up" : "down");
            break;
          case EventKind::segment_trend:
            f.set("start", static_cast<double>(e->start))
                .set("end", static_cast<double>(e->end))
                .set("class", trend_class(*e));
            break;
        }
        ans.features.push_back(std::move(f));
      }
      prose = "The series evolves as follows: " + detail::join(parts, "; ") + ".";
      break;
    }
    case TaskKind::rca: {
      std::vector<const FeatureEvent*> anomalies;
      for (const auto& e : f0)
        if (e.kind == EventKind::spike && e.has("anomaly")) anomalies.push_back(&e);
      if (anomalies.empty())
        throw std::invalid_argument("rca task without injected anomalies");
      std::sort(anomalies.begin(), anomalies.end(), [](const auto* a, const auto* b) {
        return std::abs(a->param("height")) > std::abs(b->param("height"));
      });
      std::vector<std::string> names;
      for (std::size_t i = 0; i < anomalies.size(); ++i) {
        ans.features.push_back(
            AnswerFeature("rca")
                .set("rank", static_cast<double>(i))
                .set("channel", static_cast<double>(anomalies[i]->channel))
                .set("magnitude", std::abs(anomalies[i]->param("height"))));
        names.push_back(s0.channel_names[anomalies[i]->channel]);
      }
      prose = "Channel " + names[0] + " is the root cause; anomaly ranking: " +
              detail::join(names, ", ") + ".";
      break;
    }
    case TaskKind::anomaly_detection: {
      std::vector<int> steps;
      if (query.rule.kind == "threshold") {
        for (int t = 0; t < s0.length; ++t)
          if (s0.values[ch][t] > query.rule.threshold) steps.push_back(t);
      } else if (query.rule.kind == "spike_polarity") {
        const double want = query.rule.direction == "up" ? 1.0 : -1.0;
        for (const auto& e : f0)
          if (e.kind == EventKind::spike && e.channel == ch &&
              e.param("direction") == want)
            steps.push_back(e.pos());
        std::sort(steps.begin(), steps.end());
      } else if (query.rule.kind == "slope_sign") {
        for (const auto& e : final_segments(f0, ch))
          if (trend_class(e) == "decreasing") steps.push_back(e.start);
      } else {
        throw std::invalid_argument("unknown anomaly rule: " + query.rule.kind);
      }
      for (int t : steps)
        ans.features.push_back(AnswerFeature("anomaly").set("pos", static_cast<double>(t)));
      prose = steps.empty() ? "No steps violate the rule."
                            : "The rule is violated at step" +
                                  std::string(steps.size() > 1 ? "s " : " ") +
                                  detail::steps_list(steps) + ".";
      break;
    }
  }
  ans.text = prose + " " + detail::render_features(ans.features);
  return ans;
}

// ---------------------------------------------------------------------------
// Shared anomaly injection for RCA: the root channel gets the largest event,
// a subset of the other channels correlated strictly-smaller ones.

inline std::pair<MultiSeries, std::vector<FeatureEvent>> inject_anomaly(
    const MultiSeries& s, Rng& rng, double value_scale = 1.0) {
  const int d = s.channels();
  if (d < 2) throw std::invalid_argument("inject_anomaly requires D >= 2");
  MultiSeries out = s;
  std::vector<FeatureEvent> events;
  const int root = static_cast<int>(rng.uniform_int(0, d - 1));
  const int pos = static_cast<int>(rng.uniform_int(0, s.length - 1));
  const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
  double magnitude = round3(rng.uniform(4.0, 6.0) * value_scale);

  auto add = [&](int channel, double height) {
    out.values[channel][pos] += height;
    FeatureEvent e;
    e.kind = EventKind::spike;
    e.channel = channel;
    e.start = pos;
    e.end = pos + 1;
    e.params["height"] = height;
    e.params["direction"] = height >= 0.0 ? 1.0 : -1.0;
    e.params["anomaly"] = 1.0;
    events.push_back(std::move(e));
  };

  add(root, sign * magnitude);
  for (int c = 0; c < d; ++c) {
    if (c == root) continue;
    if (c != (root + 1) % d && !rng.bernoulli(0.7)) continue;  // keep >= 2 affected
    magnitude = round3(magnitude * 0.6);
    add(c, sign * magnitude);
  }
  return {std::move(out), std::move(events)};
}

// ---------------------------------------------------------------------------
// Record construction.

namespace detail {

inline chrongen::GenConfig gen_config_for(const TaskSpec& spec, int l, int d,
                                          std::uint64_t seed, Rng& rng) {
  using chrongen::TrendKind;
  chrongen::GenConfig cfg;
  cfg.l = l;
  cfg.d = d;
  cfg.seed = seed;
  cfg.changes_min = 0;
  cfg.changes_max = 0;
  switch (spec.task) {
    case TaskKind::change_point:
      cfg.k = static_cast<int>(rng.uniform_int(2, 5));
      break;
    case TaskKind::extreme:
    case TaskKind::value_at_index:
    case TaskKind::trend:
      cfg.k = static_cast<int>(rng.uniform_int(1, 3));
      break;
    case TaskKind::spike:
      cfg.k = static_cast<int>(rng.uniform_int(1, 2));
      cfg.changes_min = 1;
      cfg.changes_max = 2;
      cfg.spike_prob = 1.0;
      break;
    case TaskKind::segment:
    case TaskKind::comparison:
      cfg.k = static_cast<int>(rng.uniform_int(2, 4));
      break;
    case TaskKind::relative:
      cfg.k = static_cast<int>(rng.uniform_int(2, 4));
      cfg.trend_families = {TrendKind::linear};
      break;
    case TaskKind::describe:
      cfg.k = static_cast<int>(rng.uniform_int(2, 3));
      cfg.changes_min = 0;
      cfg.changes_max = 2;
      break;
    case TaskKind::rca:
      cfg.k = static_cast<int>(rng.uniform_int(1, 2));
      break;
    case TaskKind::anomaly_detection:
      cfg.k = static_cast<int>(rng.uniform_int(2, 4));
      cfg.changes_min = 1;
      cfg.changes_max = 2;
      cfg.spike_prob = 0.7;
      break;
  }
  return cfg;
}

inline std::string question_for(const TaskSpec& spec, const TaskQuery& query,
                                const MultiSeries& s0) {
  const std::string where =
      spec.variant == "multi"
          ? "channel " + s0.channel_names[query.channel] + " of series <ts:0>"
          : "series <ts:0>";
  switch (spec.task) {
    case TaskKind::change_point:
      return "At which steps does the pattern of " + where + " change?";
    case TaskKind::extreme:
      return "What is the " +
             std::string(query.extreme == "max" ? "maximum" : "minimum") +
             " value of " + where + ", and at which step does it occur?";
    case TaskKind::spike:
      return "Identify every spike in " + where +
             ", giving its step and direction.";
    case TaskKind::trend: {
      std::string q = "What is the overall trend of " + where + "?";
      if (spec.mcqa)
        q += " Options: increasing; decreasing; flat; oscillating. "
             "Answer with exactly one option.";
      return q;
    }
    case TaskKind::value_at_index:
      return "What is the value of " + where + " at step " +
             std::to_string(query.index) + "?";
    case TaskKind::segment:
      return "Segment " + where + " into local trends, giving each span and "
             "its trend class.";
    case TaskKind::comparison:
      return "Compare the trends of series <ts:0> and series <ts:1> over each "
             "segment: are they the same or different?";
    case TaskKind::relative:
      return "For each consecutive pair of trends in " + where +
             ", is the later trend faster, slower, or reversed relative to the "
             "earlier one?";
    case TaskKind::describe:
      return "Describe the full evolution of " + where +
             " in temporal order, including every change.";
    case TaskKind::rca:
      return "Rank the channels of series <ts:0> by anomaly magnitude and "
             "identify the root-cause channel.";
    case TaskKind::anomaly_detection:
      return "Using the rule that " + query.rule.text() +
             ", report every anomalous step of " + where + ".";
  }
  throw std::invalid_argument("unknown task");
}

}  // namespace detail

inline QARecord build_qa(const TaskSpec& spec, Rng& rng) {
  const auto v = validate_spec(spec);
  if (!v) throw std::invalid_argument("invalid TaskSpec: " + v.message);

  const int l = static_cast<int>(rng.uniform_int(spec.length_min, spec.length_max));
  int d = 1;
  if (spec.variant == "multi" || spec.task == TaskKind::rca)
    d = static_cast<int>(rng.uniform_int(std::max(2, spec.channels_min),
                                         std::max(2, spec.channels_max)));

  const std::uint64_t gen_seed = rng.next_u64();
  chrongen::GenConfig cfg = detail::gen_config_for(spec, l, d, gen_seed, rng);

  QARecord rec;
  rec.task = spec.task;
  rec.category = category_of(spec.task);
  rec.variant = spec.variant;

  TaskQuery query;
  if (d > 1 && spec.task != TaskKind::rca)
    query.channel = static_cast<int>(rng.uniform_int(0, d - 1));

  std::vector<std::vector<FeatureEvent>> features;
  if (spec.task == TaskKind::comparison) {
    auto a = chrongen::generate(cfg);
    chrongen::GenConfig cfg_b = cfg;
    cfg_b.seed = rng.next_u64();
    std::vector<int> cps;
    for (const auto& e : a.features)
      if (e.kind == EventKind::change_point && e.channel == 0)
        cps.push_back(e.pos());
    auto b = chrongen::generate(cfg_b, cps);
    rec.series = {std::move(a.series), std::move(b.series)};
    features = {std::move(a.features), std::move(b.features)};
  } else {
    auto g = chrongen::generate(cfg);
    if (spec.task == TaskKind::rca) {
      auto [injected, events] = inject_anomaly(g.series, rng, cfg.value_scale);
      g.series = std::move(injected);
      for (auto& e : events) g.features.push_back(std::move(e));
    }
    rec.series = {std::move(g.series)};
    features = {std::move(g.features)};
  }

  switch (spec.task) {
    case TaskKind::value_at_index:
      query.index = static_cast<int>(rng.uniform_int(0, l - 1));
      break;
    case TaskKind::extreme:
      query.extreme = rng.bernoulli(0.5) ? "max" : "min";
      break;
    case TaskKind::anomaly_detection: {
      const int pick = static_cast<int>(rng.uniform_int(0, 2));
      if (pick == 0) {
        // threshold slightly above the spike-free envelope, so exceedances
        // are the large upward events
        auto trend_only = features[0];
        trend_only.erase(std::remove_if(trend_only.begin(), trend_only.end(),
                                        [](const FeatureEvent& e) {
                                          return e.kind == EventKind::spike;
                                        }),
                         trend_only.end());
        const auto base = chrongen::replay_features(trend_only, d, l);
        double m = base.values[query.channel][0];
        for (double x : base.values[query.channel]) m = std::max(m, x);
        query.rule = {"threshold", round3(m + 0.5 * cfg.value_scale), ""};
      } else if (pick == 1) {
        query.rule = {"spike_polarity", 0.0, rng.bernoulli(0.5) ? "up" : "down"};
      } else {
        query.rule = {"slope_sign", 0.0, ""};
      }
      break;
    }
    default:
      break;
  }

  // spike-flavoured tasks need spikes on the asked channel; regenerate the
  // query channel choice onto one that has them
  if (spec.task == TaskKind::spike ||
      (spec.task == TaskKind::anomaly_detection && query.rule.kind == "spike_polarity")) {
    chrongen::GenConfig spiky = cfg;
    spiky.changes_min = std::max(1, cfg.changes_min);
    spiky.changes_max = std::max(2, cfg.changes_max);
    spiky.spike_prob = 1.0;
    if (spiky.changes_min != cfg.changes_min || spiky.spike_prob != cfg.spike_prob ||
        spiky.changes_max != cfg.changes_max) {
      auto g = chrongen::generate(spiky);
      rec.series = {std::move(g.series)};
      features = {std::move(g.features)};
      cfg = spiky;
    }
  }

  const Answer ans = derive_answer(spec.task, rec.series, features, query);
  rec.question = detail::question_for(spec, query, rec.series[0]);
  rec.answer_text = ans.text;
  rec.answer_features = ans.features;
  if (spec.task == TaskKind::trend && spec.mcqa)
    rec.choices = {"increasing", "decreasing", "flat", "oscillating"};

  json feat_json = json::array();
  for (const auto& fs : features) {
    json arr = json::array();
    for (const auto& e : fs) arr.push_back(to_json(e));
    feat_json.push_back(arr);
  }
  rec.meta = json{{"features", feat_json},
                  {"query", to_json(query)},
                  {"tolerances",
                   {{"pos", std::max(1, static_cast<int>(std::ceil(0.05 * l)))},
                    {"val", 0.05}}},
                  {"mcqa", spec.mcqa}};
  return rec;
}

// Recompute a record's structured answer from its stored series + features.
// Oracle for dataset self-consistency.
inline Answer recompute_answer(const QARecord& rec) {
  std::vector<std::vector<FeatureEvent>> features;
  for (const auto& arr : rec.meta.at("features")) {
    std::vector<FeatureEvent> fs;
    for (const auto& e : arr) fs.push_back(event_from_json(e));
    features.push_back(std::move(fs));
  }
  const TaskQuery query = query_from_json(rec.meta.at("query"));
  return derive_answer(rec.task, rec.series, features, query);
}

inline std::size_t emit_dataset(const std::vector<TaskSpec>& specs,
                                std::uint64_t seed, const std::string& path,
                                std::map<std::string, int>* per_task_counts = nullptr) {
  std::vector<QARecord> records;
  std::uint64_t index = 0;
  for (const auto& spec : specs) {
    const auto v = validate_spec(spec);
    if (!v) throw std::invalid_argument("invalid TaskSpec: " + v.message);
    for (int i = 0; i < spec.count; ++i, ++index) {
      Rng rng(derive_seed(seed, index));
      QARecord rec = build_qa(spec, rng);
      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "%s-%s-%06llu",
                    to_string(spec.task).c_str(), spec.variant.c_str(),
                    static_cast<unsigned long long>(index));
      rec.id = idbuf;
      rec.meta["seed_index"] = index;
      if (per_task_counts) ++(*per_task_counts)[to_string(spec.task)];
      records.push_back(std::move(rec));
    }
  }
  return write_records(path, records);
}

}  // namespace timesense::taskgen
