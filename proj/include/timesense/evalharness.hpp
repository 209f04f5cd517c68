#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "timesense/core.hpp"

namespace timesense::evalharness {

// ---------------------------------------------------------------------------
// Attribute typing drives the comparison rule: positions match within an
// absolute step tolerance, magnitudes within a relative tolerance, everything
// else exactly.

enum class AttrType { positional, value, exact };

inline AttrType attr_type(const std::string& key) {
  static const std::set<std::string> positional = {"pos", "start", "end", "step"};
  static const std::set<std::string> value = {"value",  "height",    "level",
                                              "slope",  "magnitude", "amplitude",
                                              "period", "threshold"};
  if (positional.count(key)) return AttrType::positional;
  if (value.count(key)) return AttrType::value;
  return AttrType::exact;
}

struct Tolerances {
  double pos = 3.0;   // absolute steps
  double val = 0.05;  // relative
};

inline Tolerances tolerances_from_meta(const json& meta, int fallback_len = 100) {
  Tolerances t;
  if (meta.contains("tolerances")) {
    t.pos = meta.at("tolerances").value("pos", t.pos);
    t.val = meta.at("tolerances").value("val", t.val);
  } else {
    t.pos = std::max(1.0, std::ceil(0.05 * fallback_len));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Rule-based answer parsing. Failures are scores, never exceptions.

struct Parsed {
  bool ok = false;
  std::vector<AnswerFeature> features;
};

inline Parsed parse_failure() { return {}; }

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  return out;
}

inline std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

}  // namespace detail

inline Parsed parse_answer(TaskKind /*task*/, const std::string& text) {
  const std::string tag = "FEATURES:";
  const std::size_t at = text.rfind(tag);
  if (at == std::string::npos) return parse_failure();
  const std::string body = detail::trim(text.substr(at + tag.size()));
  Parsed out;
  out.ok = true;
  if (body == "none" || body.empty()) return out;
  for (const std::string& raw : detail::split(body, ';')) {
    const std::string item = detail::trim(raw);
    if (item.empty()) return parse_failure();
    const std::size_t open = item.find('(');
    if (open == std::string::npos || item.back() != ')') return parse_failure();
    AnswerFeature f(detail::trim(item.substr(0, open)));
    if (f.name.empty()) return parse_failure();
    const std::string inner = item.substr(open + 1, item.size() - open - 2);
    if (!detail::trim(inner).empty()) {
      for (const std::string& kv : detail::split(inner, ',')) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) return parse_failure();
        const std::string key = detail::trim(kv.substr(0, eq));
        const std::string val = detail::trim(kv.substr(eq + 1));
        if (key.empty()) return parse_failure();
        if (auto num = detail::parse_number(val))
          f.attrs[key] = *num;
        else
          f.attrs[key] = val;
      }
    }
    out.features.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature comparison and greedy one-to-one list matching.

inline bool feature_matches(const AnswerFeature& pred, const AnswerFeature& ref,
                            const Tolerances& tol) {
  if (pred.name != ref.name) return false;
  for (const auto& [key, rv] : ref.attrs) {
    const auto it = pred.attrs.find(key);
    if (it == pred.attrs.end()) return false;
    const AttrValue& pv = it->second;
    if (std::holds_alternative<std::string>(rv)) {
      if (!std::holds_alternative<std::string>(pv) ||
          std::get<std::string>(pv) != std::get<std::string>(rv))
        return false;
      continue;
    }
    if (!std::holds_alternative<double>(pv)) return false;
    const double r = std::get<double>(rv);
    const double p = std::get<double>(pv);
    switch (attr_type(key)) {
      case AttrType::positional:
        if (std::abs(p - r) > tol.pos) return false;
        break;
      case AttrType::value:
        if (std::abs(p - r) > tol.val * std::abs(r) + 1e-12) return false;
        break;
      case AttrType::exact:
        if (p != r) return false;
        break;
    }
  }
  return true;
}

inline double primary_position(const AnswerFeature& f) {
  for (const char* key : {"pos", "start", "step"}) {
    const auto it = f.attrs.find(key);
    if (it != f.attrs.end() && std::holds_alternative<double>(it->second))
      return std::get<double>(it->second);
  }
  return 0.0;
}

// Greedy matching: references in position order, each taking the nearest
// still-unmatched compatible prediction (ties to the left). Returns the
// number of matches.
inline int greedy_match_count(const std::vector<AnswerFeature>& pred,
                              const std::vector<AnswerFeature>& ref,
                              const Tolerances& tol) {
  std::vector<int> ref_order(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) ref_order[i] = static_cast<int>(i);
  std::stable_sort(ref_order.begin(), ref_order.end(), [&](int a, int b) {
    return primary_position(ref[a]) < primary_position(ref[b]);
  });
  std::vector<bool> used(pred.size(), false);
  int matches = 0;
  for (int ri : ref_order) {
    const double rpos = primary_position(ref[ri]);
    int best = -1;
    double best_dist = 0.0, best_pos = 0.0;
    for (std::size_t pi = 0; pi < pred.size(); ++pi) {
      if (used[pi]) continue;
      if (!feature_matches(pred[pi], ref[ri], tol)) continue;
      const double ppos = primary_position(pred[pi]);
      const double dist = std::abs(ppos - rpos);
      if (best < 0 || dist < best_dist ||
          (dist == best_dist && ppos < best_pos)) {
        best = static_cast<int>(pi);
        best_dist = dist;
        best_pos = ppos;
      }
    }
    if (best >= 0) {
      used[best] = true;
      ++matches;
    }
  }
  return matches;
}

inline double score_features(const std::vector<AnswerFeature>& pred,
                             const std::vector<AnswerFeature>& ref,
                             const Tolerances& tol) {
  if (pred.empty() && ref.empty()) return 1.0;
  const std::size_t denom = std::max(pred.size(), ref.size());
  return static_cast<double>(greedy_match_count(pred, ref, tol)) / denom;
}

inline double score_record(const Parsed& pred, const QARecord& ref) {
  if (!pred.ok) return 0.0;
  const Tolerances tol =
      tolerances_from_meta(ref.meta, ref.series.empty() ? 100 : ref.series[0].length);
  return score_features(pred.features, ref.answer_features, tol);
}

// ---------------------------------------------------------------------------
// Aggregation.

struct ScoreReport {
  std::map<std::string, double> per_task;      // "task/variant" -> accuracy
  std::map<std::string, int> per_task_count;
  std::map<std::string, double> per_category;
  int total_records = 0;
  double overall = 0.0;
  Tolerances default_tolerances;
  std::string note = "list answers scored by matched fraction (greedy one-to-one)";
};

inline ScoreReport evaluate(const std::vector<QARecord>& dataset,
                            const std::map<std::string, std::string>& answers) {
  std::vector<std::string> missing, extra;
  std::set<std::string> ids;
  for (const auto& r : dataset) {
    ids.insert(r.id);
    if (!answers.count(r.id)) missing.push_back(r.id);
  }
  for (const auto& [id, _] : answers)
    if (!ids.count(id)) extra.push_back(id);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "answer id mismatch;";
    if (!missing.empty()) msg += " missing: " + missing[0] + (missing.size() > 1 ? ",..." : "");
    if (!extra.empty()) msg += " extra: " + extra[0] + (extra.size() > 1 ? ",..." : "");
    throw std::runtime_error(msg);
  }

  ScoreReport rep;
  std::map<std::string, double> task_sum;
  std::map<std::string, std::pair<double, int>> cat_sum;
  double total = 0.0;
  for (const auto& r : dataset) {
    const Parsed pred = parse_answer(r.task, answers.at(r.id));
    const double s = score_record(pred, r);
    const std::string key = to_string(r.task) + "/" + r.variant;
    task_sum[key] += s;
    ++rep.per_task_count[key];
    auto& [cs, cc] = cat_sum[to_string(r.category)];
    cs += s;
    ++cc;
    total += s;
  }
  for (const auto& [key, sum] : task_sum)
    rep.per_task[key] = sum / rep.per_task_count[key];
  for (const auto& [key, sc] : cat_sum) rep.per_category[key] = sc.first / sc.second;
  rep.total_records = static_cast<int>(dataset.size());
  rep.overall = rep.total_records > 0 ? total / rep.total_records : 0.0;
  return rep;
}

inline json to_json(const ScoreReport& r) {
  return json{{"per_task", r.per_task},
              {"per_task_count", r.per_task_count},
              {"per_category", r.per_category},
              {"total_records", r.total_records},
              {"overall", r.overall},
              {"default_tolerances", {{"pos", r.default_tolerances.pos},
                                      {"val", r.default_tolerances.val}}},
              {"note", r.note}};
}

inline std::string to_table(const ScoreReport& r) {
  std::ostringstream out;
  out << "Task                        Variant   Count   Accuracy\n";
  out << "------------------------------------------------------\n";
  for (const auto& [key, acc] : r.per_task) {
    const auto slash = key.find('/');
    char line[128];
    std::snprintf(line, sizeof(line), "%-27s %-9s %5d   %8.4f\n",
                  key.substr(0, slash).c_str(), key.substr(slash + 1).c_str(),
                  r.per_task_count.at(key), acc);
    out << line;
  }
  out << "------------------------------------------------------\n";
  for (const auto& [cat, acc] : r.per_category) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-37s %12.4f\n", (cat + " average").c_str(), acc);
    out << line;
  }
  char line[128];
  std::snprintf(line, sizeof(line), "%-37s %12.4f\n", "overall", r.overall);
  out << line;
  return out.str();
}

inline std::string to_csv(const ScoreReport& r) {
  std::ostringstream out;
  out << "task,variant,count,accuracy\n";
  for (const auto& [key, acc] : r.per_task) {
    const auto slash = key.find('/');
    out << key.substr(0, slash) << "," << key.substr(slash + 1) << ","
        << r.per_task_count.at(key) << "," << acc << "\n";
  }
  return out.str();
}

}  // namespace timesense::evalharness
