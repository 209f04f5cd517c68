#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "timesense/core.hpp"
#include "timesense/rng.hpp"

namespace timesense::chrongen {

enum class TrendKind { linear, constant, oscillatory };

struct TrendSpec {
  TrendKind kind = TrendKind::linear;
  double slope = 0.0;      // linear
  double level = 0.0;      // constant
  double amplitude = 0.0;  // oscillatory
  double period = 0.0;
  double phase = 0.0;
};

struct GenConfig {
  int l = 128;
  int k = 3;
  int d = 1;
  std::vector<TrendKind> trend_families = {TrendKind::linear, TrendKind::constant,
                                           TrendKind::oscillatory};
  int changes_min = 0;
  int changes_max = 2;
  double spike_prob = 0.4;
  double value_scale = 1.0;
  std::uint64_t seed = 0;

  // parameter ranges, relative to value_scale where noted
  double slope_min = 0.02;        // |slope| per step, times value_scale
  double slope_max = 0.4;
  double amp_min = 0.5;           // times value_scale
  double amp_max = 2.0;
  int period_min = 4;
  int period_max = 32;
  double spike_min = 1.5;         // |height|, times value_scale
  double spike_max = 4.0;
  double slope_change_min = 0.05; // material slope difference, times value_scale
};

inline Validation validate_config(const GenConfig& cfg) {
  if (cfg.l < 1 || cfg.k < 1 || cfg.k > cfg.l)
    return {false, "require 1 <= K <= L"};
  if (cfg.d < 1) return {false, "require D >= 1"};
  if (cfg.trend_families.empty()) return {false, "empty trend family set"};
  if (cfg.changes_min < 0 || cfg.changes_max < cfg.changes_min)
    return {false, "empty changes_per_segment range"};
  if (cfg.spike_prob < 0.0 || cfg.spike_prob > 1.0)
    return {false, "spike_prob outside [0,1]"};
  if (cfg.slope_max < cfg.slope_min || cfg.amp_max < cfg.amp_min ||
      cfg.spike_max < cfg.spike_min || cfg.period_max < cfg.period_min)
    return {false, "empty parameter range"};
  if (cfg.period_min < 2) return {false, "period must be >= 2 steps"};
  return {};
}

// ---------------------------------------------------------------------------
// Change points: K-1 strictly increasing steps in [1, L), partitioning [0, L)
// into K contiguous segments. Selection sampling keeps the draw O(L) and
// deterministic.

inline std::vector<int> sample_change_points(int l, int k, Rng& rng) {
  if (k < 1 || k > l) throw std::invalid_argument("require 1 <= K <= L");
  std::vector<int> cps;
  int needed = k - 1;
  int remaining = l - 1;  // candidates 1..L-1
  for (int cand = 1; cand < l && needed > 0; ++cand, --remaining) {
    if (rng.uniform() * remaining < needed) {
      cps.push_back(cand);
      --needed;
    }
  }
  return cps;
}

// ---------------------------------------------------------------------------
// Base trends. The first value always equals start_value; the oscillatory
// family subtracts its phase offset so that holds for any phase.

inline void validate_spec(const TrendSpec& spec) {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(spec.slope) || !finite(spec.level) || !finite(spec.amplitude) ||
      !finite(spec.period) || !finite(spec.phase))
    throw std::invalid_argument("non-finite trend param");
  if (spec.kind == TrendKind::oscillatory && spec.period < 2.0)
    throw std::invalid_argument("oscillatory period must be >= 2 steps");
}

inline std::vector<double> make_base_trend(const TrendSpec& spec,
                                           double start_value, int len) {
  if (len < 1) throw std::invalid_argument("segment length must be positive");
  validate_spec(spec);
  std::vector<double> v(len);
  switch (spec.kind) {
    case TrendKind::linear:
      for (int t = 0; t < len; ++t) v[t] = start_value + spec.slope * t;
      break;
    case TrendKind::constant:
      for (int t = 0; t < len; ++t) v[t] = start_value;
      break;
    case TrendKind::oscillatory: {
      const double w = 2.0 * std::numbers::pi / spec.period;
      const double offset = std::sin(w * (0.0 - spec.phase));
      for (int t = 0; t < len; ++t)
        v[t] = start_value + spec.amplitude * (std::sin(w * (t - spec.phase)) - offset);
      break;
    }
  }
  return v;
}

inline FeatureEvent trend_event(const TrendSpec& spec, int channel, int start,
                                int end, double start_value) {
  FeatureEvent e;
  e.kind = EventKind::segment_trend;
  e.channel = channel;
  e.start = start;
  e.end = end;
  e.params["start_value"] = start_value;
  switch (spec.kind) {
    case TrendKind::linear:
      e.params["slope"] = spec.slope;
      break;
    case TrendKind::constant:
      e.params["level"] = start_value;
      break;
    case TrendKind::oscillatory:
      e.params["amplitude"] = spec.amplitude;
      e.params["period"] = spec.period;
      e.params["phase"] = spec.phase;
      break;
  }
  return e;
}

inline TrendSpec spec_from_event(const FeatureEvent& e) {
  TrendSpec spec;
  if (e.has("slope")) {
    spec.kind = TrendKind::linear;
    spec.slope = e.param("slope");
  } else if (e.has("level")) {
    spec.kind = TrendKind::constant;
    spec.level = e.param("level");
  } else {
    spec.kind = TrendKind::oscillatory;
    spec.amplitude = e.param("amplitude");
    spec.period = e.param("period");
    spec.phase = e.has("phase") ? e.param("phase") : 0.0;
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Trend sampling. Conditioned draws yield a different family, or for a
// repeated family, parameters that differ by at least the configured
// threshold.

inline TrendSpec sample_trend_spec(Rng& rng, const GenConfig& cfg,
                                   const std::optional<TrendSpec>& prev = {}) {
  const auto& fams = cfg.trend_families;
  TrendKind kind = fams[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(fams.size()) - 1))];
  if (prev && kind == prev->kind && kind == TrendKind::constant) {
    // a repeated constant would be the identical trend; switch family if we can
    for (TrendKind other : fams)
      if (other != TrendKind::constant) {
        kind = other;
        break;
      }
  }
  TrendSpec spec;
  spec.kind = kind;
  auto draw_signed = [&](double lo, double hi) {
    const double mag = round3(rng.uniform(lo, hi) * cfg.value_scale);
    return rng.bernoulli(0.5) ? mag : -mag;
  };
  switch (kind) {
    case TrendKind::linear:
      spec.slope = draw_signed(cfg.slope_min, cfg.slope_max);
      if (prev && prev->kind == TrendKind::linear) {
        while (std::abs(spec.slope - prev->slope) <
               cfg.slope_change_min * cfg.value_scale)
          spec.slope = draw_signed(cfg.slope_min, cfg.slope_max);
      }
      break;
    case TrendKind::constant:
      break;  // level is pinned to the segment's start value
    case TrendKind::oscillatory:
      spec.amplitude = round3(rng.uniform(cfg.amp_min, cfg.amp_max) * cfg.value_scale);
      spec.period = static_cast<double>(rng.uniform_int(cfg.period_min, cfg.period_max));
      if (prev && prev->kind == TrendKind::oscillatory) {
        while (spec.period == prev->period)
          spec.period = static_cast<double>(rng.uniform_int(cfg.period_min, cfg.period_max));
      }
      spec.phase = rng.bernoulli(0.5) ? 0.0 : spec.period / 2.0;
      break;
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Change operations. Events are emitted with segment-local positions shifted
// by `offset` so they land in global coordinates.

inline std::pair<std::vector<double>, FeatureEvent> apply_point_change(
    const std::vector<double>& segment, Rng& rng, const GenConfig& cfg,
    int channel = 0, int offset = 0) {
  if (segment.empty()) throw std::invalid_argument("empty segment");
  std::vector<double> out = segment;
  const int pos = static_cast<int>(
      rng.uniform_int(0, static_cast<std::int64_t>(segment.size()) - 1));
  double height = round3(rng.uniform(cfg.spike_min, cfg.spike_max) * cfg.value_scale);
  if (rng.bernoulli(0.5)) height = -height;
  out[pos] += height;
  FeatureEvent e;
  e.kind = EventKind::spike;
  e.channel = channel;
  e.start = offset + pos;
  e.end = e.start + 1;
  e.params["height"] = height;
  e.params["direction"] = height >= 0.0 ? 1.0 : -1.0;
  return {std::move(out), std::move(e)};
}

inline std::pair<std::vector<double>, FeatureEvent> apply_segment_change(
    const std::vector<double>& segment, const TrendSpec& prev_trend, Rng& rng,
    const GenConfig& cfg, int channel = 0, int offset = 0) {
  if (segment.empty()) throw std::invalid_argument("empty segment");
  const TrendSpec spec = sample_trend_spec(rng, cfg, prev_trend);
  std::vector<double> out =
      make_base_trend(spec, segment.front(), static_cast<int>(segment.size()));
  FeatureEvent e = trend_event(spec, channel, offset,
                               offset + static_cast<int>(segment.size()),
                               segment.front());
  return {std::move(out), std::move(e)};
}

// ---------------------------------------------------------------------------
// Annotation templates: deterministic text per (kind, params bucket).

inline std::string render_annotation(const FeatureEvent& e) {
  auto span = [&] {
    return "from step " + std::to_string(e.start) + " to step " +
           std::to_string(e.end);
  };
  switch (e.kind) {
    case EventKind::change_point:
      return "the pattern changes at step " + std::to_string(e.pos());
    case EventKind::spike:
      return std::string(e.param("direction") >= 0.0 ? "an upward" : "a downward") +
             " spike at step " + std::to_string(e.pos());
    case EventKind::segment_trend: {
      if (e.has("slope")) {
        const double slope = e.param("slope");
        if (slope == 0.0) return "remains flat at level " + fmt_num(e.param("start_value")) + " " + span();
        const bool sharp = std::abs(slope) >= 0.25;
        const std::string verb = slope > 0.0 ? "increasing" : "decreasing";
        return verb + (sharp ? " sharply " : " steadily ") + span();
      }
      if (e.has("level"))
        return "remains flat at level " + fmt_num(e.param("level")) + " " + span();
      return "oscillates with amplitude " + fmt_num(e.param("amplitude")) +
             " and period " + fmt_num(e.param("period")) + " " + span();
    }
  }
  throw std::invalid_argument("unknown event kind");
}

// ---------------------------------------------------------------------------
// Full generator. Channels are generated independently from derived seeds;
// per segment, a base trend is laid down first, then sampled segment rewrites,
// then spikes, so every recorded event survives into the emitted series and
// replaying the feature array reproduces it exactly.

struct GenResult {
  MultiSeries series;
  std::vector<SegmentAnnotation> annotations;
  std::vector<FeatureEvent> features;
};

inline GenResult generate(
    const GenConfig& cfg,
    const std::optional<std::vector<int>>& forced_change_points = {}) {
  const auto v = validate_config(cfg);
  if (!v) throw std::invalid_argument("invalid GenConfig: " + v.message);

  GenResult res;
  res.series.length = cfg.l;
  res.series.values.assign(cfg.d, std::vector<double>(cfg.l, 0.0));
  for (int c = 0; c < cfg.d; ++c)
    res.series.channel_names.push_back("ch" + std::to_string(c));

  auto record = [&](FeatureEvent e, const std::string& text) {
    res.annotations.push_back(
        {e.start, e.end, text, {static_cast<int>(res.features.size())}});
    res.features.push_back(std::move(e));
  };

  for (int c = 0; c < cfg.d; ++c) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(c)));
    std::vector<int> cps = forced_change_points
                               ? *forced_change_points
                               : sample_change_points(cfg.l, cfg.k, rng);
    std::vector<int> bounds;
    bounds.push_back(0);
    bounds.insert(bounds.end(), cps.begin(), cps.end());
    bounds.push_back(cfg.l);

    double boundary_value = round3(rng.uniform(-cfg.value_scale, cfg.value_scale));
    std::optional<TrendSpec> prev_spec;
    for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
      const int s = bounds[i];
      const int e = bounds[i + 1];
      if (i > 0) {
        FeatureEvent cp;
        cp.kind = EventKind::change_point;
        cp.channel = c;
        cp.start = s;
        cp.end = s + 1;
        record(cp, render_annotation(cp));
      }
      TrendSpec spec = sample_trend_spec(rng, cfg, prev_spec);
      std::vector<double> vals = make_base_trend(spec, boundary_value, e - s);
      {
        FeatureEvent base = trend_event(spec, c, s, e, boundary_value);
        record(base, render_annotation(base));
      }
      const int n_changes =
          static_cast<int>(rng.uniform_int(cfg.changes_min, cfg.changes_max));
      int n_spikes = 0;
      for (int j = 0; j < n_changes; ++j)
        if (rng.bernoulli(cfg.spike_prob)) ++n_spikes;
      for (int j = 0; j < n_changes - n_spikes; ++j) {
        auto [rewritten, ev] = apply_segment_change(vals, spec, rng, cfg, c, s);
        vals = std::move(rewritten);
        spec = spec_from_event(ev);
        record(ev, render_annotation(ev));
      }
      const double trend_last = vals.back();
      for (int j = 0; j < n_spikes; ++j) {
        auto [spiked, ev] = apply_point_change(vals, rng, cfg, c, s);
        vals = std::move(spiked);
        record(ev, render_annotation(ev));
      }
      std::copy(vals.begin(), vals.end(), res.series.values[c].begin() + s);
      boundary_value = trend_last;
      prev_spec = spec;
    }
  }
  return res;
}

// Replays the feature array as edits on reconstructed base trends. Used as
// the generator's own oracle: the result must equal the emitted series.
inline MultiSeries replay_features(const std::vector<FeatureEvent>& features,
                                   int d, int l) {
  MultiSeries s;
  s.length = l;
  s.values.assign(d, std::vector<double>(l, 0.0));
  for (int c = 0; c < d; ++c) s.channel_names.push_back("ch" + std::to_string(c));
  for (const auto& e : features) {
    auto& ch = s.values.at(e.channel);
    switch (e.kind) {
      case EventKind::change_point:
        break;
      case EventKind::segment_trend: {
        const auto vals = make_base_trend(spec_from_event(e),
                                          e.param("start_value"), e.end - e.start);
        std::copy(vals.begin(), vals.end(), ch.begin() + e.start);
        break;
      }
      case EventKind::spike:
        ch[e.pos()] += e.param("height");
        break;
    }
  }
  return s;
}

}  // namespace timesense::chrongen
