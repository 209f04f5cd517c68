#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "timesense/core.hpp"
#include "timesense/matrix.hpp"
#include "timesense/rng.hpp"
#include "timesense/sensor.hpp"
#include "timesense/tokenizer.hpp"
#include "timesense/tsembed.hpp"

namespace timesense::toymodel {

// ---------------------------------------------------------------------------
// Configuration. Desk defaults; the paper-scale hyperparameters (batch 1,
// lr 1e-5, 1200 steps on 8 GPUs) are recorded in the CLI config template.

struct ModelConfig {
  int d_model = 64;
  int layers = 2;
  int heads = 2;
  int vocab = vocab_size();
  int max_seq = 1024;
  int p = 8;  // patch length
  std::uint64_t seed = 0;
  double lr = 0.05;
  int steps = 1000;
  sensor::Ablations ablations;
};

inline Validation validate_config(const ModelConfig& cfg) {
  if (cfg.d_model < 1 || cfg.d_model % cfg.heads != 0)
    return {false, "d_model must be a positive multiple of heads"};
  if (cfg.vocab < vocab_size())
    return {false, "vocab must cover the text alphabet plus markers"};
  if (cfg.layers < 1 || cfg.max_seq < 1 || cfg.p < 1)
    return {false, "layers, max_seq and p must be positive"};
  return {};
}

inline json to_json(const ModelConfig& cfg) {
  json ab = json::array();
  if (cfg.ablations.fft) ab.push_back("fft");
  if (cfg.ablations.sensor) ab.push_back("sensor");
  if (cfg.ablations.posemb) ab.push_back("posemb");
  return json{{"d_model", cfg.d_model}, {"layers", cfg.layers},
              {"heads", cfg.heads},     {"vocab", cfg.vocab},
              {"max_seq", cfg.max_seq}, {"p", cfg.p},
              {"seed", cfg.seed},       {"lr", cfg.lr},
              {"steps", cfg.steps},     {"ablations", ab}};
}

inline ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.d_model = j.at("d_model").get<int>();
  cfg.layers = j.at("layers").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.vocab = j.at("vocab").get<int>();
  cfg.max_seq = j.at("max_seq").get<int>();
  cfg.p = j.at("p").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.lr = j.at("lr").get<double>();
  cfg.steps = j.at("steps").get<int>();
  for (const auto& a : j.at("ablations")) {
    const std::string s = a.get<std::string>();
    if (s == "fft") cfg.ablations.fft = true;
    else if (s == "sensor") cfg.ablations.sensor = true;
    else if (s == "posemb") cfg.ablations.posemb = true;
    else throw std::invalid_argument("unknown ablation: " + s);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Parameters: pre-norm decoder-only transformer plus the patch encoder f and
// reconstruction decoder f_r. Biases and layer-norm gains are 1 x n mats so
// a single registry covers every tensor.

struct LayerParams {
  Mat ln1_g, ln1_b;
  Mat wq, bq, wk, bk, wv, bv, wo, bo;
  Mat ln2_g, ln2_b;
  Mat w1, b1, w2, b2;
};

struct ModelParams {
  ModelConfig cfg;
  Mat tok_emb;  // V x d
  Mat pos_emb;  // max_seq x d
  std::vector<LayerParams> layer;
  Mat lnf_g, lnf_b;
  Mat lm_w, lm_b;  // d x V, 1 x V
  Mat enc_w1, enc_b1, enc_w2, enc_b2;  // 2P x d, 1 x d, d x d, 1 x d
  Mat dec_w1, dec_b1, dec_w2, dec_b2;  // d x d, 1 x d, d x P, 1 x P
};

template <class Params, class Fn>
void visit_tensors(Params& p, Fn&& fn) {
  fn("tok_emb", p.tok_emb);
  fn("pos_emb", p.pos_emb);
  for (std::size_t i = 0; i < p.layer.size(); ++i) {
    auto& l = p.layer[i];
    const std::string pre = "layer" + std::to_string(i) + ".";
    fn(pre + "ln1_g", l.ln1_g);
    fn(pre + "ln1_b", l.ln1_b);
    fn(pre + "wq", l.wq);
    fn(pre + "bq", l.bq);
    fn(pre + "wk", l.wk);
    fn(pre + "bk", l.bk);
    fn(pre + "wv", l.wv);
    fn(pre + "bv", l.bv);
    fn(pre + "wo", l.wo);
    fn(pre + "bo", l.bo);
    fn(pre + "ln2_g", l.ln2_g);
    fn(pre + "ln2_b", l.ln2_b);
    fn(pre + "w1", l.w1);
    fn(pre + "b1", l.b1);
    fn(pre + "w2", l.w2);
    fn(pre + "b2", l.b2);
  }
  fn("lnf_g", p.lnf_g);
  fn("lnf_b", p.lnf_b);
  fn("lm_w", p.lm_w);
  fn("lm_b", p.lm_b);
  fn("enc_w1", p.enc_w1);
  fn("enc_b1", p.enc_b1);
  fn("enc_w2", p.enc_w2);
  fn("enc_b2", p.enc_b2);
  fn("dec_w1", p.dec_w1);
  fn("dec_b1", p.dec_b1);
  fn("dec_w2", p.dec_w2);
  fn("dec_b2", p.dec_b2);
}

inline std::size_t param_count(const ModelParams& p) {
  std::size_t n = 0;
  visit_tensors(const_cast<ModelParams&>(p),
                [&](const std::string&, Mat& m) { n += m.v.size(); });
  return n;
}

// Index slots feed raw absolute step indices (up to a few hundred) into the
// encoder; their initial weights are shrunk so the tanh layer starts in its
// linear range.
inline constexpr double kIndexInitShrink = 1.0 / 256.0;

// Value slots see raw series values, whose drift can reach tens of units;
// shrink their initial weights too so large-scale records do not saturate
// the encoder at step 0.
inline constexpr double kValueInitShrink = 1.0 / 16.0;

inline void shape_params(ModelParams& p) {
  const auto& cfg = p.cfg;
  const int d = cfg.d_model;
  p.tok_emb = Mat(cfg.vocab, d);
  p.pos_emb = Mat(cfg.max_seq, d);
  p.layer.assign(cfg.layers, {});
  for (auto& l : p.layer) {
    l.ln1_g = Mat(1, d, 1.0);
    l.ln1_b = Mat(1, d);
    l.wq = Mat(d, d);
    l.bq = Mat(1, d);
    l.wk = Mat(d, d);
    l.bk = Mat(1, d);
    l.wv = Mat(d, d);
    l.bv = Mat(1, d);
    l.wo = Mat(d, d);
    l.bo = Mat(1, d);
    l.ln2_g = Mat(1, d, 1.0);
    l.ln2_b = Mat(1, d);
    l.w1 = Mat(d, 4 * d);
    l.b1 = Mat(1, 4 * d);
    l.w2 = Mat(4 * d, d);
    l.b2 = Mat(1, d);
  }
  p.lnf_g = Mat(1, d, 1.0);
  p.lnf_b = Mat(1, d);
  p.lm_w = Mat(d, cfg.vocab);
  p.lm_b = Mat(1, cfg.vocab);
  p.enc_w1 = Mat(2 * cfg.p, d);
  p.enc_b1 = Mat(1, d);
  p.enc_w2 = Mat(d, d);
  p.enc_b2 = Mat(1, d);
  p.dec_w1 = Mat(d, d);
  p.dec_b1 = Mat(1, d);
  p.dec_w2 = Mat(d, cfg.p);
  p.dec_b2 = Mat(1, cfg.p);
}

inline ModelParams make_zero_like(const ModelParams& p) {
  ModelParams g;
  g.cfg = p.cfg;
  shape_params(g);
  visit_tensors(g, [](const std::string& name, Mat& m) {
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, "_g") == 0)
      std::fill(m.v.begin(), m.v.end(), 0.0);
  });
  // layer-norm gains were shaped to 1; a gradient buffer must start at 0
  return g;
}

// Deterministic scaled-uniform init, bound 1/sqrt(fan_in) per weight matrix;
// biases and layer-norm offsets start at zero, gains at one.
inline ModelParams init_params(const ModelConfig& cfg) {
  const auto v = validate_config(cfg);
  if (!v) throw std::invalid_argument("invalid ModelConfig: " + v.message);
  ModelParams p;
  p.cfg = cfg;
  shape_params(p);
  Rng rng(derive_seed(cfg.seed, 0xC0DEULL));
  visit_tensors(p, [&](const std::string& name, Mat& m) {
    const bool is_gain = name.size() >= 2 && name.compare(name.size() - 2, 2, "_g") == 0;
    const bool is_bias = m.rows == 1 && !is_gain;
    if (is_gain || is_bias) return;  // already 1 / 0
    const int fan_in = (name == "tok_emb" || name == "pos_emb") ? m.cols : m.rows;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : m.v) x = rng.uniform(-bound, bound);
    if (name == "enc_w1") {
      for (int r = 0; r < cfg.p; ++r)  // index half of each patch vector
        for (int c = 0; c < m.cols; ++c) m.at(r, c) *= kIndexInitShrink;
      for (int r = cfg.p; r < 2 * cfg.p; ++r)  // value half
        for (int c = 0; c < m.cols; ++c) m.at(r, c) *= kValueInitShrink;
    }
  });
  return p;
}

// ---------------------------------------------------------------------------
// Record encoding into a fused sequence plus patch tensors.

struct EncodedRecord {
  tsembed::TokenSeq seq;
  std::vector<tsembed::PatchTensor> patches;  // one per series
  std::vector<MultiSeries> series;            // reconstruction targets
  int prompt_text_len = 0;  // ids in the prompt part (question + newline)
};

inline EncodedRecord encode_record(const QARecord& rec, int patch_len,
                                   bool with_answer) {
  EncodedRecord enc;
  enc.series = rec.series;
  const int placeholders = tsembed::count_placeholders(rec.question);
  if (placeholders != static_cast<int>(rec.series.size()))
    throw std::invalid_argument("placeholder/series count mismatch");
  std::vector<int> counts;
  for (const auto& s : rec.series) {
    auto pt = tsembed::patchify(tsembed::augment_index(s), patch_len);
    counts.push_back(pt.d * pt.n);
    enc.patches.push_back(std::move(pt));
  }
  std::vector<int> ids = encode_text(strip_placeholders(rec.question) + "\n");
  enc.prompt_text_len = static_cast<int>(ids.size());
  if (with_answer) {
    const std::vector<int> ans = encode_text(rec.answer_text);
    ids.insert(ids.end(), ans.begin(), ans.end());
    ids.push_back(kEos);
  }
  enc.seq = tsembed::fuse(counts, ids, placeholders, kTsOpen, kTsClose);
  return enc;
}

// ---------------------------------------------------------------------------
// Forward pass with caches for backprop.

namespace detail {

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}
inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

// Encoder and decoder hidden activation: tanh with a linear leak. Raw series
// values reach tens of units, and a plain tanh saturates there and stops all
// gradient flow; the leak keeps the derivative bounded away from zero.
inline constexpr double kActLeak = 0.1;

inline double leaky_tanh(double z) { return std::tanh(z) + kActLeak * z; }
inline double leaky_tanh_grad(double z) {
  const double t = std::tanh(z);
  return 1.0 - t * t + kActLeak;
}

inline constexpr double kLnEps = 1e-5;

inline Mat layer_norm(const Mat& x, const Mat& g, const Mat& b) {
  Mat y(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* xr = x.row(i);
    double mu = 0.0;
    for (int j = 0; j < x.cols; ++j) mu += xr[j];
    mu /= x.cols;
    double var = 0.0;
    for (int j = 0; j < x.cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= x.cols;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    double* yr = y.row(i);
    for (int j = 0; j < x.cols; ++j)
      yr[j] = g.at(0, j) * (xr[j] - mu) * inv + b.at(0, j);
  }
  return y;
}

inline void layer_norm_backward(const Mat& x, const Mat& g, const Mat& dy,
                                Mat& dx_acc, Mat& dg, Mat& db) {
  const int n = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    const double* xr = x.row(i);
    const double* dyr = dy.row(i);
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xr[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    double sum_gdy = 0.0, sum_gdy_xhat = 0.0;
    for (int j = 0; j < n; ++j) {
      const double xhat = (xr[j] - mu) * inv;
      const double gdy = g.at(0, j) * dyr[j];
      sum_gdy += gdy;
      sum_gdy_xhat += gdy * xhat;
      dg.at(0, j) += dyr[j] * xhat;
      db.at(0, j) += dyr[j];
    }
    double* dxr = dx_acc.row(i);
    for (int j = 0; j < n; ++j) {
      const double xhat = (xr[j] - mu) * inv;
      dxr[j] += inv * (g.at(0, j) * dyr[j] - sum_gdy / n - xhat * sum_gdy_xhat / n);
    }
  }
}

inline void add_bias(Mat& x, const Mat& b) {
  for (int i = 0; i < x.rows; ++i) {
    double* xr = x.row(i);
    for (int j = 0; j < x.cols; ++j) xr[j] += b.at(0, j);
  }
}

inline void bias_grad(const Mat& dy, Mat& db) {
  for (int i = 0; i < dy.rows; ++i) {
    const double* r = dy.row(i);
    for (int j = 0; j < dy.cols; ++j) db.at(0, j) += r[j];
  }
}

}  // namespace detail

struct LayerCache {
  Mat x_in, ln1, q, k, v, att_cat, x_mid, ln2, mlp_pre, mlp_act;
  std::vector<Mat> att;  // per head: T x T attention weights
};

struct ForwardState {
  int t = 0;
  std::vector<int> type;                    // token id, or -1 for ts positions
  std::vector<std::pair<int, int>> ts_map;  // per position: (series, ts token idx), (-1,-1) otherwise
  std::vector<std::vector<double>> enc_in;  // per ts position: 2P encoder input
  std::vector<std::vector<double>> enc_hpre;
  Mat x0;
  std::vector<LayerCache> layers;
  Mat pre_lnf, hidden;
  std::vector<int> txt_rows;  // sequence positions with logits
  Mat logits;
  std::vector<int> targets;  // per logits row, -1 masked
  std::vector<std::vector<std::vector<double>>> x_rec;  // per series: D x L
  std::vector<std::vector<std::vector<double>>> dec_hpre;  // per series, per ts token
  LossBreakdown loss;
};

inline ForwardState forward(const ModelParams& p, const EncodedRecord& enc) {
  const ModelConfig& cfg = p.cfg;
  const auto& ab = cfg.ablations;
  const int t_total = enc.seq.total_length();
  if (t_total > cfg.max_seq)
    throw std::invalid_argument("sequence length " + std::to_string(t_total) +
                                " exceeds max_seq " + std::to_string(cfg.max_seq));
  const int d = cfg.d_model;

  ForwardState st;
  st.t = t_total;
  st.type.assign(t_total, -1);
  st.ts_map.assign(t_total, {-1, -1});
  int pos = 0;
  for (const auto& span : enc.seq.ts_spans) {
    st.type[pos++] = kTsOpen;
    for (int i = 0; i < span.count; ++i, ++pos) st.ts_map[pos] = {span.series, i};
    st.type[pos++] = kTsClose;
  }
  for (int id : enc.seq.text_ids) st.type[pos++] = id;

  // input embeddings
  st.x0 = Mat(t_total, d);
  st.enc_in.assign(t_total, {});
  st.enc_hpre.assign(t_total, {});
  for (int i = 0; i < t_total; ++i) {
    double* out = st.x0.row(i);
    if (st.type[i] >= 0) {
      const double* e = p.tok_emb.row(st.type[i]);
      for (int j = 0; j < d; ++j) out[j] = e[j];
    } else {
      const auto [si, ti] = st.ts_map[i];
      const auto& pt = enc.patches[si];
      const int channel = ti / pt.n;
      const int patch = ti % pt.n;
      std::vector<double> in(pt.patch(0, channel, patch),
                             pt.patch(0, channel, patch) + 2 * pt.p);
      if (ab.posemb)
        for (int j = 0; j < pt.p; ++j) in[j] = 0.0;  // drop the index half
      // encoder MLP with cached preactivation
      std::vector<double> hpre(d);
      for (int j = 0; j < d; ++j) {
        double s = p.enc_b1.at(0, j);
        for (int k = 0; k < 2 * pt.p; ++k) s += in[k] * p.enc_w1.at(k, j);
        hpre[j] = s;
      }
      std::vector<double> act(d);
      for (int j = 0; j < d; ++j) act[j] = detail::leaky_tanh(hpre[j]);
      for (int o = 0; o < d; ++o) {
        double s = p.enc_b2.at(0, o);
        for (int j = 0; j < d; ++j) s += act[j] * p.enc_w2.at(j, o);
        out[o] = s;
      }
      st.enc_in[i] = std::move(in);
      st.enc_hpre[i] = std::move(hpre);
    }
    const double* pe = p.pos_emb.row(i);
    for (int j = 0; j < d; ++j) out[j] += pe[j];
  }

  // transformer layers (pre-norm, causal)
  const int heads = cfg.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat x = st.x0;
  st.layers.resize(cfg.layers);
  for (int li = 0; li < cfg.layers; ++li) {
    const auto& l = p.layer[li];
    LayerCache& c = st.layers[li];
    c.x_in = x;
    c.ln1 = detail::layer_norm(x, l.ln1_g, l.ln1_b);
    c.q = matmul(c.ln1, l.wq);
    detail::add_bias(c.q, l.bq);
    c.k = matmul(c.ln1, l.wk);
    detail::add_bias(c.k, l.bk);
    c.v = matmul(c.ln1, l.wv);
    detail::add_bias(c.v, l.bv);
    c.att.assign(heads, Mat(t_total, t_total));
    c.att_cat = Mat(t_total, d);
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      Mat& a = c.att[h];
      for (int i = 0; i < t_total; ++i) {
        double mx = -1e300;
        for (int j = 0; j <= i; ++j) {
          double s = 0.0;
          for (int k2 = 0; k2 < dh; ++k2)
            s += c.q.at(i, off + k2) * c.k.at(j, off + k2);
          s *= scale;
          a.at(i, j) = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
          a.at(i, j) = std::exp(a.at(i, j) - mx);
          z += a.at(i, j);
        }
        for (int j = 0; j <= i; ++j) a.at(i, j) /= z;
        for (int k2 = 0; k2 < dh; ++k2) {
          double s = 0.0;
          for (int j = 0; j <= i; ++j) s += a.at(i, j) * c.v.at(j, off + k2);
          c.att_cat.at(i, off + k2) = s;
        }
      }
    }
    Mat proj = matmul(c.att_cat, l.wo);
    detail::add_bias(proj, l.bo);
    c.x_mid = c.x_in;
    for (std::size_t k2 = 0; k2 < proj.v.size(); ++k2) c.x_mid.v[k2] += proj.v[k2];

    c.ln2 = detail::layer_norm(c.x_mid, l.ln2_g, l.ln2_b);
    c.mlp_pre = matmul(c.ln2, l.w1);
    detail::add_bias(c.mlp_pre, l.b1);
    c.mlp_act = c.mlp_pre;
    for (double& v : c.mlp_act.v) v = detail::gelu(v);
    Mat mlp_out = matmul(c.mlp_act, l.w2);
    detail::add_bias(mlp_out, l.b2);
    x = c.x_mid;
    for (std::size_t k2 = 0; k2 < mlp_out.v.size(); ++k2) x.v[k2] += mlp_out.v[k2];
  }
  st.pre_lnf = x;
  st.hidden = detail::layer_norm(x, p.lnf_g, p.lnf_b);

  // text logits and next-token targets
  for (int i = 0; i < t_total; ++i)
    if (st.type[i] >= 0) st.txt_rows.push_back(i);
  st.logits = Mat(static_cast<int>(st.txt_rows.size()), cfg.vocab);
  st.targets.assign(st.txt_rows.size(), -1);
  for (std::size_t r = 0; r < st.txt_rows.size(); ++r) {
    const int i = st.txt_rows[r];
    const double* h = st.hidden.row(i);
    double* z = st.logits.row(static_cast<int>(r));
    for (int vv = 0; vv < cfg.vocab; ++vv) {
      double s = p.lm_b.at(0, vv);
      for (int j = 0; j < d; ++j) s += h[j] * p.lm_w.at(j, vv);
      z[vv] = s;
    }
    if (i + 1 < t_total && st.type[i + 1] >= 0)
      st.targets[r] = st.type[i + 1];
  }

  // reconstruction path
  sensor::TsLoss ts_total;
  const int n_series = static_cast<int>(enc.patches.size());
  st.x_rec.resize(n_series);
  st.dec_hpre.resize(n_series);
  if (!ab.sensor && n_series > 0) {
    for (int si = 0; si < n_series; ++si) {
      const auto& pt = enc.patches[si];
      const auto& span = enc.seq.ts_spans[si];
      std::vector<std::vector<std::vector<double>>> patches(
          pt.d, std::vector<std::vector<double>>(pt.n, std::vector<double>(pt.p)));
      st.dec_hpre[si].resize(pt.d * pt.n);
      for (int ti = 0; ti < pt.d * pt.n; ++ti) {
        // decode from the pre-norm residual stream; the final layer norm
        // discards per-record scale, which reconstruction needs
        const double* h = st.pre_lnf.row(span.insert_pos + ti);
        std::vector<double> hpre(d);
        for (int j = 0; j < d; ++j) {
          double s = p.dec_b1.at(0, j);
          for (int k2 = 0; k2 < d; ++k2) s += h[k2] * p.dec_w1.at(k2, j);
          hpre[j] = s;
        }
        std::vector<double> act(d);
        for (int j = 0; j < d; ++j) act[j] = detail::leaky_tanh(hpre[j]);
        for (int o = 0; o < pt.p; ++o) {
          double s = p.dec_b2.at(0, o);
          for (int j = 0; j < d; ++j) s += act[j] * p.dec_w2.at(j, o);
          patches[ti / pt.n][ti % pt.n][o] = s;
        }
        st.dec_hpre[si][ti] = std::move(hpre);
      }
      st.x_rec[si] = tsembed::depatchify(patches, pt.lengths[0]);
      const auto tsl = sensor::ts_loss(st.x_rec[si], enc.series[si].values,
                                       pt.lengths[0], !ab.fft);
      ts_total.time += tsl.time / n_series;
      ts_total.freq += tsl.freq / n_series;
    }
    ts_total.total = ts_total.time + ts_total.freq;
  }
  st.loss = sensor::total_loss(sensor::txt_loss(st.logits, st.targets), ts_total, ab);
  return st;
}

// ---------------------------------------------------------------------------
// Backward pass: accumulates into a ModelParams-shaped gradient buffer.

inline void backward(const ModelParams& p, const EncodedRecord& enc,
                     const ForwardState& st, ModelParams& grad,
                     double weight = 1.0) {
  const ModelConfig& cfg = p.cfg;
  const auto& ab = cfg.ablations;
  const int d = cfg.d_model;
  const int t_total = st.t;

  Mat dhidden(t_total, d);

  // text loss
  {
    Mat dlogits = sensor::txt_loss_grad(st.logits, st.targets);
    for (auto& v : dlogits.v) v *= weight;
    for (std::size_t r = 0; r < st.txt_rows.size(); ++r) {
      const int i = st.txt_rows[r];
      const double* h = st.hidden.row(i);
      const double* dz = dlogits.row(static_cast<int>(r));
      double* dh = dhidden.row(i);
      for (int vv = 0; vv < cfg.vocab; ++vv) {
        const double g = dz[vv];
        if (g == 0.0) continue;
        grad.lm_b.at(0, vv) += g;
        for (int j = 0; j < d; ++j) {
          grad.lm_w.at(j, vv) += h[j] * g;
          dh[j] += g * p.lm_w.at(j, vv);
        }
      }
    }
  }

  // reconstruction loss; the decoder reads the pre-norm residual stream, so
  // its gradient bypasses the final layer norm
  Mat ddec(t_total, d);
  if (!ab.sensor && !enc.patches.empty()) {
    const int n_series = static_cast<int>(enc.patches.size());
    for (int si = 0; si < n_series; ++si) {
      const auto& pt = enc.patches[si];
      const auto& span = enc.seq.ts_spans[si];
      const int l = pt.lengths[0];
      auto g_rec = sensor::ts_loss_grad(st.x_rec[si], enc.series[si].values,
                                        l, !ab.fft);
      const double w = weight / n_series;
      for (int ti = 0; ti < pt.d * pt.n; ++ti) {
        const int channel = ti / pt.n;
        const int patch = ti % pt.n;
        std::vector<double> dy(pt.p, 0.0);
        bool any = false;
        for (int o = 0; o < pt.p; ++o) {
          const int tstep = patch * pt.p + o;
          if (tstep < l) {
            dy[o] = g_rec[channel][tstep] * w;
            any = true;
          }
        }
        if (!any) continue;
        const auto& hpre = st.dec_hpre[si][ti];
        const double* h = st.pre_lnf.row(span.insert_pos + ti);
        double* dh = ddec.row(span.insert_pos + ti);
        std::vector<double> act(d), dact(d, 0.0);
        for (int j = 0; j < d; ++j) act[j] = detail::leaky_tanh(hpre[j]);
        for (int o = 0; o < pt.p; ++o) {
          const double g = dy[o];
          if (g == 0.0) continue;
          grad.dec_b2.at(0, o) += g;
          for (int j = 0; j < d; ++j) {
            grad.dec_w2.at(j, o) += act[j] * g;
            dact[j] += g * p.dec_w2.at(j, o);
          }
        }
        for (int j = 0; j < d; ++j) {
          const double dpre = dact[j] * detail::leaky_tanh_grad(hpre[j]);
          if (dpre == 0.0) continue;
          grad.dec_b1.at(0, j) += dpre;
          for (int k2 = 0; k2 < d; ++k2) {
            grad.dec_w1.at(k2, j) += h[k2] * dpre;
            dh[k2] += dpre * p.dec_w1.at(k2, j);
          }
        }
      }
    }
  }

  // final layer norm
  Mat dx(t_total, d);
  detail::layer_norm_backward(st.pre_lnf, p.lnf_g, dhidden, dx, grad.lnf_g,
                              grad.lnf_b);
  for (std::size_t k2 = 0; k2 < dx.v.size(); ++k2) dx.v[k2] += ddec.v[k2];

  // transformer layers, reversed
  const int heads = cfg.heads;
  const int dh_dim = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh_dim));
  for (int li = cfg.layers - 1; li >= 0; --li) {
    const auto& l = p.layer[li];
    auto& gl = grad.layer[li];
    const LayerCache& c = st.layers[li];

    // MLP block: x_out = x_mid + gelu(ln2 w1 + b1) w2 + b2
    Mat dmlp_out = dx;  // gradient w.r.t. mlp_out equals dx
    Mat dact(t_total, 4 * d);
    matmul_nt_acc(dmlp_out, l.w2, dact);
    matmul_tn_acc(c.mlp_act, dmlp_out, gl.w2);
    detail::bias_grad(dmlp_out, gl.b2);
    Mat dpre = dact;
    for (std::size_t i2 = 0; i2 < dpre.v.size(); ++i2)
      dpre.v[i2] *= detail::gelu_grad(c.mlp_pre.v[i2]);
    Mat dln2(t_total, d);
    matmul_nt_acc(dpre, l.w1, dln2);
    matmul_tn_acc(c.ln2, dpre, gl.w1);
    detail::bias_grad(dpre, gl.b1);
    Mat dx_mid = dx;  // residual path
    detail::layer_norm_backward(c.x_mid, l.ln2_g, dln2, dx_mid, gl.ln2_g, gl.ln2_b);

    // attention block: x_mid = x_in + (att_cat wo + bo)
    Mat dproj = dx_mid;
    Mat datt_cat(t_total, d);
    matmul_nt_acc(dproj, l.wo, datt_cat);
    matmul_tn_acc(c.att_cat, dproj, gl.wo);
    detail::bias_grad(dproj, gl.bo);

    Mat dq(t_total, d), dk(t_total, d), dv(t_total, d);
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh_dim;
      const Mat& a = c.att[h];
      for (int i = 0; i < t_total; ++i) {
        // dA_ij = sum_k datt_cat_ik * v_jk ; softmax backward row-wise
        double row_dot = 0.0;
        std::vector<double> da(i + 1);
        for (int j = 0; j <= i; ++j) {
          double s = 0.0;
          for (int k2 = 0; k2 < dh_dim; ++k2)
            s += datt_cat.at(i, off + k2) * c.v.at(j, off + k2);
          da[j] = s;
          row_dot += s * a.at(i, j);
        }
        for (int j = 0; j <= i; ++j) {
          const double aij = a.at(i, j);
          // dv
          for (int k2 = 0; k2 < dh_dim; ++k2)
            dv.at(j, off + k2) += aij * datt_cat.at(i, off + k2);
          const double ds = aij * (da[j] - row_dot) * scale;
          if (ds == 0.0) continue;
          for (int k2 = 0; k2 < dh_dim; ++k2) {
            dq.at(i, off + k2) += ds * c.k.at(j, off + k2);
            dk.at(j, off + k2) += ds * c.q.at(i, off + k2);
          }
        }
      }
    }
    Mat dln1(t_total, d);
    matmul_nt_acc(dq, l.wq, dln1);
    matmul_tn_acc(c.ln1, dq, gl.wq);
    detail::bias_grad(dq, gl.bq);
    matmul_nt_acc(dk, l.wk, dln1);
    matmul_tn_acc(c.ln1, dk, gl.wk);
    detail::bias_grad(dk, gl.bk);
    matmul_nt_acc(dv, l.wv, dln1);
    matmul_tn_acc(c.ln1, dv, gl.wv);
    detail::bias_grad(dv, gl.bv);

    Mat dx_in = dx_mid;  // residual path
    detail::layer_norm_backward(c.x_in, l.ln1_g, dln1, dx_in, gl.ln1_g, gl.ln1_b);
    dx = std::move(dx_in);
  }

  // embeddings
  for (int i = 0; i < t_total; ++i) {
    const double* dxi = dx.row(i);
    for (int j = 0; j < d; ++j) grad.pos_emb.at(i, j) += dxi[j];
    if (st.type[i] >= 0) {
      for (int j = 0; j < d; ++j) grad.tok_emb.at(st.type[i], j) += dxi[j];
    } else {
      const auto& in = st.enc_in[i];
      const auto& hpre = st.enc_hpre[i];
      std::vector<double> act(d), dact(d, 0.0);
      for (int j = 0; j < d; ++j) act[j] = detail::leaky_tanh(hpre[j]);
      for (int o = 0; o < d; ++o) {
        const double g = dxi[o];
        if (g == 0.0) continue;
        grad.enc_b2.at(0, o) += g;
        for (int j = 0; j < d; ++j) {
          grad.enc_w2.at(j, o) += act[j] * g;
          dact[j] += g * p.enc_w2.at(j, o);
        }
      }
      const int in_dim = static_cast<int>(in.size());
      for (int j = 0; j < d; ++j) {
        const double dpre = dact[j] * detail::leaky_tanh_grad(hpre[j]);
        if (dpre == 0.0) continue;
        grad.enc_b1.at(0, j) += dpre;
        for (int k2 = 0; k2 < in_dim; ++k2)
          grad.enc_w1.at(k2, j) += in[k2] * dpre;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Training.

struct DivergenceError : std::runtime_error {
  LossBreakdown breakdown;
  explicit DivergenceError(const std::string& what, const LossBreakdown& b)
      : std::runtime_error(what), breakdown(b) {}
};

inline LossBreakdown accumulate_gradients(const ModelParams& p,
                                          const std::vector<QARecord>& batch,
                                          ModelParams& grad) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  LossBreakdown total;
  const double w = 1.0 / batch.size();
  for (const auto& rec : batch) {
    const EncodedRecord enc = encode_record(rec, p.cfg.p, true);
    const ForwardState st = forward(p, enc);
    backward(p, enc, st, grad, w);
    total.txt += st.loss.txt * w;
    total.ts_time += st.loss.ts_time * w;
    total.ts_freq += st.loss.ts_freq * w;
  }
  total.total = total.txt + total.ts_time + total.ts_freq;
  return total;
}

inline LossBreakdown train_step(ModelParams& p, const std::vector<QARecord>& batch,
                                double lr) {
  ModelParams grad = make_zero_like(p);
  const LossBreakdown loss = accumulate_gradients(p, batch, grad);
  if (!std::isfinite(loss.total)) {
    std::string which = !std::isfinite(loss.txt)       ? "txt"
                        : !std::isfinite(loss.ts_time) ? "ts_time"
                                                       : "ts_freq";
    throw DivergenceError("non-finite loss component: " + which, loss);
  }
  std::vector<Mat*> pv, gv;
  visit_tensors(p, [&](const std::string&, Mat& m) { pv.push_back(&m); });
  visit_tensors(grad, [&](const std::string&, Mat& m) { gv.push_back(&m); });
  for (std::size_t i = 0; i < pv.size(); ++i)
    for (std::size_t j = 0; j < pv[i]->v.size(); ++j)
      pv[i]->v[j] -= lr * gv[i]->v[j];
  return loss;
}

inline double batch_loss(const ModelParams& p, const std::vector<QARecord>& batch) {
  double total = 0.0;
  for (const auto& rec : batch) {
    const EncodedRecord enc = encode_record(rec, p.cfg.p, true);
    total += forward(p, enc).loss.total / batch.size();
  }
  return total;
}

// Central finite differences on >= min_coords coordinates spanning every
// tensor; returns the max relative error against the analytic gradient.
inline double grad_check(ModelParams& p, const std::vector<QARecord>& batch,
                         double eps = 1e-5, int min_coords = 200) {
  ModelParams grad = make_zero_like(p);
  accumulate_gradients(p, batch, grad);
  std::vector<Mat*> pv, gv;
  visit_tensors(p, [&](const std::string&, Mat& m) { pv.push_back(&m); });
  visit_tensors(grad, [&](const std::string&, Mat& m) { gv.push_back(&m); });
  const int per_tensor = std::max(
      1, (min_coords + static_cast<int>(pv.size()) - 1) / static_cast<int>(pv.size()));
  Rng rng(12345);
  double max_rel = 0.0;
  for (std::size_t ti = 0; ti < pv.size(); ++ti) {
    Mat& m = *pv[ti];
    for (int c = 0; c < per_tensor; ++c) {
      const std::size_t idx = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(m.v.size()) - 1));
      const double saved = m.v[idx];
      m.v[idx] = saved + eps;
      const double lp = batch_loss(p, batch);
      m.v[idx] = saved - eps;
      const double lm = batch_loss(p, batch);
      m.v[idx] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double analytic = gv[ti]->v[idx];
      const double denom = std::max(std::abs(numeric) + std::abs(analytic), 1e-6);
      max_rel = std::max(max_rel, std::abs(numeric - analytic) / denom);
    }
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Greedy decoding.

inline std::string generate_text(const ModelParams& p, const QARecord& rec,
                                 int max_new = 128) {
  EncodedRecord enc = encode_record(rec, p.cfg.p, false);
  std::vector<int> out;
  for (int step = 0; step < max_new; ++step) {
    const ForwardState st = forward(p, enc);
    const double* z = st.logits.row(st.logits.rows - 1);
    int best = 0;
    for (int vv = 1; vv < p.cfg.vocab; ++vv)
      if (z[vv] > z[best]) best = vv;
    if (best == kEos) break;
    out.push_back(best);
    enc.seq.text_ids.push_back(best);
    if (enc.seq.total_length() >= p.cfg.max_seq) break;
  }
  return decode_ids(out);
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary with a CRC-32 trailer.

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t n,
                           std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (std::size_t i = 0; i < n; ++i)
    crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

}  // namespace detail

inline constexpr char kCkptMagic[8] = {'T', 'S', 'C', 'K', 'P', 'T', '0', '1'};

inline void save_checkpoint(const ModelParams& p, const std::string& path) {
  std::string blob;
  blob.append(kCkptMagic, sizeof(kCkptMagic));
  const std::string cfg = to_json(p.cfg).dump();
  const std::uint32_t cfg_len = static_cast<std::uint32_t>(cfg.size());
  blob.append(reinterpret_cast<const char*>(&cfg_len), sizeof(cfg_len));
  blob.append(cfg);
  const std::uint64_t n = param_count(p);
  blob.append(reinterpret_cast<const char*>(&n), sizeof(n));
  visit_tensors(const_cast<ModelParams&>(p), [&](const std::string&, Mat& m) {
    blob.append(reinterpret_cast<const char*>(m.v.data()),
                m.v.size() * sizeof(double));
  });
  const std::uint32_t crc = detail::crc32(
      reinterpret_cast<const unsigned char*>(blob.data()), blob.size());
  blob.append(reinterpret_cast<const char*>(&crc), sizeof(crc));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("checkpoint write failure: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (blob.size() < sizeof(kCkptMagic) + sizeof(std::uint32_t))
    throw std::runtime_error("checkpoint corrupted: truncated file");
  const std::uint32_t stored_crc = [&] {
    std::uint32_t c;
    std::memcpy(&c, blob.data() + blob.size() - sizeof(c), sizeof(c));
    return c;
  }();
  const std::uint32_t actual_crc =
      detail::crc32(reinterpret_cast<const unsigned char*>(blob.data()),
                    blob.size() - sizeof(std::uint32_t));
  if (stored_crc != actual_crc)
    throw std::runtime_error("checkpoint corrupted: checksum mismatch");
  std::size_t off = 0;
  if (std::memcmp(blob.data(), kCkptMagic, sizeof(kCkptMagic)) != 0) {
    if (std::memcmp(blob.data(), "TSCKPT", 6) == 0)
      throw std::runtime_error("checkpoint version mismatch");
    throw std::runtime_error("not a checkpoint file");
  }
  off += sizeof(kCkptMagic);
  std::uint32_t cfg_len;
  std::memcpy(&cfg_len, blob.data() + off, sizeof(cfg_len));
  off += sizeof(cfg_len);
  ModelParams p;
  p.cfg = config_from_json(json::parse(blob.substr(off, cfg_len)));
  off += cfg_len;
  shape_params(p);
  std::uint64_t n;
  std::memcpy(&n, blob.data() + off, sizeof(n));
  off += sizeof(n);
  if (n != param_count(p))
    throw std::runtime_error("checkpoint corrupted: parameter count mismatch");
  visit_tensors(p, [&](const std::string&, Mat& m) {
    std::memcpy(m.v.data(), blob.data() + off, m.v.size() * sizeof(double));
    off += m.v.size() * sizeof(double);
  });
  return p;
}

inline json loss_to_json(int step, const LossBreakdown& b) {
  return json{{"step", step},       {"total", b.total},
              {"txt", b.txt},       {"ts_time", b.ts_time},
              {"ts_freq", b.ts_freq}};
}

}  // namespace timesense::toymodel
