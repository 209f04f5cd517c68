#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "timesense/core.hpp"
#include "timesense/matrix.hpp"

namespace timesense::tsembed {

// ---------------------------------------------------------------------------
// Index augmentation: per channel, row 0 holds absolute step indices, row 1
// the raw values.

inline std::vector<Mat> augment_index(const MultiSeries& s) {
  const auto v = validate_series(s);
  if (!v) throw std::invalid_argument(v.message);
  std::vector<Mat> aug;
  aug.reserve(s.values.size());
  for (const auto& channel : s.values) {
    Mat m(2, s.length);
    for (int t = 0; t < s.length; ++t) {
      m.at(0, t) = static_cast<double>(t);
      m.at(1, t) = channel[t];
    }
    aug.push_back(std::move(m));
  }
  return aug;
}

// ---------------------------------------------------------------------------
// PatchTensor: B x D x N x 2P patch data plus a B x D x N x P validity mask
// over time steps. Each flattened patch is the row-major reshape of the 2 x P
// slice: P index entries followed by P value entries. Padded slots hold 0.

struct PatchTensor {
  int b = 0, d = 0, n = 0, p = 0;
  std::vector<double> data;      // b*d*n*2p
  std::vector<char> valid_mask;  // b*d*n*p
  std::vector<int> lengths;      // per-item L

  double* patch(int bi, int di, int ni) {
    return data.data() + (((static_cast<std::size_t>(bi) * d + di) * n + ni) * 2 * p);
  }
  const double* patch(int bi, int di, int ni) const {
    return data.data() + (((static_cast<std::size_t>(bi) * d + di) * n + ni) * 2 * p);
  }
  char* mask(int bi, int di, int ni) {
    return valid_mask.data() + (((static_cast<std::size_t>(bi) * d + di) * n + ni) * p);
  }
  const char* mask(int bi, int di, int ni) const {
    return valid_mask.data() + (((static_cast<std::size_t>(bi) * d + di) * n + ni) * p);
  }
};

inline int num_patches(int l, int p) { return (l + p - 1) / p; }

inline PatchTensor patchify(const std::vector<Mat>& aug, int p) {
  if (p < 1) throw std::invalid_argument("patch length must be positive");
  if (aug.empty()) throw std::invalid_argument("patchify: empty input");
  const int d = static_cast<int>(aug.size());
  const int l = aug[0].cols;
  const int n = num_patches(l, p);
  PatchTensor pt;
  pt.b = 1;
  pt.d = d;
  pt.n = n;
  pt.p = p;
  pt.lengths = {l};
  pt.data.assign(static_cast<std::size_t>(d) * n * 2 * p, 0.0);
  pt.valid_mask.assign(static_cast<std::size_t>(d) * n * p, 0);
  for (int c = 0; c < d; ++c) {
    for (int ni = 0; ni < n; ++ni) {
      double* out = pt.patch(0, c, ni);
      char* m = pt.mask(0, c, ni);
      for (int j = 0; j < p; ++j) {
        const int t = ni * p + j;
        if (t < l) {
          out[j] = aug[c].at(0, t);      // index half
          out[p + j] = aug[c].at(1, t);  // value half
          m[j] = 1;
        }
      }
    }
  }
  return pt;
}

inline PatchTensor pad_batch(const std::vector<PatchTensor>& items) {
  if (items.empty()) throw std::invalid_argument("pad_batch: empty batch");
  const int d = items[0].d;
  const int p = items[0].p;
  int n = 0, b = 0;
  for (const auto& it : items) {
    if (it.d != d || it.p != p)
      throw std::invalid_argument("pad_batch: mixed D or P");
    n = std::max(n, it.n);
    b += it.b;
  }
  PatchTensor out;
  out.b = b;
  out.d = d;
  out.n = n;
  out.p = p;
  out.data.assign(static_cast<std::size_t>(b) * d * n * 2 * p, 0.0);
  out.valid_mask.assign(static_cast<std::size_t>(b) * d * n * p, 0);
  int bo = 0;
  for (const auto& it : items) {
    for (int bi = 0; bi < it.b; ++bi, ++bo) {
      out.lengths.push_back(it.lengths[bi]);
      for (int c = 0; c < d; ++c) {
        for (int ni = 0; ni < it.n; ++ni) {
          const double* src = it.patch(bi, c, ni);
          double* dst = out.patch(bo, c, ni);
          for (int j = 0; j < 2 * p; ++j) dst[j] = src[j];
          const char* sm = it.mask(bi, c, ni);
          char* dm = out.mask(bo, c, ni);
          for (int j = 0; j < p; ++j) dm[j] = sm[j];
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared patch MLP f: R^{2P} -> R^H, two affine layers with tanh between.

struct Mlp {
  Mat w1;                  // in x hidden
  std::vector<double> b1;  // hidden
  Mat w2;                  // hidden x out
  std::vector<double> b2;  // out

  int in_dim() const { return w1.rows; }
  int out_dim() const { return w2.cols; }

  // y = w2^T tanh(w1^T x + b1) + b2; h_pre optionally captured for backprop
  void apply(const double* x, double* y, std::vector<double>* h_pre = nullptr) const {
    const int hidden = w1.cols;
    std::vector<double> h(hidden);
    for (int j = 0; j < hidden; ++j) {
      double s = b1[j];
      for (int i = 0; i < w1.rows; ++i) s += x[i] * w1.at(i, j);
      h[j] = s;
    }
    if (h_pre) *h_pre = h;
    for (int j = 0; j < hidden; ++j) h[j] = std::tanh(h[j]);
    for (int o = 0; o < w2.cols; ++o) {
      double s = b2[o];
      for (int j = 0; j < hidden; ++j) s += h[j] * w2.at(j, o);
      y[o] = s;
    }
  }
};

struct TsTokens {
  std::vector<Mat> tokens;  // per batch item: (D*N) x H, token index = d*N + n
  int h = 0;
};

inline TsTokens encode_patches(const Mlp& enc, const PatchTensor& pt) {
  if (enc.in_dim() != 2 * pt.p)
    throw std::invalid_argument("encode_patches: encoder shaped for wrong 2P");
  TsTokens out;
  out.h = enc.out_dim();
  out.tokens.reserve(pt.b);
  for (int bi = 0; bi < pt.b; ++bi) {
    Mat tok(pt.d * pt.n, out.h);
    for (int c = 0; c < pt.d; ++c)
      for (int ni = 0; ni < pt.n; ++ni)
        enc.apply(pt.patch(bi, c, ni), tok.row(c * pt.n + ni));
    out.tokens.push_back(std::move(tok));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fusion: time-series blocks at the sequence head, each wrapped in marker
// tokens, followed by all text tokens.

struct TsSpan {
  int insert_pos = 0;  // position of the first ts token
  int series = 0;
  int count = 0;
};

struct TokenSeq {
  std::vector<int> text_ids;
  std::vector<TsSpan> ts_spans;
  int marker_open = 0;
  int marker_close = 0;

  int total_length() const {
    int t = static_cast<int>(text_ids.size());
    for (const auto& s : ts_spans) t += s.count + 2;
    return t;
  }
};

inline int count_placeholders(const std::string& text) {
  int count = 0;
  std::size_t pos = 0;
  while ((pos = text.find("<ts:", pos)) != std::string::npos) {
    ++count;
    pos += 4;
  }
  return count;
}

inline TokenSeq fuse(const std::vector<int>& ts_token_counts,
                     const std::vector<int>& text_ids, int placeholder_count,
                     int marker_open, int marker_close) {
  if (placeholder_count != static_cast<int>(ts_token_counts.size()))
    throw std::invalid_argument("fuse: placeholder/series count mismatch");
  TokenSeq seq;
  seq.text_ids = text_ids;
  seq.marker_open = marker_open;
  seq.marker_close = marker_close;
  int pos = 0;
  for (int s = 0; s < static_cast<int>(ts_token_counts.size()); ++s) {
    TsSpan span;
    span.insert_pos = pos + 1;  // after the opening marker
    span.series = s;
    span.count = ts_token_counts[s];
    seq.ts_spans.push_back(span);
    pos += span.count + 2;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Exact left inverse of the value half of patchify: concatenate and truncate.

inline std::vector<std::vector<double>> depatchify(
    const std::vector<std::vector<std::vector<double>>>& patches, int l) {
  const int d = static_cast<int>(patches.size());
  std::vector<std::vector<double>> out(d);
  for (int c = 0; c < d; ++c) {
    const int n = static_cast<int>(patches[c].size());
    const int p = n > 0 ? static_cast<int>(patches[c][0].size()) : 0;
    if (n * p < l) throw std::invalid_argument("depatchify: N*P < L");
    out[c].reserve(l);
    for (int ni = 0; ni < n && static_cast<int>(out[c].size()) < l; ++ni)
      for (int j = 0; j < p && static_cast<int>(out[c].size()) < l; ++j)
        out[c].push_back(patches[c][ni][j]);
  }
  return out;
}

}  // namespace timesense::tsembed
