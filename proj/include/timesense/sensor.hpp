#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "timesense/core.hpp"
#include "timesense/matrix.hpp"

namespace timesense::sensor {

struct Ablations {
  bool fft = false;     // drop the frequency-domain reconstruction term
  bool sensor = false;  // drop the whole reconstruction path
  bool posemb = false;  // drop the index rows fed to the patch encoder
};

// ---------------------------------------------------------------------------
// Modality decoupling.

struct HiddenStates {
  Mat h;               // T x H_model
  int split_point = 0; // number of leading time-series rows
};

inline std::pair<Mat, Mat> split_modalities(const HiddenStates& hs) {
  const int t = hs.h.rows;
  if (hs.split_point < 0 || hs.split_point > t)
    throw std::invalid_argument("split_point out of range");
  Mat ts(hs.split_point, hs.h.cols);
  Mat txt(t - hs.split_point, hs.h.cols);
  for (int i = 0; i < hs.split_point; ++i)
    for (int j = 0; j < hs.h.cols; ++j) ts.at(i, j) = hs.h.at(i, j);
  for (int i = hs.split_point; i < t; ++i)
    for (int j = 0; j < hs.h.cols; ++j) txt.at(i - hs.split_point, j) = hs.h.at(i, j);
  return {std::move(ts), std::move(txt)};
}

// ---------------------------------------------------------------------------
// Unnormalized DFT, direct O(L^2) sums: F_k = sum_t x_t e^{-j 2 pi k t / L}.

struct Spectrum {
  std::vector<double> re;
  std::vector<double> im;
};

inline Spectrum dft(const std::vector<double>& x) {
  const int l = static_cast<int>(x.size());
  Spectrum s;
  s.re.assign(l, 0.0);
  s.im.assign(l, 0.0);
  const double w = 2.0 * std::numbers::pi / l;
  // real input: compute the lower half and mirror, so conjugate symmetry
  // F_{L-k} = conj(F_k) holds exactly
  for (int k = 0; k <= l / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (int t = 0; t < l; ++t) {
      const double theta = w * k * t;
      re += x[t] * std::cos(theta);
      im -= x[t] * std::sin(theta);
    }
    s.re[k] = re;
    s.im[k] = im;
    if (k > 0 && k * 2 != l) {
      s.re[l - k] = re;
      s.im[l - k] = -im;
    }
  }
  if (l % 2 == 0 && l > 0) s.im[l / 2] = 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Reconstruction loss: mean-reduced time-domain MSE plus mean-reduced squared
// spectral difference, both over the valid prefix of each channel.

struct TsLoss {
  double total = 0.0;
  double time = 0.0;
  double freq = 0.0;
};

inline TsLoss ts_loss(const std::vector<std::vector<double>>& x_rec,
                      const std::vector<std::vector<double>>& x, int valid_len,
                      bool with_freq = true) {
  const int d = static_cast<int>(x.size());
  if (static_cast<int>(x_rec.size()) != d)
    throw std::invalid_argument("ts_loss: channel count mismatch");
  TsLoss out;
  const double denom = static_cast<double>(d) * valid_len;
  for (int c = 0; c < d; ++c) {
    if (static_cast<int>(x_rec[c].size()) < valid_len ||
        static_cast<int>(x[c].size()) < valid_len)
      throw std::invalid_argument("ts_loss: series shorter than valid_len");
    std::vector<double> err(valid_len);
    for (int t = 0; t < valid_len; ++t) {
      err[t] = x_rec[c][t] - x[c][t];
      out.time += err[t] * err[t] / denom;
    }
    if (with_freq) {
      // F(x_rec) - F(x) == F(err) by linearity
      const Spectrum s = dft(err);
      for (int k = 0; k < valid_len; ++k)
        out.freq += (s.re[k] * s.re[k] + s.im[k] * s.im[k]) / denom;
    }
  }
  out.total = out.time + out.freq;
  return out;
}

// d(ts_loss)/d(x_rec), same reduction as above. The frequency term's adjoint
// is the real inverse-transform of the spectral difference.
inline std::vector<std::vector<double>> ts_loss_grad(
    const std::vector<std::vector<double>>& x_rec,
    const std::vector<std::vector<double>>& x, int valid_len,
    bool with_freq = true) {
  const int d = static_cast<int>(x.size());
  const double denom = static_cast<double>(d) * valid_len;
  std::vector<std::vector<double>> g(d, std::vector<double>(valid_len, 0.0));
  const double w = 2.0 * std::numbers::pi / valid_len;
  for (int c = 0; c < d; ++c) {
    std::vector<double> err(valid_len);
    for (int t = 0; t < valid_len; ++t) {
      err[t] = x_rec[c][t] - x[c][t];
      g[c][t] = 2.0 * err[t] / denom;
    }
    if (with_freq) {
      const Spectrum s = dft(err);
      for (int t = 0; t < valid_len; ++t) {
        double acc = 0.0;
        for (int k = 0; k < valid_len; ++k) {
          const double theta = w * k * t;
          acc += s.re[k] * std::cos(theta) - s.im[k] * std::sin(theta);
        }
        g[c][t] += 2.0 * acc / denom;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Textual cross-entropy, mean over unmasked positions. target < 0 == masked.

inline double txt_loss(const Mat& logits, const std::vector<int>& targets) {
  if (static_cast<int>(targets.size()) != logits.rows)
    throw std::invalid_argument("txt_loss: target count mismatch");
  double loss = 0.0;
  int count = 0;
  for (int i = 0; i < logits.rows; ++i) {
    const int y = targets[i];
    if (y < 0) continue;
    if (y >= logits.cols) throw std::invalid_argument("txt_loss: target out of range");
    const double* z = logits.row(i);
    double zmax = z[0];
    for (int j = 1; j < logits.cols; ++j) zmax = std::max(zmax, z[j]);
    double lse = 0.0;
    for (int j = 0; j < logits.cols; ++j) lse += std::exp(z[j] - zmax);
    loss += std::log(lse) + zmax - z[y];
    ++count;
  }
  return count > 0 ? loss / count : 0.0;
}

// Gradient w.r.t. logits: (softmax - onehot) / unmasked count.
inline Mat txt_loss_grad(const Mat& logits, const std::vector<int>& targets) {
  Mat g(logits.rows, logits.cols);
  int count = 0;
  for (int y : targets)
    if (y >= 0) ++count;
  if (count == 0) return g;
  for (int i = 0; i < logits.rows; ++i) {
    const int y = targets[i];
    if (y < 0) continue;
    const double* z = logits.row(i);
    double zmax = z[0];
    for (int j = 1; j < logits.cols; ++j) zmax = std::max(zmax, z[j]);
    double lse = 0.0;
    for (int j = 0; j < logits.cols; ++j) lse += std::exp(z[j] - zmax);
    double* gr = g.row(i);
    for (int j = 0; j < logits.cols; ++j)
      gr[j] = std::exp(z[j] - zmax) / lse / count;
    gr[y] -= 1.0 / count;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Joint objective. Ablation flags zero the corresponding components.

inline LossBreakdown total_loss(double txt, const TsLoss& ts,
                                const Ablations& ab = {}) {
  LossBreakdown b;
  b.txt = txt;
  if (!ab.sensor) {
    b.ts_time = ts.time;
    b.ts_freq = ab.fft ? 0.0 : ts.freq;
  }
  b.total = b.txt + b.ts_time + b.ts_freq;
  return b;
}

}  // namespace timesense::sensor
