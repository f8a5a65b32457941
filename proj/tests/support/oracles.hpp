#pragma once

// Plain-loop reference implementations of the network layers. They share no
// code with the library beyond reading parameter values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "logcad/layers.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Row-major (rows x cols) matrix times vector.
inline Vec matvec(const logcad::Tensor<double>& m, const Vec& x) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Vec y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[r] += m.values()[r * cols + c] * x[c];
  return y;
}

inline Vec values(const logcad::Tensor<double>& t) { return Vec(t.values().begin(), t.values().end()); }

struct LstmOut {
  Vec h, c;
};

inline LstmOut lstm_cell(const logcad::LstmParams<double>& p, const Vec& x, const Vec& h_prev, const Vec& c_prev) {
  const std::size_t n = p.hidden_dim;
  const Vec wx = matvec(p.W, x);
  const Vec uh = matvec(p.U, h_prev);
  LstmOut out{Vec(n), Vec(n)};
  for (std::size_t j = 0; j < n; ++j) {
    auto pre = [&](std::size_t block) { return wx[block * n + j] + uh[block * n + j] + p.b.values()[block * n + j]; };
    const double i = sigmoid(pre(0));
    const double f = sigmoid(pre(1));
    const double g = std::tanh(pre(2));
    const double o = sigmoid(pre(3));
    out.c[j] = f * c_prev[j] + i * g;
    out.h[j] = o * std::tanh(out.c[j]);
  }
  return out;
}

struct AttentionOut {
  Vec context, weights;
};

inline AttentionOut attention(const logcad::AttentionParams<double>& p, const std::vector<Vec>& H, const Vec& s) {
  const std::size_t enc = p.Uh.dim(0), attn = p.Uh.dim(1);
  const Vec q = matvec(p.Us, s);
  Vec scores(H.size(), 0.0);
  for (std::size_t i = 0; i < H.size(); ++i)
    for (std::size_t a = 0; a < attn; ++a) {
      double key = 0;
      for (std::size_t k = 0; k < enc; ++k) key += H[i][k] * p.Uh.values()[k * attn + a];
      scores[i] += key * q[a];
    }
  const double top = *std::max_element(scores.begin(), scores.end());
  double z = 0;
  for (auto& v : scores) z += (v = std::exp(v - top));
  AttentionOut out{Vec(enc, 0.0), Vec(H.size())};
  for (std::size_t i = 0; i < H.size(); ++i) {
    out.weights[i] = scores[i] / z;
    for (std::size_t k = 0; k < enc; ++k) out.context[k] += out.weights[i] * H[i][k];
  }
  return out;
}

inline Vec gate(const logcad::GateParams<double>& p, const Vec& s, const Vec& f) {
  Vec fs = f;
  fs.insert(fs.end(), s.begin(), s.end());
  const Vec zpre = matvec(p.Wz, fs);
  const Vec rpre = matvec(p.Wr, fs);
  Vec rf(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) rf[j] = sigmoid(rpre[j] + p.br.values()[j]) * f[j];
  rf.insert(rf.end(), s.begin(), s.end());
  const Vec spre = matvec(p.Ws, rf);
  Vec out(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double z = sigmoid(zpre[j] + p.bz.values()[j]);
    const double cand = std::tanh(spre[j] + p.bs.values()[j]);
    out[j] = (1 - z) * s[j] + z * cand;
  }
  return out;
}

inline Vec iattention_mask(const logcad::MaskNetParams<double>& p, const std::vector<Vec>& H, const Vec& x) {
  const std::size_t enc = p.Wf.dim(0), hidden = p.Wf.dim(1);
  Vec avg(hidden, 0.0);
  for (const auto& h : H)
    for (std::size_t j = 0; j < hidden; ++j) {
      double v = p.bf.values()[j];
      for (std::size_t k = 0; k < enc; ++k) v += h[k] * p.Wf.values()[k * hidden + j];
      avg[j] += std::tanh(v) / static_cast<double>(H.size());
    }
  const Vec mpre = matvec(p.Wm, avg);
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] * sigmoid(mpre[j] + p.bm.values()[j]);
  return out;
}

// ids must not carry trailing padding.
// Pre-pooling convolution outputs: one row of window values per output channel.
inline std::vector<Vec> char_cnn_windows(const logcad::CharCnnParams<double>& p, const std::vector<int>& ids) {
  const std::size_t dim = p.embedding.dim(1);
  auto emb = [&](int id, std::size_t k) { return p.embedding.values()[static_cast<std::size_t>(id) * dim + k]; };
  std::vector<Vec> out;
  for (std::size_t bank = 0; bank < p.kernels.size(); ++bank) {
    const std::size_t width = p.widths[bank];
    const std::size_t channels = p.kernels[bank].dim(1);
    const std::size_t positions = std::max(ids.size(), width) - width + 1;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      Vec windows;
      for (std::size_t start = 0; start < positions; ++start) {
        double v = p.biases[bank].values()[ch];
        for (std::size_t j = 0; j < width; ++j) {
          const int id = start + j < ids.size() ? ids[start + j] : logcad::kCharPad;
          for (std::size_t k = 0; k < dim; ++k) v += emb(id, k) * p.kernels[bank].values()[(j * dim + k) * channels + ch];
        }
        windows.push_back(v);
      }
      out.push_back(windows);
    }
  }
  return out;
}

inline Vec char_cnn(const logcad::CharCnnParams<double>& p, const std::vector<int>& ids) {
  Vec out;
  for (const auto& w : char_cnn_windows(p, ids)) out.push_back(*std::max_element(w.begin(), w.end()));
  return out;
}

// Smallest gap between the best and second-best window over all channels;
// the pooled output is differentiable wherever perturbations stay below it.
inline double char_cnn_pool_margin(const logcad::CharCnnParams<double>& p, const std::vector<int>& ids) {
  double margin = std::numeric_limits<double>::infinity();
  for (auto w : char_cnn_windows(p, ids)) {
    if (w.size() < 2) continue;
    std::partial_sort(w.begin(), w.begin() + 2, w.end(), std::greater<>());
    margin = std::min(margin, w[0] - w[1]);
  }
  return margin;
}

}  // namespace oracle
