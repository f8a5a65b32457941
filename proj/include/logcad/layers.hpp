#pragma once

// Neural building blocks: LSTM cell and bidirectional stacked encoder,
// character-level CNN, bilinear attention, context-fusion gate and the
// soft mask network of the I-Attention baseline.

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "logcad/random.hpp"
#include "logcad/tensor.hpp"

namespace logcad {

inline constexpr double kInitRange = 0.08;

template <typename T>
Tensor<T> init_uniform(Shape shape, Rng& rng) {
  return Tensor<T>::uniform(std::move(shape), -kInitRange, kInitRange, rng, true);
}

// ---------------------------------------------------------------------------
// LSTM

// Gate blocks are stored stacked in the order [input, forget, candidate, output];
// W is (4h x in), U is (4h x h).
template <typename T>
struct LstmParams {
  Tensor<T> W, U, b;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  static LstmParams init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
    LstmParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    p.W = init_uniform<T>({4 * hidden_dim, input_dim}, rng);
    p.U = init_uniform<T>({4 * hidden_dim, hidden_dim}, rng);
    p.b = init_uniform<T>({4 * hidden_dim}, rng);
    for (std::size_t i = hidden_dim; i < 2 * hidden_dim; ++i) p.b[i] = T(1);
    return p;
  }

  static LstmParams zeros(std::size_t input_dim, std::size_t hidden_dim) {
    LstmParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    p.W = Tensor<T>::zeros({4 * hidden_dim, input_dim}, true);
    p.U = Tensor<T>::zeros({4 * hidden_dim, hidden_dim}, true);
    p.b = Tensor<T>::zeros({4 * hidden_dim}, true);
    return p;
  }
};

template <typename T>
struct LstmState {
  Tensor<T> h, c;

  static LstmState zeros(std::size_t hidden_dim) {
    return {Tensor<T>::zeros({hidden_dim}), Tensor<T>::zeros({hidden_dim})};
  }
};

template <typename T>
LstmState<T> lstm_cell(Graph<T>& g, const LstmParams<T>& p, const Tensor<T>& x, const LstmState<T>& state) {
  const std::size_t h = p.hidden_dim;
  if (x.rank() != 1 || x.size() != p.input_dim)
    throw ShapeError("lstm_cell", p.W.shape(), x.shape());
  if (state.h.size() != h || state.c.size() != h)
    throw ShapeError("lstm_cell", p.U.shape(), state.h.shape());
  auto pre = g.add(g.add(g.matmul(p.W, x), g.matmul(p.U, state.h)), p.b);
  auto in_gate = g.sigmoid(g.slice(pre, 0, h));
  auto forget = g.sigmoid(g.slice(pre, h, 2 * h));
  auto candidate = g.tanh(g.slice(pre, 2 * h, 3 * h));
  auto out_gate = g.sigmoid(g.slice(pre, 3 * h, 4 * h));
  auto c = g.add(g.mul(forget, state.c), g.mul(in_gate, candidate));
  auto hidden = g.mul(out_gate, g.tanh(c));
  return {hidden, c};
}

// ---------------------------------------------------------------------------
// Bidirectional stacked encoder

template <typename T>
struct BiLstmParams {
  std::vector<LstmParams<T>> forward;
  std::vector<LstmParams<T>> backward;

  // `width` is the concatenated output width; each direction gets width / 2.
  static BiLstmParams init(std::size_t input_dim, std::size_t width, std::size_t layers, Rng& rng) {
    if (width % 2 != 0) throw std::invalid_argument("bidirectional encoder width must be even");
    BiLstmParams p;
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < layers; ++l) {
      p.forward.push_back(LstmParams<T>::init(in, width / 2, rng));
      p.backward.push_back(LstmParams<T>::init(in, width / 2, rng));
      in = width;
    }
    return p;
  }

  std::size_t output_dim() const { return 2 * forward.back().hidden_dim; }
};

// Layer k consumes layer k-1's concatenated states; dropout is applied to
// the inputs of every layer above the first.
template <typename T>
std::vector<Tensor<T>> bilstm_encode(Graph<T>& g, const BiLstmParams<T>& p, std::span<const Tensor<T>> inputs,
                                     double dropout = 0.0, Rng* rng = nullptr) {
  if (inputs.empty()) throw std::invalid_argument("bilstm_encode: empty input sequence");
  std::vector<Tensor<T>> layer_in(inputs.begin(), inputs.end());
  const std::size_t n = inputs.size();
  for (std::size_t l = 0; l < p.forward.size(); ++l) {
    if (l > 0)
      for (auto& x : layer_in) x = g.dropout(x, dropout, rng);
    std::vector<Tensor<T>> fwd(n), bwd(n);
    auto state = LstmState<T>::zeros(p.forward[l].hidden_dim);
    for (std::size_t i = 0; i < n; ++i) {
      state = lstm_cell(g, p.forward[l], layer_in[i], state);
      fwd[i] = state.h;
    }
    state = LstmState<T>::zeros(p.backward[l].hidden_dim);
    for (std::size_t i = n; i-- > 0;) {
      state = lstm_cell(g, p.backward[l], layer_in[i], state);
      bwd[i] = state.h;
    }
    for (std::size_t i = 0; i < n; ++i) layer_in[i] = g.concat({fwd[i], bwd[i]});
  }
  return layer_in;
}

// ---------------------------------------------------------------------------
// Character-level CNN

inline constexpr std::array<std::size_t, 5> kCharKernelWidths{2, 3, 4, 5, 6};
inline constexpr std::array<std::size_t, 5> kCharKernelChannels{10, 30, 40, 40, 40};
inline constexpr std::size_t kCharEmbeddingDim = 16;

// Alphabet: 0 = padding, 1 = out-of-alphabet, then printable ASCII 0x20..0x7e.
inline constexpr int kCharPad = 0;
inline constexpr int kCharUnknown = 1;
inline constexpr std::size_t kCharAlphabetSize = 2 + 95;

inline int char_id(char c) {
  const auto u = static_cast<unsigned char>(c);
  if (u >= 0x20 && u <= 0x7e) return 2 + static_cast<int>(u - 0x20);
  return kCharUnknown;
}

// Phrase words joined with '_' ("sonic_boom").
inline std::string join_phrase(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += '_';
    out += words[i];
  }
  return out;
}

inline std::vector<int> char_ids(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(char_id(c));
  return ids;
}

template <typename T>
struct CharCnnParams {
  Tensor<T> embedding;             // (alphabet x char_dim)
  std::vector<Tensor<T>> kernels;  // bank k: (width_k * char_dim x channels_k)
  std::vector<Tensor<T>> biases;   // bank k: (channels_k)
  std::vector<std::size_t> widths;

  static CharCnnParams init(Rng& rng) {
    return init(kCharAlphabetSize, kCharEmbeddingDim, kCharKernelWidths, kCharKernelChannels, rng);
  }

  static CharCnnParams init(std::size_t alphabet, std::size_t char_dim, std::span<const std::size_t> widths,
                            std::span<const std::size_t> channels, Rng& rng) {
    CharCnnParams p;
    p.embedding = init_uniform<T>({alphabet, char_dim}, rng);
    for (std::size_t k = 0; k < widths.size(); ++k) {
      p.kernels.push_back(init_uniform<T>({widths[k] * char_dim, channels[k]}, rng));
      p.biases.push_back(init_uniform<T>({channels[k]}, rng));
      p.widths.push_back(widths[k]);
    }
    return p;
  }

  std::size_t output_dim() const {
    std::size_t n = 0;
    for (const auto& b : biases) n += b.size();
    return n;
  }
};

// Convolves every bank with stride 1 over the embedded characters, max-pools
// each channel over time and concatenates the banks. Trailing padding ids
// are ignored; inputs shorter than a kernel are right-padded for that bank.
template <typename T>
Tensor<T> char_cnn(Graph<T>& g, const CharCnnParams<T>& p, std::span<const int> ids) {
  std::size_t len = ids.size();
  while (len > 0 && ids[len - 1] == kCharPad) --len;
  const std::size_t alphabet = p.embedding.dim(0);
  std::vector<Tensor<T>> embedded;
  embedded.reserve(len);
  for (std::size_t i = 0; i < len; ++i) {
    const auto id = static_cast<std::size_t>(ids[i]);
    if (id >= alphabet) throw ShapeError("char_cnn", "character id " + std::to_string(id) + " outside alphabet");
    embedded.push_back(g.row(p.embedding, id));
  }
  const Tensor<T> pad = g.row(p.embedding, kCharPad);
  std::vector<Tensor<T>> pooled;
  for (std::size_t k = 0; k < p.kernels.size(); ++k) {
    const std::size_t width = p.widths[k];
    const std::size_t padded = std::max(len, width);
    std::vector<Tensor<T>> windows;
    for (std::size_t start = 0; start + width <= padded; ++start) {
      std::vector<Tensor<T>> cols;
      for (std::size_t j = start; j < start + width; ++j) cols.push_back(j < len ? embedded[j] : pad);
      windows.push_back(g.concat(std::span<const Tensor<T>>(cols)));
    }
    auto response = g.add(g.matmul(g.stack(std::span<const Tensor<T>>(windows)), p.kernels[k]), p.biases[k]);
    pooled.push_back(g.max(response, 0));
  }
  return g.concat(std::span<const Tensor<T>>(pooled));
}

template <typename T>
Tensor<T> char_cnn(Graph<T>& g, const CharCnnParams<T>& p, std::span<const std::string> phrase_words) {
  if (phrase_words.empty()) throw std::invalid_argument("char_cnn: empty phrase");
  const auto ids = char_ids(join_phrase(phrase_words));
  return char_cnn(g, p, std::span<const int>(ids));
}

// ---------------------------------------------------------------------------
// Attention

// score_i = (U_h h_i) . (U_s s_t). U_h is stored as (enc x attn) and U_s as
// (attn x dec) so that all encoder projections are one matmul.
template <typename T>
struct AttentionParams {
  Tensor<T> Uh, Us;

  static AttentionParams init(std::size_t enc_dim, std::size_t dec_dim, std::size_t attn_dim, Rng& rng) {
    return {init_uniform<T>({enc_dim, attn_dim}, rng), init_uniform<T>({attn_dim, dec_dim}, rng)};
  }
};

// Per-sequence precomputation: encoder states as a matrix, its transpose and
// the projected keys.
template <typename T>
struct AttentionMemory {
  Tensor<T> states;      // (I x enc)
  Tensor<T> states_t;    // (enc x I)
  Tensor<T> keys;        // (I x attn)
  std::size_t length = 0;
};

template <typename T>
AttentionMemory<T> attention_memory(Graph<T>& g, const AttentionParams<T>& p, std::span<const Tensor<T>> H) {
  if (H.empty()) throw std::invalid_argument("attention: empty encoder states");
  AttentionMemory<T> m;
  m.states = g.stack(H);
  if (m.states.dim(1) != p.Uh.dim(0)) throw ShapeError("attention", m.states.shape(), p.Uh.shape());
  m.states_t = g.transpose(m.states);
  m.keys = g.matmul(m.states, p.Uh);
  m.length = H.size();
  return m;
}

template <typename T>
struct AttentionResult {
  Tensor<T> context;  // d_t
  Tensor<T> weights;  // alpha
};

template <typename T>
AttentionResult<T> attention(Graph<T>& g, const AttentionParams<T>& p, const AttentionMemory<T>& memory,
                             const Tensor<T>& s) {
  if (s.rank() != 1 || s.size() != p.Us.dim(1)) throw ShapeError("attention", p.Us.shape(), s.shape());
  auto query = g.matmul(p.Us, s);
  auto alpha = g.softmax(g.matmul(memory.keys, query), 0);
  return {g.matmul(memory.states_t, alpha), alpha};
}

template <typename T>
AttentionResult<T> attention(Graph<T>& g, const AttentionParams<T>& p, std::span<const Tensor<T>> H,
                             const Tensor<T>& s) {
  return attention(g, p, attention_memory(g, p, H), s);
}

// ---------------------------------------------------------------------------
// Context-fusion gate
//
//   z  = sigmoid(W_z [f; s] + b_z)
//   r  = sigmoid(W_r [f; s] + b_r)          (width of f)
//   s~ = tanh(W_s [r * f; s] + b_s)
//   s' = (1 - z) * s + z * s~

template <typename T>
struct GateParams {
  Tensor<T> Wz, bz, Wr, br, Ws, bs;
  std::size_t feature_dim = 0;
  std::size_t state_dim = 0;

  static GateParams init(std::size_t feature_dim, std::size_t state_dim, Rng& rng) {
    const std::size_t in = feature_dim + state_dim;
    GateParams p;
    p.feature_dim = feature_dim;
    p.state_dim = state_dim;
    p.Wz = init_uniform<T>({state_dim, in}, rng);
    p.bz = init_uniform<T>({state_dim}, rng);
    p.Wr = init_uniform<T>({feature_dim, in}, rng);
    p.br = init_uniform<T>({feature_dim}, rng);
    p.Ws = init_uniform<T>({state_dim, in}, rng);
    p.bs = init_uniform<T>({state_dim}, rng);
    return p;
  }
};

template <typename T>
Tensor<T> gate(Graph<T>& g, const GateParams<T>& p, const Tensor<T>& s, const Tensor<T>& f) {
  if (f.rank() != 1 || f.size() != p.feature_dim) throw ShapeError("gate", p.Wr.shape(), f.shape());
  if (s.rank() != 1 || s.size() != p.state_dim) throw ShapeError("gate", p.Wz.shape(), s.shape());
  auto fs = g.concat({f, s});
  auto z = g.sigmoid(g.add(g.matmul(p.Wz, fs), p.bz));
  auto r = g.sigmoid(g.add(g.matmul(p.Wr, fs), p.br));
  auto candidate = g.tanh(g.add(g.matmul(p.Ws, g.concat({g.mul(r, f), s})), p.bs));
  return g.add(g.mul(g.affine(z, T(-1), T(1)), s), g.mul(z, candidate));
}

// ---------------------------------------------------------------------------
// I-Attention mask network
//
//   m   = sigmoid(W_m mean_i(tanh(W_f h_i + b_f)) + b_m)
//   x'  = x * m

template <typename T>
struct MaskNetParams {
  Tensor<T> Wf, bf;  // (enc x hidden), (hidden)
  Tensor<T> Wm, bm;  // (emb x hidden), (emb)

  static MaskNetParams init(std::size_t enc_dim, std::size_t hidden_dim, std::size_t emb_dim, Rng& rng) {
    return {init_uniform<T>({enc_dim, hidden_dim}, rng), init_uniform<T>({hidden_dim}, rng),
            init_uniform<T>({emb_dim, hidden_dim}, rng), init_uniform<T>({emb_dim}, rng)};
  }
};

template <typename T>
Tensor<T> iattention_mask_weights(Graph<T>& g, const MaskNetParams<T>& p, std::span<const Tensor<T>> H) {
  if (H.empty()) throw std::invalid_argument("iattention_mask: empty encoder states");
  auto states = g.stack(H);
  if (states.dim(1) != p.Wf.dim(0)) throw ShapeError("iattention_mask", states.shape(), p.Wf.shape());
  auto mapped = g.tanh(g.add(g.matmul(states, p.Wf), p.bf));
  return g.sigmoid(g.add(g.matmul(p.Wm, g.mean(mapped, 0)), p.bm));
}

template <typename T>
Tensor<T> iattention_mask(Graph<T>& g, const MaskNetParams<T>& p, std::span<const Tensor<T>> H,
                          const Tensor<T>& x_trg) {
  auto m = iattention_mask_weights(g, p, H);
  if (m.size() != x_trg.size()) throw ShapeError("iattention_mask", m.shape(), x_trg.shape());
  return g.mul(x_trg, m);
}

}  // namespace logcad
