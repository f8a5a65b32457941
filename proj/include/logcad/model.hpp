#pragma once

// The four description generators built from the layers:
//
//   global      decoder seeded with the phrase embedding; gate over [x_trg; c_trg]
//   local       attention over the encoded context; gate over [d_t; c_trg]
//   iattention  phrase embedding masked by the encoded context and fed at every
//               step next to the previous word; no gate, no character CNN
//   logcad      attention + phrase embedding + characters; gate over [x_trg; d_t; c_trg]
//
// Every gated variant feeds the gated state s'_{t-1} back as the top decoder
// layer's recurrent hidden state.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "logcad/data.hpp"
#include "logcad/layers.hpp"
#include "logcad/tensor.hpp"

namespace logcad {

enum class Variant { global, local, iattention, logcad };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::global: return "global";
    case Variant::local: return "local";
    case Variant::iattention: return "i-attention";
    case Variant::logcad: return "log-cad";
  }
  return "?";
}

inline Variant parse_variant(std::string_view name) {
  if (name == "global") return Variant::global;
  if (name == "local") return Variant::local;
  if (name == "i-attention" || name == "iattention") return Variant::iattention;
  if (name == "log-cad" || name == "logcad") return Variant::logcad;
  throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
}

struct ModelConfig {
  Variant variant = Variant::logcad;
  std::size_t enc_layers = 2;
  std::size_t enc_width = 600;  // both directions together
  std::size_t attn_width = 300;
  std::size_t word_emb_width = 300;
  std::size_t char_out_width = 160;
  std::size_t dec_layers = 2;
  std::size_t dec_width = 300;
  std::size_t vocab_size = 10000;  // upper bound used when building the vocabulary
  double dropout = 0.5;

  bool uses_encoder() const { return variant != Variant::global; }
  bool uses_attention() const { return variant == Variant::local || variant == Variant::logcad; }
  bool uses_global() const { return variant != Variant::local; }
  bool uses_chars() const { return variant != Variant::iattention; }
  bool uses_gate() const { return variant != Variant::iattention; }
  bool uses_mask() const { return variant == Variant::iattention; }

  std::size_t feature_width() const {
    std::size_t w = 0;
    if (variant == Variant::global || variant == Variant::logcad) w += word_emb_width;
    if (uses_attention()) w += enc_width;
    if (uses_chars()) w += char_out_width;
    return w;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
    if (enc_layers == 0 || dec_layers == 0) fail("layer counts must be positive");
    if (enc_width == 0 || enc_width % 2 != 0) fail("enc_width must be positive and even");
    if (attn_width == 0 || word_emb_width == 0 || dec_width == 0) fail("widths must be positive");
    std::size_t channels = 0;
    for (auto c : kCharKernelChannels) channels += c;
    if (char_out_width != channels) fail("char_out_width must equal the CNN channel total " + std::to_string(channels));
    if (vocab_size < 6) fail("vocab_size too small");
    if (dropout < 0 || dropout >= 1) fail("dropout must be in [0,1)");
  }

  std::vector<std::pair<std::string, std::string>> to_pairs() const {
    auto num = [](auto v) {
      std::ostringstream os;
      os << std::setprecision(17) << v;
      return os.str();
    };
    return {{"variant", std::string(to_string(variant))},
            {"enc_layers", num(enc_layers)},
            {"enc_width", num(enc_width)},
            {"attn_width", num(attn_width)},
            {"word_emb_width", num(word_emb_width)},
            {"char_out_width", num(char_out_width)},
            {"dec_layers", num(dec_layers)},
            {"dec_width", num(dec_width)},
            {"vocab_size", num(vocab_size)},
            {"dropout", num(dropout)}};
  }

  // Returns false when `key` is not a model field.
  bool set(const std::string& key, const std::string& value) {
    auto as_size = [&] { return static_cast<std::size_t>(std::stoull(value)); };
    if (key == "variant") variant = parse_variant(value);
    else if (key == "enc_layers") enc_layers = as_size();
    else if (key == "enc_width") enc_width = as_size();
    else if (key == "attn_width") attn_width = as_size();
    else if (key == "word_emb_width") word_emb_width = as_size();
    else if (key == "char_out_width") char_out_width = as_size();
    else if (key == "dec_layers") dec_layers = as_size();
    else if (key == "dec_width") dec_width = as_size();
    else if (key == "vocab_size") vocab_size = as_size();
    else if (key == "dropout") dropout = std::stod(value);
    else return false;
    return true;
  }
};

// One instance prepared for the network: context ids (with the [TRG] token),
// the '_'-joined phrase for the character CNN, and the phrase embedding.
template <typename T>
struct ModelInput {
  std::vector<int> context;
  std::string phrase_chars;
  std::vector<T> x_trg;
};

template <typename T>
ModelInput<T> make_input(const Entry& e, const Vocab& vocab, const EmbeddingTable& table) {
  ModelInput<T> in;
  in.context = vocab.encode(e.context);
  in.phrase_chars = join_phrase(e.phrase);
  const auto x = phrase_embedding(e.phrase, table);
  in.x_trg.assign(x.begin(), x.end());
  return in;
}

inline std::vector<int> target_ids(const Entry& e, const Vocab& vocab) {
  auto ids = vocab.encode(e.description);
  ids.push_back(Vocab::kEos);
  return ids;
}

// Per-layer LSTM states. For gated variants the top layer's h holds s'_{t-1}.
template <typename T>
struct DecoderState {
  std::vector<LstmState<T>> layers;
};

template <typename T>
struct Encoded {
  std::optional<AttentionMemory<T>> memory;
  std::vector<Tensor<T>> states;  // H, empty for the global variant
  Tensor<T> x_trg;                // phrase embedding (constant)
  Tensor<T> masked_x_trg;         // x'_trg, i-attention only
  Tensor<T> c_trg;                // character features, variants with chars
};

template <typename T>
struct StepOutput {
  Tensor<T> logits;
  DecoderState<T> state;
  Tensor<T> attention;  // alpha, attention variants only
};

inline constexpr int kStartToken = -1;

// f_t for the gated variants.
template <typename T>
Tensor<T> gate_features(Graph<T>& g, Variant variant, const Tensor<T>& x_trg, const Tensor<T>& d, const Tensor<T>& c) {
  switch (variant) {
    case Variant::logcad: return g.concat({x_trg, d, c});
    case Variant::global: return g.concat({x_trg, c});
    case Variant::local: return g.concat({d, c});
    case Variant::iattention: break;
  }
  throw std::invalid_argument("gate_features: variant has no gate");
}

template <typename T>
class Model {
 public:
  using NamedTensor = std::pair<std::string, Tensor<T>>;

  Model(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed)
      : config_(config), vocab_size_(vocab_size) {
    config_.validate();
    if (vocab_size_ < 5) throw std::invalid_argument("model vocabulary must include the special tokens");
    Rng rng(seed);
    const auto& c = config_;
    if (c.uses_encoder()) {
      context_embedding_ = init_uniform<T>({vocab_size_, c.word_emb_width}, rng);
      encoder_ = BiLstmParams<T>::init(c.word_emb_width, c.enc_width, c.enc_layers, rng);
    }
    decoder_embedding_ = init_uniform<T>({vocab_size_, c.word_emb_width}, rng);
    std::size_t in = c.uses_mask() ? 2 * c.word_emb_width : c.word_emb_width;
    for (std::size_t l = 0; l < c.dec_layers; ++l) {
      decoder_.push_back(LstmParams<T>::init(in, c.dec_width, rng));
      in = c.dec_width;
    }
    if (c.uses_attention()) attention_ = AttentionParams<T>::init(c.enc_width, c.dec_width, c.attn_width, rng);
    if (c.uses_chars()) chars_ = CharCnnParams<T>::init(rng);
    if (c.uses_gate()) gate_ = GateParams<T>::init(c.feature_width(), c.dec_width, rng);
    if (c.uses_mask()) mask_ = MaskNetParams<T>::init(c.enc_width, c.attn_width, c.word_emb_width, rng);
    output_W_ = init_uniform<T>({vocab_size_, c.dec_width}, rng);
    output_b_ = init_uniform<T>({vocab_size_}, rng);
  }

  const ModelConfig& config() const { return config_; }
  std::size_t vocab_size() const { return vocab_size_; }

  // Stable order; the group of a parameter is the prefix before its first '.'.
  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    auto lstm = [&](const std::string& prefix, const LstmParams<T>& p) {
      out.emplace_back(prefix + ".W", p.W);
      out.emplace_back(prefix + ".U", p.U);
      out.emplace_back(prefix + ".b", p.b);
    };
    if (config_.uses_encoder()) {
      out.emplace_back("context_embedding.table", context_embedding_);
      for (std::size_t l = 0; l < encoder_.forward.size(); ++l) {
        lstm("encoder.l" + std::to_string(l) + ".fwd", encoder_.forward[l]);
        lstm("encoder.l" + std::to_string(l) + ".bwd", encoder_.backward[l]);
      }
    }
    out.emplace_back("decoder_embedding.table", decoder_embedding_);
    for (std::size_t l = 0; l < decoder_.size(); ++l) lstm("decoder.l" + std::to_string(l), decoder_[l]);
    if (config_.uses_attention()) {
      out.emplace_back("attention.Uh", attention_.Uh);
      out.emplace_back("attention.Us", attention_.Us);
    }
    if (config_.uses_chars()) {
      out.emplace_back("char_cnn.embedding", chars_.embedding);
      for (std::size_t k = 0; k < chars_.kernels.size(); ++k) {
        out.emplace_back("char_cnn.w" + std::to_string(chars_.widths[k]) + ".kernel", chars_.kernels[k]);
        out.emplace_back("char_cnn.w" + std::to_string(chars_.widths[k]) + ".bias", chars_.biases[k]);
      }
    }
    if (config_.uses_gate()) {
      out.emplace_back("gate.Wz", gate_.Wz);
      out.emplace_back("gate.bz", gate_.bz);
      out.emplace_back("gate.Wr", gate_.Wr);
      out.emplace_back("gate.br", gate_.br);
      out.emplace_back("gate.Ws", gate_.Ws);
      out.emplace_back("gate.bs", gate_.bs);
    }
    if (config_.uses_mask()) {
      out.emplace_back("mask.Wf", mask_.Wf);
      out.emplace_back("mask.bf", mask_.bf);
      out.emplace_back("mask.Wm", mask_.Wm);
      out.emplace_back("mask.bm", mask_.bm);
    }
    out.emplace_back("output.W", output_W_);
    out.emplace_back("output.b", output_b_);
    return out;
  }

  void zero_grad() {
    for (auto& [name, t] : parameters()) t.zero_grad();
  }

  // Pre-trained vectors for context tokens present in `table`.
  void load_context_embeddings(const Vocab& vocab, const EmbeddingTable& table) {
    if (!config_.uses_encoder() || table.width() != config_.word_emb_width) return;
    for (std::size_t id = 0; id < vocab.size(); ++id) {
      const auto& tok = vocab.token(static_cast<int>(id));
      if (!table.contains(tok)) continue;
      const auto& v = table.lookup(tok);
      for (std::size_t j = 0; j < v.size(); ++j) context_embedding_.at(id, j) = static_cast<T>(v[j]);
    }
  }

  // Work done once per instance: context encoding, the (masked) phrase
  // embedding and the character features.
  Encoded<T> encode(Graph<T>& g, const ModelInput<T>& in, Rng* dropout_rng = nullptr) const {
    if (in.x_trg.size() != config_.word_emb_width)
      throw ShapeError("encode", "phrase embedding width " + std::to_string(in.x_trg.size()) +
                                     " != word_emb_width " + std::to_string(config_.word_emb_width));
    Encoded<T> enc;
    enc.x_trg = Tensor<T>::from({in.x_trg.size()}, in.x_trg);
    if (config_.uses_encoder()) {
      if (in.context.empty()) throw std::invalid_argument("encode: empty context");
      std::vector<Tensor<T>> embedded;
      embedded.reserve(in.context.size());
      for (int id : in.context) embedded.push_back(g.row(context_embedding_, checked_id(id)));
      enc.states = bilstm_encode(g, encoder_, std::span<const Tensor<T>>(embedded), config_.dropout, dropout_rng);
    }
    if (config_.uses_attention())
      enc.memory = attention_memory(g, attention_, std::span<const Tensor<T>>(enc.states));
    if (config_.uses_mask())
      enc.masked_x_trg = iattention_mask(g, mask_, std::span<const Tensor<T>>(enc.states), enc.x_trg);
    if (config_.uses_chars()) {
      if (in.phrase_chars.empty()) throw std::invalid_argument("encode: empty phrase");
      const auto ids = char_ids(in.phrase_chars);
      enc.c_trg = char_cnn(g, chars_, std::span<const int>(ids));
    }
    return enc;
  }

  DecoderState<T> initial_state() const {
    DecoderState<T> s;
    for (std::size_t l = 0; l < config_.dec_layers; ++l) s.layers.push_back(LstmState<T>::zeros(config_.dec_width));
    return s;
  }

  // One decoder step. `prev` is the previous token id, or kStartToken for the
  // first step, where the phrase embedding (zeros for the local variant) is consumed.
  StepOutput<T> step(Graph<T>& g, const Encoded<T>& enc, const DecoderState<T>& state, int prev,
                     Rng* dropout_rng = nullptr) const {
    if (config_.uses_attention() && !enc.memory) throw std::invalid_argument("step: encoder states missing");
    if (config_.uses_chars() && !enc.c_trg.defined()) throw std::invalid_argument("step: character features missing");
    Tensor<T> y;
    if (prev == kStartToken) {
      y = config_.uses_global() ? enc.x_trg : Tensor<T>::zeros({config_.word_emb_width});
    } else {
      y = g.row(decoder_embedding_, checked_id(prev));
    }
    y = g.dropout(y, config_.dropout, dropout_rng);
    if (config_.uses_mask()) y = g.concat({y, enc.masked_x_trg});

    StepOutput<T> out;
    out.state.layers.reserve(decoder_.size());
    Tensor<T> input = y;
    for (std::size_t l = 0; l < decoder_.size(); ++l) {
      if (l > 0) input = g.dropout(input, config_.dropout, dropout_rng);
      out.state.layers.push_back(lstm_cell(g, decoder_[l], input, state.layers.at(l)));
      input = out.state.layers.back().h;
    }
    Tensor<T> top = input;
    if (config_.uses_gate()) {
      Tensor<T> d;
      if (config_.uses_attention()) {
        auto att = attention(g, attention_, *enc.memory, top);
        d = att.context;
        out.attention = att.weights;
      }
      top = gate(g, gate_, top, gate_features(g, config_.variant, enc.x_trg, d, enc.c_trg));
      out.state.layers.back().h = top;
    }
    out.logits = g.add(g.matmul(output_W_, top), output_b_);
    return out;
  }

  // Sum over target positions of -log p(y_t | y_<t, X, X_trg), teacher forced.
  // `targets` ends with <eos>.
  Tensor<T> sequence_nll(Graph<T>& g, const ModelInput<T>& in, const std::vector<int>& targets,
                         Rng* dropout_rng = nullptr) const {
    if (targets.empty()) throw std::invalid_argument("sequence_nll: empty target");
    const auto enc = encode(g, in, dropout_rng);
    auto state = initial_state();
    int prev = kStartToken;
    std::vector<Tensor<T>> picked;
    picked.reserve(targets.size());
    for (int y : targets) {
      auto out = step(g, enc, state, prev, dropout_rng);
      picked.push_back(g.pick(g.log_softmax(out.logits), checked_id(y)));
      state = std::move(out.state);
      prev = y;
    }
    return g.affine(g.sum(g.concat(std::span<const Tensor<T>>(picked))), T(-1));
  }

  // Mean over all non-pad target positions of the batch.
  Tensor<T> loss(Graph<T>& g, std::span<const ModelInput<T>> inputs, std::span<const std::vector<int>> targets,
                 Rng* dropout_rng = nullptr) const {
    if (inputs.empty() || inputs.size() != targets.size())
      throw std::invalid_argument("loss: empty batch or input/target count mismatch");
    std::vector<Tensor<T>> parts;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      parts.push_back(sequence_nll(g, inputs[i], targets[i], dropout_rng));
      tokens += targets[i].size();
    }
    return g.affine(g.sum(g.concat(std::span<const Tensor<T>>(parts))), T(1) / static_cast<T>(tokens));
  }

 private:
  std::size_t checked_id(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_)
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(vocab_size_));
    return static_cast<std::size_t>(id);
  }

  ModelConfig config_;
  std::size_t vocab_size_;
  Tensor<T> context_embedding_;
  BiLstmParams<T> encoder_;
  Tensor<T> decoder_embedding_;
  std::vector<LstmParams<T>> decoder_;
  AttentionParams<T> attention_;
  CharCnnParams<T> chars_;
  GateParams<T> gate_;
  MaskNetParams<T> mask_;
  Tensor<T> output_W_, output_b_;
};

// Token-level accuracy of the argmax prediction under teacher forcing.
template <typename T>
double teacher_forced_accuracy(const Model<T>& model, std::span<const ModelInput<T>> inputs,
                               std::span<const std::vector<int>> targets) {
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Graph<T> g(false);
    const auto enc = model.encode(g, inputs[i]);
    auto state = model.initial_state();
    int prev = kStartToken;
    for (int y : targets[i]) {
      auto out = model.step(g, enc, state, prev);
      const auto v = out.logits.values();
      const auto best = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
      correct += best == y ? 1 : 0;
      ++total;
      state = std::move(out.state);
      prev = y;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace logcad
