#pragma once

// Adam with global-norm clipping, the epoch loop with early stopping, and the
// conversion between a model (plus optimiser state) and a checkpoint.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "logcad/checkpoint.hpp"
#include "logcad/data.hpp"
#include "logcad/model.hpp"

namespace logcad {

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  std::size_t patience = 5;  // epochs without validation improvement; 0 disables
  std::uint64_t seed = 1;
};

template <typename T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Rescales all gradients so their joint L2 norm is at most max_norm; returns the pre-clip norm.
  static double clip(std::vector<typename Model<T>::NamedTensor>& params, double max_norm) {
    double sq = 0;
    for (auto& [name, p] : params)
      for (auto g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
      const auto scale = static_cast<T>(max_norm / norm);
      for (auto& [name, p] : params)
        for (auto& g : p.grad()) g *= scale;
    }
    return norm;
  }

  void step(std::vector<typename Model<T>::NamedTensor>& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      auto& m = m_[name];
      auto& v = v_[name];
      if (m.empty()) {
        m.assign(p.size(), T(0));
        v.assign(p.size(), T(0));
      }
      auto w = p.values();
      auto g = p.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = static_cast<T>(beta1_ * m[i] + (1 - beta1_) * g[i]);
        v[i] = static_cast<T>(beta2_ * v[i] + (1 - beta2_) * g[i] * g[i]);
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] = static_cast<T>(w[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  std::uint64_t steps() const { return t_; }

  void export_state(Checkpoint& ckpt, const std::vector<typename Model<T>::NamedTensor>& params) const {
    ckpt.meta.emplace_back("adam_steps", std::to_string(t_));
    for (const auto& [name, p] : params) {
      auto mit = m_.find(name);
      auto vit = v_.find(name);
      auto m = Tensor<T>::from(p.shape(), mit == m_.end() ? std::vector<T>(p.size(), T(0)) : mit->second);
      auto v = Tensor<T>::from(p.shape(), vit == v_.end() ? std::vector<T>(p.size(), T(0)) : vit->second);
      ckpt.add("adam.m." + name, m);
      ckpt.add("adam.v." + name, v);
    }
  }

  void import_state(const Checkpoint& ckpt, const std::vector<typename Model<T>::NamedTensor>& params) {
    const auto steps = ckpt.meta_value("adam_steps");
    if (!steps) return;
    t_ = std::stoull(*steps);
    for (const auto& [name, p] : params) {
      auto m = Tensor<T>::zeros(p.shape());
      auto v = Tensor<T>::zeros(p.shape());
      ckpt.copy_into("adam.m." + name, m);
      ckpt.copy_into("adam.v." + name, v);
      m_[name].assign(m.values().begin(), m.values().end());
      v_[name].assign(v.values().begin(), v.values().end());
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::vector<T>> m_, v_;
};

// Model weights, vocabulary, configuration and the UNK vector in one checkpoint.
template <typename T>
Checkpoint make_checkpoint(const Model<T>& model, const Vocab& vocab, const EmbeddingTable& table) {
  Checkpoint ckpt;
  ckpt.config = model.config().to_pairs();
  ckpt.vocab = vocab.tokens();
  for (const auto& [name, p] : model.parameters()) ckpt.add(name, p);
  const auto& unk = table.unk();
  ckpt.add("global.unk", Tensor<float>::from({unk.size()}, unk));
  return ckpt;
}

inline ModelConfig config_from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig config;
  for (const auto& [k, v] : ckpt.config)
    if (!config.set(k, v)) throw CheckpointError("unknown config key '" + k + "' in checkpoint");
  return config;
}

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ckpt) {
  Model<T> model(config_from_checkpoint(ckpt), ckpt.vocab.size(), 0);
  for (auto& [name, p] : model.parameters()) ckpt.copy_into(name, p);
  return model;
}

// Restores the UNK vector stored next to the model so that unknown phrase
// words map to the vector used during training.
inline void restore_unk(const Checkpoint& ckpt, EmbeddingTable& table) {
  const auto* b = ckpt.find("global.unk");
  if (b == nullptr) return;
  table.set_unk(b->data);
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double valid_loss = std::numeric_limits<double>::quiet_NaN();
};

template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, const Vocab& vocab, const EmbeddingTable& table, TrainOptions options)
      : model_(model), vocab_(vocab), table_(table), options_(options), adam_(options.learning_rate) {}

  Adam<T>& optimizer() { return adam_; }

  // One pass over `entries`; returns the token-weighted mean training loss.
  // Batch order and dropout masks depend only on (seed, epoch).
  double train_epoch(const std::vector<Entry>& entries, std::size_t epoch) {
    const std::uint64_t epoch_seed = options_.seed * 1000003ULL + epoch;
    auto batches = make_batches(entries, vocab_, options_.batch_size, epoch_seed);
    Rng dropout_rng(epoch_seed ^ 0xd20f07ULL);
    double loss_sum = 0;
    std::size_t tokens = 0;
    auto params = model_.parameters();
    for (const auto& batch : batches) {
      std::vector<ModelInput<T>> inputs;
      std::vector<std::vector<int>> targets;
      std::size_t batch_tokens = 0;
      for (std::size_t r = 0; r < batch.size(); ++r) {
        inputs.push_back(make_input<T>(entries[batch.entry_index[r]], vocab_, table_));
        targets.push_back(batch.description_row(r));
        batch_tokens += targets.back().size();
      }
      model_.zero_grad();
      Graph<T> g;
      auto loss = model_.loss(g, inputs, targets, &dropout_rng);
      g.backward(loss);
      Adam<T>::clip(params, options_.clip_norm);
      adam_.step(params);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch_tokens);
      tokens += batch_tokens;
    }
    return tokens == 0 ? 0.0 : loss_sum / static_cast<double>(tokens);
  }

  // Token-weighted mean loss without dropout.
  double evaluate(const std::vector<Entry>& entries) const {
    double loss_sum = 0;
    std::size_t tokens = 0;
    for (const auto& e : entries) {
      Graph<T> g(false);
      const auto targets = target_ids(e, vocab_);
      loss_sum += static_cast<double>(model_.sequence_nll(g, make_input<T>(e, vocab_, table_), targets).item());
      tokens += targets.size();
    }
    return tokens == 0 ? 0.0 : loss_sum / static_cast<double>(tokens);
  }

 private:
  Model<T>& model_;
  const Vocab& vocab_;
  const EmbeddingTable& table_;
  TrainOptions options_;
  Adam<T> adam_;
};

}  // namespace logcad
