#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "logcad/model.hpp"
#include "support/model_oracle.hpp"

using namespace logcad;

namespace {

constexpr Variant kVariants[] = {Variant::global, Variant::local, Variant::iattention, Variant::logcad};

ModelConfig small_config(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.enc_layers = 2;
  c.enc_width = 6;
  c.attn_width = 3;
  c.word_emb_width = 4;
  c.dec_layers = 2;
  c.dec_width = 5;
  c.dropout = 0;
  return c;
}

constexpr std::size_t kVocab = 11;

ModelInput<double> input(std::vector<int> context, std::string chars, std::uint64_t seed) {
  Rng rng(seed);
  ModelInput<double> in{std::move(context), std::move(chars), {}};
  for (int i = 0; i < 4; ++i) in.x_trg.push_back(rng.uniform(-1, 1));
  return in;
}

std::set<std::string> groups(const Model<double>& m) {
  std::set<std::string> out;
  for (const auto& [name, t] : m.parameters()) out.insert(name.substr(0, name.find('.')));
  return out;
}

}  // namespace

TEST(Model, LogitsSpanTheVocabulary) {
  for (auto v : kVariants) {
    Model<double> m(small_config(v), kVocab, 1);
    Graph<double> g(false);
    auto enc = m.encode(g, input({5, 2, 6}, "ab", 1));
    auto out = m.step(g, enc, m.initial_state(), kStartToken);
    EXPECT_EQ(out.logits.shape(), (Shape{kVocab})) << to_string(v);
  }
}

TEST(Model, OnlyActiveGroupsAreAllocated) {
  const std::set<std::string> base{"decoder_embedding", "decoder", "output"};
  auto with = [&](std::initializer_list<const char*> extra) {
    auto s = base;
    s.insert(extra.begin(), extra.end());
    return s;
  };
  EXPECT_EQ(groups(Model<double>(small_config(Variant::global), kVocab, 1)), with({"char_cnn", "gate"}));
  EXPECT_EQ(groups(Model<double>(small_config(Variant::local), kVocab, 1)),
            with({"context_embedding", "encoder", "attention", "char_cnn", "gate"}));
  EXPECT_EQ(groups(Model<double>(small_config(Variant::iattention), kVocab, 1)),
            with({"context_embedding", "encoder", "mask"}));
  EXPECT_EQ(groups(Model<double>(small_config(Variant::logcad), kVocab, 1)),
            with({"context_embedding", "encoder", "attention", "char_cnn", "gate"}));
}

TEST(Model, EveryAllocatedParameterReceivesGradient) {
  for (auto v : kVariants) {
    Model<double> m(small_config(v), kVocab, 3);
    Graph<double> g;
    auto loss = m.sequence_nll(g, input({5, 2, 6, 7}, "tok", 2), {5, 8, 4});
    g.backward(loss);
    for (const auto& [name, t] : m.parameters()) {
      double norm = 0;
      for (auto x : t.grad()) norm += x * x;
      EXPECT_GT(norm, 0.0) << to_string(v) << ' ' << name;
    }
  }
}

TEST(Model, GlobalVariantIgnoresLocalContext) {
  Model<double> m(small_config(Variant::global), kVocab, 4);
  auto a = input({5, 2, 6}, "ab", 9);
  auto b = input({7, 8, 9, 10, 2}, "ab", 9);
  Graph<double> g(false);
  auto ea = m.encode(g, a), eb = m.encode(g, b);
  auto sa = m.initial_state(), sb = m.initial_state();
  int prev = kStartToken;
  for (int t : {5, 6, 7}) {
    auto oa = m.step(g, ea, sa, prev);
    auto ob = m.step(g, eb, sb, prev);
    for (std::size_t i = 0; i < kVocab; ++i) EXPECT_EQ(oa.logits[i], ob.logits[i]);
    sa = oa.state;
    sb = ob.state;
    prev = t;
  }
}

TEST(Model, LocalContextChangesOtherVariants) {
  for (auto v : {Variant::local, Variant::iattention, Variant::logcad}) {
    Model<double> m(small_config(v), kVocab, 4);
    Graph<double> g(false);
    auto la = m.encode(g, input({5, 2, 6}, "ab", 9));
    auto lb = m.encode(g, input({7, 2, 9}, "ab", 9));
    auto oa = m.step(g, la, m.initial_state(), kStartToken);
    auto ob = m.step(g, lb, m.initial_state(), kStartToken);
    EXPECT_NE(oa.logits[5], ob.logits[5]) << to_string(v);
  }
}

TEST(Model, LogCadStepMatchesScalarPipeline) {
  Model<double> m(small_config(Variant::logcad), kVocab, 5);
  auto in = input({6, 2}, "sonic_boom", 10);
  oracle::ModelOracle ref(m);
  Graph<double> g(false);
  auto enc = m.encode(g, in);
  auto renc = ref.encode(in);
  auto state = m.initial_state();
  auto rstate = ref.initial_state();
  int prev = kStartToken;
  for (int next : {7, 8}) {
    auto out = m.step(g, enc, state, prev);
    auto rout = ref.step(renc, rstate, prev);
    for (std::size_t i = 0; i < kVocab; ++i) EXPECT_NEAR(out.logits[i], rout.logits[i], 1e-12);
    double total = 0;
    for (auto a : out.attention.values()) total += a;
    EXPECT_NEAR(total, 1.0, 1e-12);
    state = out.state;
    rstate = rout.state;
    prev = next;
  }
}

TEST(Model, SequenceLossMatchesScalarPipelineForAllVariants) {
  for (auto v : kVariants) {
    Model<double> m(small_config(v), kVocab, 6);
    auto in = input({5, 9, 2, 6, 10}, "new_york", 11);
    const std::vector<int> targets{5, 7, 7, 4};
    Graph<double> g(false);
    EXPECT_NEAR(m.sequence_nll(g, in, targets).item(), oracle::ModelOracle(m).sequence_nll(in, targets), 1e-10)
        << to_string(v);
  }
}

TEST(Model, UniformLogitsGiveLogVocabularyLoss) {
  auto c = small_config(Variant::logcad);
  Model<double> m(c, 10000, 7);
  for (auto& [name, t] : m.parameters())
    if (name.rfind("output.", 0) == 0) std::fill(t.values().begin(), t.values().end(), 0.0);
  std::vector<ModelInput<double>> in{input({5, 2}, "x", 1)};
  std::vector<std::vector<int>> targets{{17, 9000, 4}};
  Graph<double> g(false);
  EXPECT_NEAR(m.loss(g, in, targets).item(), std::log(10000.0), 1e-12);
  EXPECT_NEAR(std::log(10000.0), 9.2103, 1e-4);
}

TEST(Model, PeakedCorrectLogitsGiveNearZeroLoss) {
  Model<double> m(small_config(Variant::local), kVocab, 8);
  for (auto& [name, t] : m.parameters()) {
    if (name == "output.W") std::fill(t.values().begin(), t.values().end(), 0.0);
    if (name == "output.b") t[Vocab::kEos] = 60;
  }
  std::vector<ModelInput<double>> in{input({5, 2}, "x", 1)};
  std::vector<std::vector<int>> targets{{Vocab::kEos}};
  Graph<double> g(false);
  EXPECT_LT(m.loss(g, in, targets).item(), 1e-20);
}

TEST(Model, BatchLossIsLengthWeightedMean) {
  Model<double> m(small_config(Variant::logcad), kVocab, 9);
  std::vector<ModelInput<double>> in{input({5, 2}, "ab", 1), input({2, 6, 7, 8}, "cde", 2)};
  std::vector<std::vector<int>> targets{{5, 4}, {6, 7, 8, 9, 4}};
  Graph<double> g(false);
  const double a = m.sequence_nll(g, in[0], targets[0]).item();
  const double b = m.sequence_nll(g, in[1], targets[1]).item();
  EXPECT_NEAR(m.loss(g, in, targets).item(), (a + b) / 7.0, 1e-12);

  std::vector<ModelInput<double>> swapped{in[1], in[0]};
  std::vector<std::vector<int>> swapped_targets{targets[1], targets[0]};
  EXPECT_NEAR(m.loss(g, swapped, swapped_targets).item(), (a + b) / 7.0, 1e-12);
}

TEST(Model, EmptyBatchRejected) {
  Model<double> m(small_config(Variant::logcad), kVocab, 9);
  Graph<double> g(false);
  EXPECT_THROW(m.loss(g, {}, {}), std::invalid_argument);
}

TEST(Model, StepWithoutEncoderStatesRejected) {
  Model<double> m(small_config(Variant::logcad), kVocab, 9);
  Graph<double> g(false);
  Encoded<double> empty;
  empty.x_trg = Tensor<double>::zeros({4});
  EXPECT_THROW(m.step(g, empty, m.initial_state(), kStartToken), std::invalid_argument);
}

TEST(Model, InconsistentConfigRejected) {
  auto c = small_config(Variant::logcad);
  c.enc_width = 7;
  EXPECT_THROW(Model<double>(c, kVocab, 1), std::invalid_argument);
  c = small_config(Variant::logcad);
  c.char_out_width = 100;
  EXPECT_THROW(Model<double>(c, kVocab, 1), std::invalid_argument);
  c = small_config(Variant::logcad);
  c.dropout = 1.0;
  EXPECT_THROW(Model<double>(c, kVocab, 1), std::invalid_argument);
  EXPECT_THROW(parse_variant("seq2seq"), std::invalid_argument);
  EXPECT_EQ(parse_variant("i-attention"), Variant::iattention);
}

TEST(Model, ConfigRoundTripsThroughPairs) {
  auto c = small_config(Variant::iattention);
  c.dropout = 0.25;
  ModelConfig d;
  for (const auto& [k, v] : c.to_pairs()) ASSERT_TRUE(d.set(k, v));
  EXPECT_EQ(d.to_pairs(), c.to_pairs());
}

TEST(Model, DropoutOnlyWithRng) {
  auto c = small_config(Variant::logcad);
  c.dropout = 0.5;
  Model<double> m(c, kVocab, 10);
  auto in = input({5, 2, 6}, "ab", 3);
  const std::vector<int> targets{5, 6, 4};
  Graph<double> g(false);
  const double plain = m.sequence_nll(g, in, targets).item();
  EXPECT_EQ(plain, m.sequence_nll(g, in, targets).item());
  Rng r1(1), r2(1);
  const double d1 = m.sequence_nll(g, in, targets, &r1).item();
  const double d2 = m.sequence_nll(g, in, targets, &r2).item();
  EXPECT_EQ(d1, d2);
  EXPECT_NE(d1, plain);
}

TEST(Model, SameSeedSameWeights) {
  Model<double> a(small_config(Variant::logcad), kVocab, 42), b(small_config(Variant::logcad), kVocab, 42);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    EXPECT_TRUE(std::equal(pa[i].second.values().begin(), pa[i].second.values().end(), pb[i].second.values().begin()));
}

TEST(Model, TeacherForcedAccuracyCountsArgmaxHits) {
  Model<double> m(small_config(Variant::global), kVocab, 11);
  for (auto& [name, t] : m.parameters()) {
    if (name == "output.W") std::fill(t.values().begin(), t.values().end(), 0.0);
    if (name == "output.b") t[7] = 10;
  }
  std::vector<ModelInput<double>> in{input({5}, "a", 1)};
  std::vector<std::vector<int>> targets{{7, 7, 8, 4}};
  EXPECT_DOUBLE_EQ(teacher_forced_accuracy<double>(m, in, targets), 0.5);
}
