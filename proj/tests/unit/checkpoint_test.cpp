#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "logcad/train.hpp"

using namespace logcad;

namespace {

Checkpoint sample() {
  Checkpoint c;
  c.meta = {{"epoch", "3"}, {"note", "two words"}};
  c.config = {{"variant", "log-cad"}};
  c.vocab = {"<pad>", "<unk>", "x y"};
  c.tensors.push_back({"a", {2, 3}, {1.5f, -0.0f, 3e-38f, std::numeric_limits<float>::infinity(), 7, 8}});
  c.tensors.push_back({"b", {1}, {0.1f}});
  return c;
}

std::string bytes(const Checkpoint& c) {
  std::ostringstream os;
  write_checkpoint(os, c);
  return os.str();
}

ModelConfig tiny() {
  ModelConfig c;
  c.enc_layers = 1;
  c.enc_width = 4;
  c.attn_width = 2;
  c.word_emb_width = 3;
  c.dec_layers = 1;
  c.dec_width = 3;
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto c = sample();
  const auto text = bytes(c);
  std::istringstream in(text);
  const auto r = read_checkpoint(in);
  EXPECT_EQ(r.meta, c.meta);
  EXPECT_EQ(r.config, c.config);
  EXPECT_EQ(r.vocab, c.vocab);
  ASSERT_EQ(r.tensors.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(r.tensors[i].shape, c.tensors[i].shape);
    EXPECT_EQ(std::memcmp(r.tensors[i].data.data(), c.tensors[i].data.data(), c.tensors[i].data.size() * 4), 0);
  }
  EXPECT_EQ(bytes(r), text);
}

TEST(Checkpoint, BlocksAreLittleEndian) {
  Checkpoint c;
  c.tensors.push_back({"one", {1}, {1.0f}});
  const auto text = bytes(c);
  EXPECT_EQ(text.substr(text.size() - 4), std::string("\x00\x00\x80\x3f", 4));
  EXPECT_NE(text.find("tensor one f32 1 0 4\n"), std::string::npos);
}

TEST(Checkpoint, CorruptInputsRejected) {
  const auto text = bytes(sample());
  auto read = [](const std::string& s) {
    std::istringstream in(s);
    return read_checkpoint(in);
  };
  EXPECT_THROW(read("hello\n"), CheckpointError);
  EXPECT_THROW(read(text.substr(0, text.size() - 2)), CheckpointError);
  EXPECT_THROW(read(text.substr(0, text.find("end\n"))), CheckpointError);
  std::string bad_size = text;
  bad_size.replace(bad_size.find("2x3 0 24"), 8, "2x3 0 20");
  EXPECT_THROW(read(bad_size), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), CheckpointError);
}

TEST(Checkpoint, ModelRestoresFromCheckpoint) {
  Model<float> m(tiny(), 9, 3);
  Vocab vocab({"[PAD]", "[UNK]", "[TRG]", "<bos>", "<eos>", "a", "b", "c", "d"});
  EmbeddingTable table(3, 1);
  const auto ckpt = make_checkpoint(m, vocab, table);
  std::istringstream in(bytes(ckpt));
  const auto r = read_checkpoint(in);
  auto restored = model_from_checkpoint<float>(r);
  EXPECT_EQ(restored.config().to_pairs(), m.config().to_pairs());
  auto pa = m.parameters(), pb = restored.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].first, pb[i].first);
    EXPECT_TRUE(std::equal(pa[i].second.values().begin(), pa[i].second.values().end(), pb[i].second.values().begin()));
  }
  EmbeddingTable other(3, 99);
  restore_unk(r, other);
  EXPECT_EQ(other.unk(), table.unk());
}

TEST(Checkpoint, ShapeMismatchRejected) {
  Model<float> m(tiny(), 9, 3);
  Vocab vocab({"[PAD]", "[UNK]", "[TRG]", "<bos>", "<eos>", "a", "b", "c", "d"});
  auto ckpt = make_checkpoint(m, vocab, EmbeddingTable(3, 1));
  ckpt.config.emplace_back("dec_width", "5");
  EXPECT_THROW(model_from_checkpoint<float>(ckpt), CheckpointError);
}

TEST(Adam, StateSurvivesExportImport) {
  Model<double> m(tiny(), 9, 3);
  auto params = m.parameters();
  Adam<double> adam(1e-2);
  for (int s = 0; s < 3; ++s) {
    for (auto& [n, p] : params)
      for (auto& g : p.grad()) g = 0.5;
    adam.step(params);
  }
  Checkpoint ckpt;
  adam.export_state(ckpt, params);
  Adam<double> resumed(1e-2);
  resumed.import_state(ckpt, params);
  EXPECT_EQ(resumed.steps(), 3u);

  Model<double> twin(tiny(), 9, 3);
  auto tparams = twin.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    std::copy(params[i].second.values().begin(), params[i].second.values().end(), tparams[i].second.values().begin());
  for (auto* ps : {&params, &tparams})
    for (auto& [n, p] : *ps)
      for (auto& g : p.grad()) g = -0.25;
  adam.step(params);
  resumed.step(tparams);
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = 0; j < params[i].second.size(); ++j)
      EXPECT_NEAR(params[i].second.values()[j], tparams[i].second.values()[j], 1e-7);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Model<double> m(tiny(), 9, 3);
  auto params = m.parameters();
  const double before = params[0].second.values()[0];
  for (auto& [n, p] : params)
    for (auto& g : p.grad()) g = 3.0;
  Adam<double>(0.01).step(params);
  EXPECT_NEAR(params[0].second.values()[0], before - 0.01, 1e-9);
}

TEST(Adam, ClipScalesToMaxNorm) {
  Model<double> m(tiny(), 9, 3);
  auto params = m.parameters();
  std::size_t n = 0;
  for (auto& [name, p] : params) {
    for (auto& g : p.grad()) g = 1.0;
    n += p.size();
  }
  const double norm = Adam<double>::clip(params, 5.0);
  EXPECT_NEAR(norm, std::sqrt(static_cast<double>(n)), 1e-9);
  double sq = 0;
  for (auto& [name, p] : params)
    for (auto g : p.grad()) sq += g * g;
  EXPECT_NEAR(std::sqrt(sq), 5.0, 1e-9);
}
