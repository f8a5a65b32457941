#include <gtest/gtest.h>

#include <algorithm>

#include "logcad/eval.hpp"
#include "support/bleu_pairs.hpp"

using namespace logcad;

namespace {

EvalRecord record(const std::string& cand, const std::string& ref) {
  EvalRecord r;
  r.candidate = tokenize(cand);
  r.reference = tokenize(ref);
  return r;
}

using oracle::kBleuPairs;
constexpr double kPairsCorpus = oracle::kBleuPairsCorpus;

std::vector<EvalRecord> pair_records() {
  std::vector<EvalRecord> out;
  for (const auto& p : kBleuPairs) out.push_back(record(p.candidate, p.reference));
  return out;
}

}  // namespace

TEST(Bleu, IdentityIsHundred) {
  std::vector<EvalRecord> rs{record("a b c d e", "a b c d e"), record("x y z w", "x y z w")};
  EXPECT_NEAR(corpus_bleu(rs), 100.0, 1e-12);
}

TEST(Bleu, DisjointIsZero) {
  std::vector<EvalRecord> rs{record("a b c d", "e f g h")};
  EXPECT_EQ(corpus_bleu(rs), 0.0);
}

TEST(Bleu, EmptyRecordsRejected) { EXPECT_THROW(corpus_bleu({}), std::invalid_argument); }

TEST(Bleu, ClippedCounts) {
  auto s = bleu_stats(tokenize("the the the the of japan"), tokenize("the of japan the"));
  EXPECT_EQ(s.matches[0], 4);
  EXPECT_EQ(s.totals[0], 6);
  EXPECT_EQ(s.matches[1], 2);
  EXPECT_EQ(s.totals[1], 5);
  EXPECT_EQ(s.matches[2], 1);
  EXPECT_EQ(s.matches[3], 0);
}

TEST(Bleu, HandWorkedPairs) {
  for (const auto& p : kBleuPairs) {
    EXPECT_NEAR(corpus_bleu({record(p.candidate, p.reference)}), p.bleu, 1e-6) << p.candidate;
    EXPECT_NEAR(smoothed_sentence_bleu(tokenize(p.candidate), tokenize(p.reference)), p.smoothed, 1e-6)
        << p.candidate;
  }
  EXPECT_NEAR(corpus_bleu(pair_records()), kPairsCorpus, 1e-6);
}

TEST(Bleu, DuplicationAndPermutationInvariance) {
  auto rs = pair_records();
  const double base = corpus_bleu(rs);
  auto doubled = rs;
  doubled.insert(doubled.end(), rs.begin(), rs.end());
  EXPECT_NEAR(corpus_bleu(doubled), base, 1e-9);
  std::reverse(rs.begin(), rs.end());
  std::rotate(rs.begin(), rs.begin() + 2, rs.end());
  EXPECT_NEAR(corpus_bleu(rs), base, 1e-9);
}

TEST(Bleu, BrevityPenaltyOnlyForShortCandidates) {
  // A prefix candidate has precision 1 and BP exp(1 - 8/5).
  EXPECT_NEAR(corpus_bleu({record("a b c d e", "a b c d e f g h")}), 100.0 * std::exp(1.0 - 8.0 / 5.0), 1e-9);
  // Longer candidate: BP = 1, precisions 5/8, 4/7, 3/6, 2/5.
  EXPECT_NEAR(corpus_bleu({record("a b c d e f g h", "a b c d e")}),
              100.0 * std::pow(5.0 / 8 * 4.0 / 7 * 3.0 / 6 * 2.0 / 5, 0.25), 1e-9);
}

TEST(Bleu, ScoreIsBounded) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EvalRecord> rs;
    for (int i = 0; i < 5; ++i) {
      EvalRecord r;
      for (std::size_t j = 0, n = 1 + rng.below(8); j < n; ++j) r.candidate.push_back(std::string(1, 'a' + rng.below(3)));
      for (std::size_t j = 0, n = 1 + rng.below(8); j < n; ++j) r.reference.push_back(std::string(1, 'a' + rng.below(3)));
      rs.push_back(r);
    }
    const double b = corpus_bleu(rs);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 100.0 + 1e-9);
    EXPECT_GE(mean_sentence_bleu(rs), 0.0);
  }
}

TEST(Bins, SingleBinEqualsCorpus) {
  auto rs = pair_records();
  for (auto& r : rs) r.context_length = 7;
  auto rows = binned_report(rs, "context_len");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].count, 5u);
  EXPECT_NEAR(rows[0].bleu, corpus_bleu(rs), 1e-12);
  for (std::size_t b = 1; b < 4; ++b) EXPECT_TRUE(rows[b].empty());
  EXPECT_NE(format_bins_tsv(rows).find("11-20\t0\tempty"), std::string::npos);
}

TEST(Bins, UnknownAxisRejected) { EXPECT_THROW(binned_report(pair_records(), "length"), std::invalid_argument); }

TEST(Bins, SensesCountDistinctReferences) {
  std::vector<Entry> entries{*make_entry({"a"}, {"[TRG]"}, {"x"}), *make_entry({"b"}, {"[TRG]"}, {"y"}),
                             *make_entry({"b"}, {"[TRG]"}, {"z"}), *make_entry({"b"}, {"[TRG]"}, {"y"})};
  std::vector<EvalRecord> rs(4);
  for (std::size_t i = 0; i < 4; ++i) rs[i].id = i;
  EmbeddingTable table(2, 1);
  table.insert("a", {0, 0});
  annotate_bins(rs, entries, table);
  EXPECT_EQ(rs[0].senses, 1u);
  EXPECT_EQ(rs[1].senses, 2u);
  EXPECT_EQ(bin_of(rs[0], BinAxis::senses), 0u);
  EXPECT_EQ(rs[0].unk_ratio, 0.0);
  EXPECT_EQ(rs[1].unk_ratio, 1.0);
  EXPECT_EQ(rs[0].context_length, 1u);
}

TEST(Bins, TwentyRecordHandCount) {
  // senses 1,1,1,1,1,1,1,2,2,2,2,3,3,3,4,4,5,6,7,9
  // unk    0,0,0,.05,.1,.1,.2,.25,.3,.3,.33,.5,.5,.5,.5,.66,.75,1,1,1
  // ctx    1,5,10,10,11,15,20,20,20,21,25,30,30,31,40,50,60,70,80,99
  const std::size_t senses[] = {1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 4, 4, 5, 6, 7, 9};
  const double unk[] = {0, 0, 0, .05, .1, .1, .2, .25, .3, .3, 1.0 / 3, .5, .5, .5, .5, 2.0 / 3, .75, 1, 1, 1};
  const std::size_t ctx[] = {1, 5, 10, 10, 11, 15, 20, 20, 20, 21, 25, 30, 30, 31, 40, 50, 60, 70, 80, 99};
  std::vector<EvalRecord> rs;
  for (std::size_t i = 0; i < 20; ++i) {
    auto r = record("a b c d", "a b c d");
    r.senses = senses[i];
    r.unk_ratio = unk[i];
    r.context_length = ctx[i];
    rs.push_back(r);
  }
  auto counts = [&](const char* axis) {
    std::vector<std::size_t> c;
    for (const auto& row : binned_report(rs, axis)) c.push_back(row.count);
    return c;
  };
  EXPECT_EQ(counts("senses"), (std::vector<std::size_t>{7, 4, 3, 6}));
  EXPECT_EQ(counts("unk_ratio"), (std::vector<std::size_t>{4, 2, 2, 3, 0, 4, 1, 1, 0, 3}));
  EXPECT_EQ(counts("context_len"), (std::vector<std::size_t>{4, 5, 4, 7}));
}
