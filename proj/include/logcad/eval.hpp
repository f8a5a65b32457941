#pragma once

// BLEU-4 and the binned analyses (number of senses, unknown-word ratio of the
// phrase, local context length).

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "logcad/data.hpp"

namespace logcad {

using Tokens = std::vector<std::string>;

inline constexpr std::size_t kBleuOrder = 4;

struct BleuStats {
  std::array<double, kBleuOrder> matches{};
  std::array<double, kBleuOrder> totals{};
  double candidate_length = 0;
  double reference_length = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (std::size_t n = 0; n < kBleuOrder; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    candidate_length += o.candidate_length;
    reference_length += o.reference_length;
    return *this;
  }
};

// Clipped n-gram matches of one candidate against one reference.
inline BleuStats bleu_stats(const Tokens& candidate, const Tokens& reference) {
  BleuStats s;
  s.candidate_length = static_cast<double>(candidate.size());
  s.reference_length = static_cast<double>(reference.size());
  for (std::size_t n = 1; n <= kBleuOrder; ++n) {
    std::map<std::vector<std::string>, int> ref_counts, cand_counts;
    for (std::size_t i = 0; i + n <= reference.size(); ++i)
      ++ref_counts[Tokens(reference.begin() + static_cast<std::ptrdiff_t>(i),
                          reference.begin() + static_cast<std::ptrdiff_t>(i + n))];
    for (std::size_t i = 0; i + n <= candidate.size(); ++i)
      ++cand_counts[Tokens(candidate.begin() + static_cast<std::ptrdiff_t>(i),
                           candidate.begin() + static_cast<std::ptrdiff_t>(i + n))];
    double matched = 0, total = 0;
    for (const auto& [gram, count] : cand_counts) {
      total += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    s.matches[n - 1] = matched;
    s.totals[n - 1] = total;
  }
  return s;
}

// 100 * BP * exp(mean_n log p_n), BP = exp(min(0, 1 - r/c)); zero when any p_n is zero.
inline double bleu_from_stats(const BleuStats& s) {
  if (s.candidate_length <= 0) return 0.0;
  double log_sum = 0;
  for (std::size_t n = 0; n < kBleuOrder; ++n) {
    if (s.matches[n] <= 0 || s.totals[n] <= 0) return 0.0;
    log_sum += std::log(s.matches[n] / s.totals[n]);
  }
  const double bp = std::exp(std::min(0.0, 1.0 - s.reference_length / s.candidate_length));
  return 100.0 * bp * std::exp(log_sum / kBleuOrder);
}

struct EvalRecord {
  std::size_t id = 0;
  Tokens phrase;
  Tokens candidate;
  Tokens reference;
  std::size_t senses = 1;        // distinct references of this phrase in the corpus
  double unk_ratio = 0;          // phrase words without a pre-trained vector
  std::size_t context_length = 0;
};

inline double corpus_bleu(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("corpus_bleu: no records");
  BleuStats total;
  for (const auto& r : records) total += bleu_stats(r.candidate, r.reference);
  return bleu_from_stats(total);
}

// Add-one smoothing on n >= 2 counts (Lin & Och style).
inline double smoothed_sentence_bleu(const Tokens& candidate, const Tokens& reference) {
  auto s = bleu_stats(candidate, reference);
  if (s.candidate_length <= 0) return 0.0;
  for (std::size_t n = 1; n < kBleuOrder; ++n) {
    s.matches[n] += 1;
    s.totals[n] += 1;
  }
  return bleu_from_stats(s);
}

inline double mean_sentence_bleu(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("mean_sentence_bleu: no records");
  double sum = 0;
  for (const auto& r : records) sum += smoothed_sentence_bleu(r.candidate, r.reference);
  return sum / static_cast<double>(records.size());
}

// Fills `senses`, `unk_ratio` and `context_length` from the evaluation corpus.
inline void annotate_bins(std::vector<EvalRecord>& records, const std::vector<Entry>& entries,
                          const EmbeddingTable& table) {
  std::map<Tokens, std::set<Tokens>> refs;
  for (const auto& e : entries) refs[e.phrase].insert(e.description);
  for (auto& r : records) {
    const Entry& e = entries.at(r.id);
    r.senses = refs[e.phrase].size();
    std::size_t unk = 0;
    for (const auto& w : e.phrase) unk += table.contains(w) ? 0 : 1;
    r.unk_ratio = e.phrase.empty() ? 0.0 : static_cast<double>(unk) / static_cast<double>(e.phrase.size());
    r.context_length = e.context.size();
  }
}

enum class BinAxis { senses, unk_ratio, context_len };

inline BinAxis parse_bin_axis(std::string_view name) {
  if (name == "senses") return BinAxis::senses;
  if (name == "unk_ratio") return BinAxis::unk_ratio;
  if (name == "context_len") return BinAxis::context_len;
  throw std::invalid_argument("unknown bin axis '" + std::string(name) + "'");
}

inline std::vector<std::string> bin_labels(BinAxis axis) {
  switch (axis) {
    case BinAxis::senses: return {"1", "2", "3", ">=4"};
    case BinAxis::unk_ratio: {
      std::vector<std::string> labels;
      for (int d = 0; d < 10; ++d) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(1) << d / 10.0 << '-' << (d + 1) / 10.0;
        labels.push_back(os.str());
      }
      return labels;
    }
    case BinAxis::context_len: return {"<=10", "11-20", "21-30", ">30"};
  }
  return {};
}

inline std::size_t bin_of(const EvalRecord& r, BinAxis axis) {
  switch (axis) {
    case BinAxis::senses: return std::min<std::size_t>(std::max<std::size_t>(r.senses, 1), 4) - 1;
    case BinAxis::unk_ratio: {
      // [0,0.1), [0.1,0.2), ..., [0.9,1.0]; the small offset keeps exact
      // tenths such as 0.3 (stored as 0.29999...) in their own decile.
      const auto d = static_cast<std::size_t>(std::floor(r.unk_ratio * 10.0 + 1e-9));
      return std::min<std::size_t>(d, 9);
    }
    case BinAxis::context_len:
      if (r.context_length <= 10) return 0;
      if (r.context_length <= 20) return 1;
      if (r.context_length <= 30) return 2;
      return 3;
  }
  return 0;
}

struct BinRow {
  std::string label;
  std::size_t count = 0;
  double bleu = 0;  // meaningless when count == 0
  bool empty() const { return count == 0; }
};

inline std::vector<BinRow> binned_report(const std::vector<EvalRecord>& records, BinAxis axis) {
  const auto labels = bin_labels(axis);
  std::vector<std::vector<EvalRecord>> groups(labels.size());
  for (const auto& r : records) groups[bin_of(r, axis)].push_back(r);
  std::vector<BinRow> rows;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    BinRow row{labels[b], groups[b].size(), 0.0};
    if (!groups[b].empty()) row.bleu = corpus_bleu(groups[b]);
    rows.push_back(row);
  }
  return rows;
}

inline std::vector<BinRow> binned_report(const std::vector<EvalRecord>& records, std::string_view axis) {
  return binned_report(records, parse_bin_axis(axis));
}

inline std::string format_bins_tsv(const std::vector<BinRow>& rows) {
  std::ostringstream os;
  os << "bin\tcount\tbleu\n";
  for (const auto& r : rows) {
    os << r.label << '\t' << r.count << '\t';
    if (r.empty()) os << "empty";
    else os << std::fixed << std::setprecision(2) << r.bleu;
    os << '\n';
  }
  return os.str();
}

inline std::string format_bins_text(const std::vector<BinRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "bin" << std::right << std::setw(8) << "count" << std::setw(8) << "BLEU" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(10) << r.label << std::right << std::setw(8) << r.count << std::setw(8);
    if (r.empty()) os << "empty";
    else os << std::fixed << std::setprecision(2) << r.bleu;
    os << '\n';
  }
  return os.str();
}

}  // namespace logcad
