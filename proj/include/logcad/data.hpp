#pragma once

// Tokenisation, vocabulary, pre-trained embeddings, the dataset TSV format,
// corpus statistics and batching.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "logcad/random.hpp"

namespace logcad {

inline constexpr std::string_view kTargetMarker = "[TRG]";

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Tokeniser

inline bool is_detached_punct(char c) {
  switch (c) {
    case '.': case ',': case ';': case ':': case '!': case '?':
    case '\'': case '"': case '(': case ')':
      return true;
    default:
      return false;
  }
}

// Lowercases ASCII, splits on whitespace and detaches . , ; : ! ? ' " ( )
// as separate tokens. The exact marker "[TRG]" is kept as one token.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    if (text.substr(i, kTargetMarker.size()) == kTargetMarker) {
      flush();
      tokens.emplace_back(kTargetMarker);
      i += kTargetMarker.size();
      continue;
    }
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (is_detached_punct(c)) {
      flush();
      tokens.emplace_back(1, c);
    } else {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    ++i;
  }
  flush();
  return tokens;
}

inline std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kTrg = 2;
  static constexpr int kBos = 3;
  static constexpr int kEos = 4;

  Vocab() : tokens_{"[PAD]", "[UNK]", std::string(kTargetMarker), "<bos>", "<eos>"} { reindex(); }

  explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 5 || tokens_[kPad] != "[PAD]" || tokens_[kEos] != "<eos>")
      throw DataError("vocabulary does not start with the special tokens");
    reindex();
  }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    for (int i : ids) out.push_back(token(i));
    return out;
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Entries and the dataset TSV

struct Entry {
  std::vector<std::string> phrase;
  std::vector<std::string> context;  // contains exactly one "[TRG]" token
  std::vector<std::string> description;
  // 1-based inclusive span of the target inside `context` (the [TRG] token).
  std::size_t span_begin = 0;
  std::size_t span_end = 0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

// Builds the [TRG] span from a tokenised context; nullopt unless exactly one marker.
inline std::optional<std::size_t> find_marker(const std::vector<std::string>& context) {
  std::optional<std::size_t> pos;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (context[i] != kTargetMarker) continue;
    if (pos) return std::nullopt;
    pos = i + 1;
  }
  return pos;
}

inline std::optional<Entry> make_entry(std::vector<std::string> phrase, std::vector<std::string> context,
                                       std::vector<std::string> description) {
  if (phrase.empty() || description.empty()) return std::nullopt;
  const auto pos = find_marker(context);
  if (!pos) return std::nullopt;
  Entry e;
  e.phrase = std::move(phrase);
  e.context = std::move(context);
  e.description = std::move(description);
  e.span_begin = e.span_end = *pos;
  return e;
}

inline std::optional<Entry> parse_entry_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto t1 = line.find('\t');
  if (t1 == std::string_view::npos) return std::nullopt;
  const auto t2 = line.find('\t', t1 + 1);
  if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos) return std::nullopt;
  return make_entry(tokenize(line.substr(0, t1)), tokenize(line.substr(t1 + 1, t2 - t1 - 1)),
                    tokenize(line.substr(t2 + 1)));
}

struct DatasetLoad {
  std::vector<Entry> entries;
  std::size_t rejected = 0;
  std::vector<std::size_t> rejected_lines;  // 1-based
};

inline DatasetLoad read_dataset(std::istream& in) {
  DatasetLoad out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (auto e = parse_entry_line(line)) {
      out.entries.push_back(std::move(*e));
    } else {
      ++out.rejected;
      out.rejected_lines.push_back(lineno);
    }
  }
  return out;
}

inline DatasetLoad load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path);
  return read_dataset(in);
}

inline std::string format_entry(const Entry& e) {
  return join(e.phrase) + '\t' + join(e.context) + '\t' + join(e.description) + '\n';
}

inline void write_dataset(std::ostream& out, const std::vector<Entry>& entries) {
  for (const auto& e : entries) out << format_entry(e);
}

inline void save_dataset(const std::string& path, const std::vector<Entry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset " + path);
  write_dataset(out, entries);
}

// Vocabulary of at most `max_size` entries (specials included). Description
// tokens are ranked first by frequency; context tokens fill remaining room.
// Ties break lexicographically.
inline Vocab build_vocab(const std::vector<Entry>& entries, std::size_t max_size) {
  std::map<std::string, std::size_t> desc_counts, ctx_counts;
  for (const auto& e : entries) {
    for (const auto& t : e.description) ++desc_counts[t];
    for (const auto& t : e.context)
      if (t != kTargetMarker) ++ctx_counts[t];
  }
  auto ranked = [](const std::map<std::string, std::size_t>& counts) {
    std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return v;
  };
  Vocab specials;
  std::vector<std::string> tokens = specials.tokens();
  std::unordered_set<std::string> seen(tokens.begin(), tokens.end());
  for (const auto* counts : {&desc_counts, &ctx_counts})
    for (const auto& [tok, n] : ranked(*counts)) {
      if (tokens.size() >= max_size) break;
      if (seen.insert(tok).second) tokens.push_back(tok);
    }
  return Vocab(std::move(tokens));
}

// ---------------------------------------------------------------------------
// Pre-trained embeddings

inline constexpr double kUnkVectorRange = 0.25;

class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  // Empty table: every lookup yields the shared UNK vector.
  EmbeddingTable(std::size_t width, std::uint64_t seed) : width_(width) { draw_unk(seed); }

  std::size_t width() const { return width_; }
  std::size_t size() const { return vectors_.size(); }
  bool contains(const std::string& token) const { return vectors_.count(token) > 0; }
  const std::vector<float>& unk() const { return unk_; }

  const std::vector<float>& lookup(const std::string& token) const {
    auto it = vectors_.find(token);
    return it == vectors_.end() ? unk_ : it->second;
  }

  void set_unk(std::vector<float> v) {
    if (v.size() != width_) throw DataError("UNK vector width mismatch");
    unk_ = std::move(v);
  }

  void insert(const std::string& token, std::vector<float> v) {
    if (width_ == 0) width_ = v.size();
    if (v.size() != width_) throw DataError("embedding width mismatch for '" + token + "'");
    vectors_[token] = std::move(v);
  }

  // Reads the text vector format: optional "count width" header, then
  // "token v1 ... vN" per line. When `keep` is given only those tokens are stored.
  static EmbeddingTable read(std::istream& in, std::uint64_t seed,
                             const std::unordered_set<std::string>* keep = nullptr) {
    EmbeddingTable table;
    std::string line;
    std::size_t lineno = 0;
    std::vector<float> values;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::istringstream fields(line);
      std::string token;
      if (!(fields >> token)) continue;
      values.clear();
      std::string field;
      while (fields >> field) values.push_back(parse_float(field, lineno));
      if (lineno == 1 && values.size() == 1 && is_integer(token) && is_integer(field)) {
        table.width_ = static_cast<std::size_t>(std::stoul(field));
        continue;
      }
      if (table.width_ == 0) table.width_ = values.size();
      if (values.size() != table.width_ || values.empty())
        throw DataError("embedding line " + std::to_string(lineno) + ": expected " +
                        std::to_string(table.width_) + " values, found " + std::to_string(values.size()));
      if (keep == nullptr || keep->count(token)) table.vectors_[token] = values;
    }
    if (table.width_ == 0) throw DataError("embedding file has no vectors");
    table.draw_unk(seed);
    return table;
  }

  static EmbeddingTable load(const std::string& path, std::uint64_t seed,
                             const std::unordered_set<std::string>* keep = nullptr) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embeddings " + path);
    return read(in, seed, keep);
  }

  // Percentage of distinct phrase-component tokens that have a vector.
  double coverage(const std::vector<Entry>& entries) const {
    std::set<std::string> tokens;
    for (const auto& e : entries) tokens.insert(e.phrase.begin(), e.phrase.end());
    if (tokens.empty()) return 0.0;
    std::size_t covered = 0;
    for (const auto& t : tokens) covered += contains(t) ? 1 : 0;
    return 100.0 * static_cast<double>(covered) / static_cast<double>(tokens.size());
  }

 private:
  static bool is_integer(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
  }

  static float parse_float(const std::string& s, std::size_t lineno) {
    try {
      std::size_t used = 0;
      const float v = std::stof(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw DataError("embedding line " + std::to_string(lineno) + ": bad number '" + s + "'");
    }
  }

  void draw_unk(std::uint64_t seed) {
    Rng rng(seed ^ 0x554e4bULL);
    unk_.resize(width_);
    for (auto& v : unk_) v = static_cast<float>(rng.uniform(-kUnkVectorRange, kUnkVectorRange));
  }

  std::size_t width_ = 0;
  std::unordered_map<std::string, std::vector<float>> vectors_;
  std::vector<float> unk_;
};

// Sum of the per-word vectors; out-of-table words contribute the UNK vector.
inline std::vector<float> phrase_embedding(const std::vector<std::string>& phrase, const EmbeddingTable& table) {
  std::vector<float> sum(table.width(), 0.0f);
  for (const auto& w : phrase) {
    const auto& v = table.lookup(w);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Corpus statistics

struct CorpusStats {
  std::size_t phrases = 0;
  std::size_t entries = 0;
  double phrase_length = 0;
  double context_length = 0;
  double description_length = 0;
};

inline CorpusStats corpus_stats(const std::vector<Entry>& entries) {
  if (entries.empty()) throw DataError("corpus_stats: empty entry list");
  CorpusStats s;
  std::set<std::vector<std::string>> distinct;
  double p = 0, c = 0, d = 0;
  for (const auto& e : entries) {
    distinct.insert(e.phrase);
    p += static_cast<double>(e.phrase.size());
    c += static_cast<double>(e.context.size());
    d += static_cast<double>(e.description.size());
  }
  const auto n = static_cast<double>(entries.size());
  s.phrases = distinct.size();
  s.entries = entries.size();
  s.phrase_length = p / n;
  s.context_length = c / n;
  s.description_length = d / n;
  return s;
}

inline std::string with_thousands(std::size_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

// Aligned plain-text table with the columns
// Split | #Phrases | #Entries | Phrase length | Context length | Desc. length.
inline std::string format_stats(const std::vector<std::pair<std::string, CorpusStats>>& rows) {
  std::ostringstream os;
  auto fixed2 = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << v;
    return s.str();
  };
  os << std::left << std::setw(8) << "Split" << std::right << std::setw(10) << "#Phrases" << std::setw(10)
     << "#Entries" << std::setw(8) << "Phrase" << std::setw(9) << "Context" << std::setw(7) << "Desc." << '\n';
  for (const auto& [name, s] : rows) {
    os << std::left << std::setw(8) << name << std::right << std::setw(10) << with_thousands(s.phrases)
       << std::setw(10) << with_thousands(s.entries) << std::setw(8) << fixed2(s.phrase_length) << std::setw(9)
       << fixed2(s.context_length) << std::setw(7) << fixed2(s.description_length) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Batching

struct Batch {
  std::vector<std::size_t> entry_index;  // positions in the source list
  std::size_t context_width = 0;         // padded length of each context row
  std::vector<int> context_ids;          // rows x context_width, row-major
  std::vector<std::uint8_t> context_mask;
  std::vector<std::size_t> context_lengths;
  std::vector<std::vector<int>> phrase_ids;
  std::vector<std::vector<std::string>> phrases;
  std::vector<std::string> phrase_chars;  // "sonic_boom"
  std::size_t description_width = 0;      // tokens + <eos>, padded
  std::vector<int> description_ids;
  std::vector<std::uint8_t> description_mask;
  std::vector<std::size_t> description_lengths;  // including <eos>
  std::vector<std::pair<std::size_t, std::size_t>> spans;

  std::size_t size() const { return entry_index.size(); }

  std::vector<int> context_row(std::size_t r) const {
    auto first = context_ids.begin() + static_cast<std::ptrdiff_t>(r * context_width);
    return {first, first + static_cast<std::ptrdiff_t>(context_lengths[r])};
  }

  std::vector<int> description_row(std::size_t r) const {
    auto first = description_ids.begin() + static_cast<std::ptrdiff_t>(r * description_width);
    return {first, first + static_cast<std::ptrdiff_t>(description_lengths[r])};
  }
};

inline Batch collate(const std::vector<Entry>& entries, std::span<const std::size_t> indices, const Vocab& vocab) {
  Batch b;
  for (auto i : indices) {
    b.context_width = std::max(b.context_width, entries[i].context.size());
    b.description_width = std::max(b.description_width, entries[i].description.size() + 1);
  }
  b.context_ids.assign(indices.size() * b.context_width, Vocab::kPad);
  b.context_mask.assign(indices.size() * b.context_width, 0);
  b.description_ids.assign(indices.size() * b.description_width, Vocab::kPad);
  b.description_mask.assign(indices.size() * b.description_width, 0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Entry& e = entries[indices[r]];
    b.entry_index.push_back(indices[r]);
    for (std::size_t j = 0; j < e.context.size(); ++j) {
      b.context_ids[r * b.context_width + j] = vocab.id(e.context[j]);
      b.context_mask[r * b.context_width + j] = 1;
    }
    b.context_lengths.push_back(e.context.size());
    auto desc = vocab.encode(e.description);
    desc.push_back(Vocab::kEos);
    for (std::size_t j = 0; j < desc.size(); ++j) {
      b.description_ids[r * b.description_width + j] = desc[j];
      b.description_mask[r * b.description_width + j] = 1;
    }
    b.description_lengths.push_back(desc.size());
    b.phrase_ids.push_back(vocab.encode(e.phrase));
    b.phrases.push_back(e.phrase);
    b.phrase_chars.push_back([&] {
      std::string s;
      for (std::size_t k = 0; k < e.phrase.size(); ++k) s += (k ? "_" : "") + e.phrase[k];
      return s;
    }());
    b.spans.emplace_back(e.span_begin, e.span_end);
  }
  return b;
}

// Shuffles by seed, then sorts pools of ~20 batches by context length so that
// each batch pads little, and finally shuffles the batch order.
inline std::vector<Batch> make_batches(const std::vector<Entry>& entries, const Vocab& vocab,
                                       std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw DataError("batch size must be at least 1");
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t pool = batch_size * 20;
  for (std::size_t start = 0; start < order.size(); start += pool) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + pool));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return entries[a].context.size() < entries[b].context.size();
    });
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    batches.push_back(collate(entries, std::span<const std::size_t>(order.data() + start, n), vocab));
  }
  rng.shuffle(batches);
  return batches;
}

}  // namespace logcad
