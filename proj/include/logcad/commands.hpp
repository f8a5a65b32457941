#pragma once

// The pipeline commands behind the `logcad` executable: extract, train,
// evaluate, describe. Each throws CommandError (or a module error) on failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "logcad/checkpoint.hpp"
#include "logcad/data.hpp"
#include "logcad/decode.hpp"
#include "logcad/eval.hpp"
#include "logcad/model.hpp"
#include "logcad/train.hpp"
#include "logcad/wiki.hpp"

namespace logcad {

class CommandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  std::string emb_path;          // empty: UNK vectors only
  std::string out_dir = "out";
  std::string checkpoint_path;   // evaluate / describe
  std::string resume_path;       // train
  std::string articles_path;
  std::string items_path;
  ModelConfig model;
  TrainOptions train;
  std::uint64_t seed = 1;
  std::size_t beam = 1;
  std::size_t max_len = 30;

  // Returns false for unknown keys.
  bool set(const std::string& key, const std::string& value) {
    if (model.set(key, value)) return true;
    if (key == "train") train_path = value;
    else if (key == "valid") valid_path = value;
    else if (key == "test") test_path = value;
    else if (key == "emb") emb_path = value;
    else if (key == "out") out_dir = value;
    else if (key == "checkpoint") checkpoint_path = value;
    else if (key == "resume") resume_path = value;
    else if (key == "articles") articles_path = value;
    else if (key == "items") items_path = value;
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "beam") beam = std::stoull(value);
    else if (key == "max_len") max_len = std::stoull(value);
    else if (key == "epochs") train.epochs = std::stoull(value);
    else if (key == "batch_size") train.batch_size = std::stoull(value);
    else if (key == "learning_rate") train.learning_rate = std::stod(value);
    else if (key == "clip_norm") train.clip_norm = std::stod(value);
    else if (key == "patience") train.patience = std::stoull(value);
    else return false;
    return true;
  }
};

// Flat "key = value" lines; '#' starts a comment.
inline void apply_config_file(std::istream& in, RunConfig& config) {
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CommandError("config line " + std::to_string(lineno) + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    if (!config.set(key, trim(line.substr(eq + 1))))
      throw CommandError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
}

inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    const bool attach_left = t.size() == 1 && std::string_view(".,;:!?)").find(t[0]) != std::string_view::npos;
    if (!out.empty() && !attach_left && out.back() != '(') out += ' ';
    out += t;
  }
  return out;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractSummary {
  wiki::ExtractStats stats;
  std::size_t train = 0, valid = 0, test = 0;
};

inline std::string stats_report(const wiki::Split& split) {
  std::vector<std::pair<std::string, CorpusStats>> rows;
  std::string empty;
  for (const auto& [name, entries] : {std::pair<std::string, const std::vector<Entry>*>{"Train", &split.train},
                                      {"Valid", &split.valid},
                                      {"Test", &split.test}}) {
    if (entries->empty()) empty += name + " split is empty\n";
    else rows.emplace_back(name, corpus_stats(*entries));
  }
  return (rows.empty() ? std::string() : format_stats(rows)) + empty;
}

inline ExtractSummary cmd_extract(const RunConfig& config, std::ostream& log) {
  std::ifstream articles_in(config.articles_path);
  if (!articles_in) throw CommandError("cannot read articles file '" + config.articles_path + "'");
  std::ifstream items_in(config.items_path);
  if (!items_in) throw CommandError("cannot read items file '" + config.items_path + "'");
  const auto items = wiki::read_items(items_in);
  if (items.empty()) log << "warning: items table is empty; no entries can be produced\n";
  ExtractSummary summary;
  const auto entries = wiki::extract_wikipedia(wiki::read_articles(articles_in), items, summary.stats);
  const auto split = wiki::split_by_phrase(entries, config.seed);
  std::filesystem::create_directories(config.out_dir);
  const std::filesystem::path out(config.out_dir);
  save_dataset((out / "train.tsv").string(), split.train);
  save_dataset((out / "valid.tsv").string(), split.valid);
  save_dataset((out / "test.tsv").string(), split.test);
  summary.train = split.train.size();
  summary.valid = split.valid.size();
  summary.test = split.test.size();
  const auto& s = summary.stats;
  log << "articles " << s.articles << ", sentences " << s.sentences << ", links " << s.links << " (malformed "
      << s.malformed_links << ", anchor!=title " << s.anchor_mismatch << ", no item " << s.missing_item
      << ", empty description " << s.empty_description << ")\n";
  log << "entries train " << summary.train << ", valid " << summary.valid << ", test " << summary.test << '\n';
  log << stats_report(split);
  return summary;
}

// ---------------------------------------------------------------------------
// train

inline std::vector<Entry> load_split(const std::string& path, const char* name, std::ostream& log) {
  auto loaded = load_dataset(path);
  if (loaded.rejected > 0) log << "warning: " << name << ": rejected " << loaded.rejected << " malformed lines\n";
  return std::move(loaded.entries);
}

inline EmbeddingTable load_table(const RunConfig& config, const std::vector<Entry>& entries, const Vocab* vocab,
                                 std::ostream& log) {
  if (config.emb_path.empty()) {
    if (config.model.uses_global())
      log << "warning: no embedding file given; every phrase embedding is built from the UNK vector\n";
    return EmbeddingTable(config.model.word_emb_width, config.seed);
  }
  std::unordered_set<std::string> keep;
  for (const auto& e : entries) keep.insert(e.phrase.begin(), e.phrase.end());
  if (vocab != nullptr) keep.insert(vocab->tokens().begin(), vocab->tokens().end());
  auto table = EmbeddingTable::load(config.emb_path, config.seed, &keep);
  if (table.width() != config.model.word_emb_width)
    throw CommandError("embedding width " + std::to_string(table.width()) + " does not match word_emb_width " +
                       std::to_string(config.model.word_emb_width));
  return table;
}

struct TrainSummary {
  std::size_t last_epoch = 0;
  double final_train_loss = 0;
  double best_valid_loss = std::numeric_limits<double>::infinity();
  std::vector<EpochRecord> records;
};

inline std::string format_loss(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

inline TrainSummary cmd_train(const RunConfig& config, std::ostream& log) {
  using T = float;
  if (config.train_path.empty()) throw CommandError("train: --train is required");
  config.model.validate();
  auto train = load_split(config.train_path, "train", log);
  if (train.empty()) throw CommandError("train: no usable training entries");
  std::vector<Entry> valid;
  if (!config.valid_path.empty()) valid = load_split(config.valid_path, "valid", log);

  std::optional<Checkpoint> resume;
  if (!config.resume_path.empty()) resume = load_checkpoint(config.resume_path);
  Vocab vocab = resume ? Vocab(resume->vocab) : build_vocab(train, config.model.vocab_size);
  if (resume) {
    const auto saved = config_from_checkpoint(*resume);
    if (saved.to_pairs() != config.model.to_pairs())
      throw CommandError("train: model configuration differs from the checkpoint being resumed");
  }
  std::vector<Entry> all = train;
  all.insert(all.end(), valid.begin(), valid.end());
  EmbeddingTable table = load_table(config, all, &vocab, log);
  if (resume) restore_unk(*resume, table);

  Model<T> model(config.model, vocab.size(), config.seed);
  TrainOptions options = config.train;
  options.seed = config.seed;
  Trainer<T> trainer(model, vocab, table, options);
  TrainSummary summary;
  std::size_t bad_epochs = 0;
  if (resume) {
    for (auto& [name, p] : model.parameters()) resume->copy_into(name, p);
    trainer.optimizer().import_state(*resume, model.parameters());
    summary.last_epoch = std::stoull(resume->meta_value("epoch").value_or("0"));
    if (auto best = resume->meta_value("best_valid")) summary.best_valid_loss = std::stod(*best);
    if (auto bad = resume->meta_value("bad_epochs")) bad_epochs = std::stoull(*bad);
  } else {
    model.load_context_embeddings(vocab, table);
  }

  std::filesystem::create_directories(config.out_dir);
  const std::filesystem::path out(config.out_dir);
  const auto log_path = out / "train_log.tsv";
  const bool fresh_log = !resume || !std::filesystem::exists(log_path);
  std::ofstream log_file(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log_file) throw CommandError("cannot write " + log_path.string());
  if (fresh_log) log_file << "epoch\ttrain_loss\tvalid_loss\n";

  auto checkpoint = [&](std::size_t epoch) {
    auto ckpt = make_checkpoint(model, vocab, table);
    ckpt.meta.emplace_back("epoch", std::to_string(epoch));
    ckpt.meta.emplace_back("seed", std::to_string(config.seed));
    ckpt.meta.emplace_back("best_valid", format_loss(summary.best_valid_loss));
    ckpt.meta.emplace_back("bad_epochs", std::to_string(bad_epochs));
    trainer.optimizer().export_state(ckpt, model.parameters());
    return ckpt;
  };

  for (std::size_t epoch = summary.last_epoch + 1; epoch <= options.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = trainer.train_epoch(train, epoch);
    bool improved = true;
    if (!valid.empty()) {
      rec.valid_loss = trainer.evaluate(valid);
      improved = rec.valid_loss < summary.best_valid_loss;
      if (improved) summary.best_valid_loss = rec.valid_loss;
    }
    bad_epochs = improved ? 0 : bad_epochs + 1;
    summary.records.push_back(rec);
    summary.last_epoch = epoch;
    summary.final_train_loss = rec.train_loss;
    log_file << epoch << '\t' << format_loss(rec.train_loss) << '\t' << format_loss(rec.valid_loss) << '\n';
    log_file.flush();
    log << "epoch " << epoch << " train " << format_loss(rec.train_loss) << " valid " << format_loss(rec.valid_loss)
        << '\n';
    const auto ckpt = checkpoint(epoch);
    if (improved) save_checkpoint((out / "best.ckpt").string(), ckpt);
    save_checkpoint((out / "last.ckpt").string(), ckpt);
    if (!valid.empty() && options.patience > 0 && bad_epochs >= options.patience) {
      log << "early stopping after " << epoch << " epochs\n";
      break;
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------
// shared by evaluate / describe

struct LoadedModel {
  Checkpoint checkpoint;
  Vocab vocab;
  Model<float> model;
  EmbeddingTable table;
};

inline LoadedModel load_for_inference(const RunConfig& config, const std::vector<Entry>& entries, std::ostream& log) {
  if (config.checkpoint_path.empty()) throw CommandError("--checkpoint is required");
  auto ckpt = load_checkpoint(config.checkpoint_path);
  Vocab vocab(ckpt.vocab);
  auto model = model_from_checkpoint<float>(ckpt);
  RunConfig table_config = config;
  table_config.model = model.config();
  auto table = load_table(table_config, entries, nullptr, log);
  restore_unk(ckpt, table);
  return {std::move(ckpt), std::move(vocab), std::move(model), std::move(table)};
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateSummary {
  double corpus_bleu = 0;
  double sentence_bleu = 0;
  std::vector<EvalRecord> records;
};

inline std::vector<EvalRecord> generate_records(const Model<float>& model, const Vocab& vocab,
                                                const EmbeddingTable& table, const std::vector<Entry>& entries,
                                                std::size_t beam, std::size_t max_len) {
  std::vector<EvalRecord> records;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto result = describe(model, make_input<float>(entries[i], vocab, table), beam, max_len);
    EvalRecord r;
    r.id = i;
    r.phrase = entries[i].phrase;
    r.candidate = vocab.decode(result.tokens);
    r.reference = entries[i].description;
    records.push_back(std::move(r));
  }
  annotate_bins(records, entries, table);
  return records;
}

inline EvaluateSummary cmd_evaluate(const RunConfig& config, std::ostream& log) {
  if (config.test_path.empty()) throw CommandError("evaluate: --test is required");
  const auto entries = load_split(config.test_path, "test", log);
  if (entries.empty()) throw CommandError("evaluate: no usable test entries");
  auto loaded = load_for_inference(config, entries, log);
  EvaluateSummary summary;
  summary.records = generate_records(loaded.model, loaded.vocab, loaded.table, entries, config.beam, config.max_len);
  summary.corpus_bleu = corpus_bleu(summary.records);
  summary.sentence_bleu = mean_sentence_bleu(summary.records);

  std::filesystem::create_directories(config.out_dir);
  const std::filesystem::path out(config.out_dir);
  const std::string decoder = config.beam <= 1 ? "greedy" : "beam" + std::to_string(config.beam);
  {
    std::ofstream f(out / "eval_summary.tsv");
    f << "decoder\tcorpus_bleu\tmean_sentence_bleu_smoothed\trecords\n"
      << decoder << '\t' << std::fixed << std::setprecision(2) << summary.corpus_bleu << '\t'
      << summary.sentence_bleu << '\t' << summary.records.size() << '\n';
  }
  {
    std::ofstream f(out / "predictions.tsv");
    f << "phrase\treference\tcandidate\n";
    for (const auto& r : summary.records) f << join(r.phrase) << '\t' << join(r.reference) << '\t' << join(r.candidate) << '\n';
  }
  log << "decoder " << decoder << '\n' << std::fixed << std::setprecision(2)
      << "corpus BLEU                  " << summary.corpus_bleu << '\n'
      << "mean sentence BLEU (smoothed) " << summary.sentence_bleu << '\n';
  for (const char* axis : {"senses", "unk_ratio", "context_len"}) {
    const auto rows = binned_report(summary.records, axis);
    std::ofstream f(out / (std::string("bins_") + axis + ".tsv"));
    f << format_bins_tsv(rows);
    log << '\n' << axis << '\n' << format_bins_text(rows);
  }
  return summary;
}

// ---------------------------------------------------------------------------
// describe

// Replaces the first occurrence of `phrase` in `sentence` by [TRG] unless the
// sentence already carries the marker.
inline Entry locate_phrase(const std::string& phrase, const std::string& sentence, std::ostream& log) {
  const auto phrase_tokens = tokenize(phrase);
  if (phrase_tokens.empty()) throw CommandError("describe: empty phrase");
  auto tokens = tokenize(sentence);
  Entry e;
  e.phrase = phrase_tokens;
  e.description = {"?"};
  if (find_marker(tokens)) {
    e.context = tokens;
  } else {
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i + phrase_tokens.size() <= tokens.size(); ++i)
      if (std::equal(phrase_tokens.begin(), phrase_tokens.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i)))
        hits.push_back(i);
    if (hits.empty()) throw CommandError("describe: phrase '" + phrase + "' does not occur in the sentence");
    if (hits.size() > 1) log << "warning: phrase occurs " << hits.size() << " times; using the first occurrence\n";
    e.context.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(hits[0]));
    e.context.emplace_back(kTargetMarker);
    e.context.insert(e.context.end(), tokens.begin() + static_cast<std::ptrdiff_t>(hits[0] + phrase_tokens.size()),
                     tokens.end());
  }
  const auto pos = find_marker(e.context);
  if (!pos) throw CommandError("describe: sentence must contain exactly one [TRG] marker");
  e.span_begin = e.span_end = *pos;
  return e;
}

inline std::string cmd_describe(const RunConfig& config, const std::string& phrase, const std::string& sentence,
                                std::ostream& log) {
  const auto entry = locate_phrase(phrase, sentence, log);
  auto loaded = load_for_inference(config, {entry}, log);
  const auto result =
      describe(loaded.model, make_input<float>(entry, loaded.vocab, loaded.table), config.beam, config.max_len);
  return detokenize(loaded.vocab.decode(result.tokens));
}

}  // namespace logcad
