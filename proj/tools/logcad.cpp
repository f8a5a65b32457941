// logcad: extract | train | evaluate | describe

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "logcad/commands.hpp"

namespace {

struct Overrides {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> values;  // applied after the config file
};

CLI::Option* add_override(CLI::App* app, Overrides& o, const std::string& flag, const std::string& key,
                          const std::string& help) {
  return app->add_option_function<std::string>(
      flag, [&o, key](const std::string& v) { o.values.emplace_back(key, v); }, help);
}

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_file, "key=value configuration file");
  add_override(app, o, "--seed", "seed", "random seed (default 1)");
  add_override(app, o, "--out", "out", "output directory (default out)");
}

void add_model_flags(CLI::App* app, Overrides& o) {
  add_override(app, o, "--variant", "variant", "global | local | i-attention | log-cad");
  add_override(app, o, "--emb", "emb", "pre-trained embeddings (word2vec text format)");
  add_override(app, o, "--checkpoint", "checkpoint", "model checkpoint");
}

void add_decode_flags(CLI::App* app, Overrides& o) {
  add_override(app, o, "--beam", "beam", "beam width; 1 = greedy (default 1)");
  add_override(app, o, "--max-len", "max_len", "maximum description length (default 30)");
}

logcad::RunConfig resolve(const Overrides& o) {
  logcad::RunConfig config;
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    if (!in) throw logcad::CommandError("cannot read config file '" + o.config_file + "'");
    logcad::apply_config_file(in, config);
  }
  for (const auto& [k, v] : o.values)
    if (!config.set(k, v)) throw logcad::CommandError("unknown setting '" + k + "'");
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware phrase description generation"};
  app.require_subcommand(1);
  Overrides o;

  auto* extract = app.add_subcommand("extract", "build train/valid/test TSVs from an article dump and item table");
  add_common(extract, o);
  add_override(extract, o, "--articles", "articles", "article dump")->required();
  add_override(extract, o, "--items", "items", "title<TAB>description table")->required();

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, o);
  add_model_flags(train, o);
  add_override(train, o, "--train", "train", "training TSV");
  add_override(train, o, "--valid", "valid", "validation TSV");
  add_override(train, o, "--resume", "resume", "checkpoint to resume from");
  add_override(train, o, "--epochs", "epochs", "maximum epochs (default 30)");
  add_override(train, o, "--batch-size", "batch_size", "batch size (default 128)");

  auto* evaluate = app.add_subcommand("evaluate", "generate descriptions for a test set and score them");
  add_common(evaluate, o);
  add_model_flags(evaluate, o);
  add_decode_flags(evaluate, o);
  add_override(evaluate, o, "--test", "test", "test TSV");

  std::string phrase, sentence;
  auto* describe = app.add_subcommand("describe", "describe a phrase in a sentence");
  add_common(describe, o);
  add_model_flags(describe, o);
  add_decode_flags(describe, o);
  describe->add_option("phrase", phrase, "target phrase")->required();
  describe->add_option("sentence", sentence, "sentence containing the phrase or [TRG]")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = resolve(o);
    if (extract->parsed()) {
      logcad::cmd_extract(config, std::cout);
    } else if (train->parsed()) {
      logcad::cmd_train(config, std::cerr);
    } else if (evaluate->parsed()) {
      logcad::cmd_evaluate(config, std::cout);
    } else if (describe->parsed()) {
      std::cout << logcad::cmd_describe(config, phrase, sentence, std::cerr) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
