// Command-line front end: data generation, KG building, training, evaluation,
// ablation, and gradient checking. Exit codes: 0 success, 2 usage, 1 runtime.
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "medkg/checkpoint.hpp"
#include "medkg/corpus.hpp"
#include "medkg/generator.hpp"
#include "medkg/grad_suite.hpp"
#include "medkg/kg.hpp"
#include "medkg/model.hpp"
#include "medkg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace medkg;

namespace {

// Every knob a command can consume, merged from (highest precedence first)
// CLI flags, the --config JSON file, MEDKG_SEED, and built-in defaults.
struct RunConfig {
  std::string profile = "desk";
  std::string model = "medg";
  bool medg_strict = false;

  int dim = 32;
  int layers = 2;
  int heads = 2;
  int ffn_mult = 4;
  int max_seq_len = 64;
  bool tie_lm_head = true;
  bool truncate_long_inputs = true;
  int entity_dim = 0;
  int smooth_rounds = 1;
  std::string kg_attention = "scaled_dot";

  double learning_rate = 0.0005;
  int batch_size = 64;
  int max_epochs = 50;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_decay_factor = 0.5;
  int lr_decay_patience = 2;
  int early_stop_patience = 5;
  double early_stop_min_delta = 1e-4;
  double ratio_train = 0.8;
  double ratio_val = 0.1;
  double ratio_test = 0.1;
  std::uint64_t seed = 7;

  bool lowercase = true;
  std::string stemmer = "suffix";
  int min_token_freq = 2;
  std::string stopwords;

  int docs = 1000;
  int classes = 4;
  int noise = 200;
  double signal_fraction = 0.5;
  double holdout = 0.0;

  int window = 20;
  int min_support = 1;
};

void apply_profile(RunConfig& rc) {
  if (rc.profile == "desk") {
    rc.dim = 32;
    rc.layers = 2;
    rc.heads = 2;
  } else if (rc.profile == "paper") {
    rc.dim = 256;
    rc.layers = 4;
    rc.heads = 8;
  } else {
    throw std::invalid_argument("unknown profile '" + rc.profile +
                                "' (expected desk or paper)");
  }
}

json resolved_json(const RunConfig& rc) {
  return {{"profile", rc.profile},
          {"model", rc.model},
          {"medg_strict", rc.medg_strict},
          {"dim", rc.dim},
          {"layers", rc.layers},
          {"heads", rc.heads},
          {"ffn_mult", rc.ffn_mult},
          {"max_seq_len", rc.max_seq_len},
          {"tie_lm_head", rc.tie_lm_head},
          {"truncate_long_inputs", rc.truncate_long_inputs},
          {"entity_dim", rc.entity_dim},
          {"smooth_rounds", rc.smooth_rounds},
          {"kg_attention", rc.kg_attention},
          {"learning_rate", rc.learning_rate},
          {"batch_size", rc.batch_size},
          {"max_epochs", rc.max_epochs},
          {"adam_beta1", rc.adam_beta1},
          {"adam_beta2", rc.adam_beta2},
          {"adam_eps", rc.adam_eps},
          {"lr_decay_factor", rc.lr_decay_factor},
          {"lr_decay_patience", rc.lr_decay_patience},
          {"early_stop_patience", rc.early_stop_patience},
          {"early_stop_min_delta", rc.early_stop_min_delta},
          {"ratio_train", rc.ratio_train},
          {"ratio_val", rc.ratio_val},
          {"ratio_test", rc.ratio_test},
          {"seed", rc.seed},
          {"lowercase", rc.lowercase},
          {"stemmer", rc.stemmer},
          {"min_token_freq", rc.min_token_freq},
          {"stopwords", rc.stopwords},
          {"docs", rc.docs},
          {"classes", rc.classes},
          {"noise", rc.noise},
          {"signal_fraction", rc.signal_fraction},
          {"holdout", rc.holdout},
          {"window", rc.window},
          {"min_support", rc.min_support}};
}

template <typename T>
bool take(const json& j, const std::string& key, T& dst) {
  auto it = j.find(key);
  if (it == j.end()) return false;
  try {
    dst = it->get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config file: bad value for '" + key + "'");
  }
  return true;
}

void apply_config_json(RunConfig& rc, const json& j) {
  if (!j.is_object()) {
    throw std::invalid_argument("config file: top level must be an object");
  }
  static const std::vector<std::string> known = {
      "profile", "model", "medg_strict", "dim", "layers", "heads", "ffn_mult",
      "max_seq_len", "tie_lm_head", "truncate_long_inputs", "entity_dim",
      "smooth_rounds", "kg_attention", "learning_rate", "batch_size",
      "max_epochs", "adam_beta1", "adam_beta2", "adam_eps", "lr_decay_factor",
      "lr_decay_patience", "early_stop_patience", "early_stop_min_delta",
      "ratio_train", "ratio_val", "ratio_test", "seed", "lowercase", "stemmer",
      "min_token_freq", "stopwords", "docs", "classes", "noise",
      "signal_fraction", "holdout", "window", "min_support"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("config file: unknown key '" + key + "'");
    }
  }
  // Profile expands first so explicit file keys can override its presets.
  if (take(j, "profile", rc.profile)) apply_profile(rc);
  take(j, "model", rc.model);
  take(j, "medg_strict", rc.medg_strict);
  take(j, "dim", rc.dim);
  take(j, "layers", rc.layers);
  take(j, "heads", rc.heads);
  take(j, "ffn_mult", rc.ffn_mult);
  take(j, "max_seq_len", rc.max_seq_len);
  take(j, "tie_lm_head", rc.tie_lm_head);
  take(j, "truncate_long_inputs", rc.truncate_long_inputs);
  take(j, "entity_dim", rc.entity_dim);
  take(j, "smooth_rounds", rc.smooth_rounds);
  take(j, "kg_attention", rc.kg_attention);
  take(j, "learning_rate", rc.learning_rate);
  take(j, "batch_size", rc.batch_size);
  take(j, "max_epochs", rc.max_epochs);
  take(j, "adam_beta1", rc.adam_beta1);
  take(j, "adam_beta2", rc.adam_beta2);
  take(j, "adam_eps", rc.adam_eps);
  take(j, "lr_decay_factor", rc.lr_decay_factor);
  take(j, "lr_decay_patience", rc.lr_decay_patience);
  take(j, "early_stop_patience", rc.early_stop_patience);
  take(j, "early_stop_min_delta", rc.early_stop_min_delta);
  take(j, "ratio_train", rc.ratio_train);
  take(j, "ratio_val", rc.ratio_val);
  take(j, "ratio_test", rc.ratio_test);
  take(j, "seed", rc.seed);
  take(j, "lowercase", rc.lowercase);
  take(j, "stemmer", rc.stemmer);
  take(j, "min_token_freq", rc.min_token_freq);
  take(j, "stopwords", rc.stopwords);
  take(j, "docs", rc.docs);
  take(j, "classes", rc.classes);
  take(j, "noise", rc.noise);
  take(j, "signal_fraction", rc.signal_fraction);
  take(j, "holdout", rc.holdout);
  take(j, "window", rc.window);
  take(j, "min_support", rc.min_support);
}

RunConfig base_config(const std::string& config_path) {
  RunConfig rc;
  if (const char* env = std::getenv("MEDKG_SEED")) {
    try {
      std::size_t used = 0;
      rc.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument("MEDKG_SEED: not an unsigned integer: '" +
                                  std::string(env) + "'");
    }
  }
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config file " + config_path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw std::invalid_argument("config file " + config_path + ": " +
                                  e.what());
    }
    apply_config_json(rc, j);
  }
  return rc;
}

PreprocessConfig preprocess_config(const RunConfig& rc) {
  PreprocessConfig pre;
  pre.lowercase = rc.lowercase;
  if (rc.stemmer == "suffix") {
    pre.stemmer = StemmerKind::suffix;
  } else if (rc.stemmer == "none") {
    pre.stemmer = StemmerKind::none;
  } else {
    throw std::invalid_argument("unknown stemmer '" + rc.stemmer +
                                "' (expected suffix or none)");
  }
  pre.min_token_freq = rc.min_token_freq;
  pre.max_seq_len = rc.max_seq_len;
  if (!rc.stopwords.empty()) pre.stopwords = load_stopwords(rc.stopwords);
  return pre;
}

TrainConfig train_config(const RunConfig& rc) {
  TrainConfig t;
  t.learning_rate = rc.learning_rate;
  t.batch_size = rc.batch_size;
  t.max_epochs = rc.max_epochs;
  t.adam_beta1 = rc.adam_beta1;
  t.adam_beta2 = rc.adam_beta2;
  t.adam_eps = rc.adam_eps;
  t.lr_decay_factor = rc.lr_decay_factor;
  t.lr_decay_patience = rc.lr_decay_patience;
  t.early_stop_patience = rc.early_stop_patience;
  t.early_stop_min_delta = rc.early_stop_min_delta;
  t.ratio_train = rc.ratio_train;
  t.ratio_val = rc.ratio_val;
  t.ratio_test = rc.ratio_test;
  t.seed = rc.seed;
  t.validate();
  return t;
}

MedKGConfig model_config(const RunConfig& rc, int vocab_size, int num_classes) {
  MedKGConfig cfg;
  cfg.encoder.vocab_size = vocab_size;
  cfg.encoder.max_seq_len = rc.max_seq_len;
  cfg.encoder.dim = rc.dim;
  cfg.encoder.layers = rc.layers;
  cfg.encoder.heads = rc.heads;
  cfg.encoder.ffn_mult = rc.ffn_mult;
  cfg.encoder.num_classes = num_classes;
  cfg.encoder.tie_lm_head = rc.tie_lm_head;
  cfg.encoder.truncate_long_inputs = rc.truncate_long_inputs;
  cfg.entity_dim = rc.entity_dim;
  cfg.kg_attention = scoring_kind_from_string(rc.kg_attention);
  cfg.smooth_rounds = rc.smooth_rounds;
  return cfg;
}

std::string corpus_file(const std::string& path) {
  if (fs::is_directory(path)) return (fs::path(path) / "corpus.jsonl").string();
  return path;
}

std::string gazetteer_file(const std::string& gaz, const std::string& corpus) {
  if (!gaz.empty()) return gaz;
  if (fs::is_directory(corpus)) {
    return (fs::path(corpus) / "gazetteer.tsv").string();
  }
  throw std::invalid_argument(
      "--gazetteer is required unless --corpus points at a gen-data directory");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void write_json(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

int cmd_gen_data(const RunConfig& rc, const std::string& out_dir) {
  GeneratorConfig g;
  g.num_docs = rc.docs;
  g.num_classes = rc.classes;
  g.vocab_noise = rc.noise;
  g.seed = rc.seed;
  g.kg_signal_fraction = rc.signal_fraction;
  g.kg_holdout = rc.holdout;
  g.validate();

  SyntheticData data = generate_synthetic(g);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir + ": " + ec.message());

  const std::string digest = config_digest(resolved_json(rc));
  write_corpus(data.docs, (fs::path(out_dir) / "corpus.jsonl").string());
  data.gazetteer.write_tsv((fs::path(out_dir) / "gazetteer.tsv").string());
  write_triples_tsv(data.gold_triples,
                    (fs::path(out_dir) / "gold_triples.tsv").string());
  std::string readme =
      "# Synthetic medical-records corpus\n\n"
      "Deterministic output of `medkg gen-data`.\n\n";
  readme += "- documents: " + std::to_string(rc.docs) + "\n";
  readme += "- classes: " + std::to_string(rc.classes) + "\n";
  readme += "- noise vocabulary: " + std::to_string(rc.noise) + "\n";
  readme += "- kg_signal_fraction: " + json(rc.signal_fraction).dump() + "\n";
  readme += "- kg_holdout: " + json(rc.holdout).dump() + "\n";
  readme += "- seed: " + std::to_string(rc.seed) + "\n";
  readme += "- config_digest: " + digest + "\n\n";
  readme +=
      "Files: corpus.jsonl (one {\"id\",\"text\",\"label\"} per line), "
      "gazetteer.tsv (surface, type, canonical id), gold_triples.tsv "
      "(head, relation, tail, support).\n";
  write_text((fs::path(out_dir) / "README.md").string(), readme);

  std::cout << "gen-data: wrote " << data.docs.size() << " documents, "
            << data.gazetteer.size() << " gazetteer rows, "
            << data.gold_triples.size() << " gold triples to " << out_dir
            << " (digest " << digest << ", seed " << rc.seed << ")\n";
  return 0;
}

int cmd_build_kg(const RunConfig& rc, const std::string& corpus_path,
                 const std::string& gaz_path, const std::string& out_path,
                 const std::string& merge_path) {
  std::vector<Document> docs = read_corpus(corpus_file(corpus_path));
  Gazetteer gaz = Gazetteer::read_tsv(gazetteer_file(gaz_path, corpus_path));
  PreprocessConfig pre = preprocess_config(rc);

  KnowledgeGraph g = build_graph(docs, pre, gaz, rc.window);
  if (!merge_path.empty()) {
    g = merge_graphs(g, graph_from(gaz, read_triples_tsv(merge_path)));
  }
  g = quality_filter(g, rc.min_support);
  write_triples_tsv(g.triples, out_path);

  const std::string digest = config_digest(resolved_json(rc));
  write_json(out_path + ".meta.json", {{"config_digest", digest},
                                       {"seed", rc.seed},
                                       {"entities", g.entities.size()},
                                       {"triples", g.triples.size()}});
  std::cout << "build-kg: " << g.entities.size() << " entities, "
            << g.triples.size() << " triples -> " << out_path << " (digest "
            << digest << ", seed " << rc.seed << ")\n";
  return 0;
}

KnowledgeGraph load_graph(const Gazetteer& gaz, const std::string& kg_path) {
  if (kg_path.empty()) return graph_from(gaz, {});
  return graph_from(gaz, read_triples_tsv(kg_path));
}

int cmd_train(const RunConfig& rc, const std::string& corpus_path,
              const std::string& gaz_path, const std::string& kg_path,
              const std::string& out_dir) {
  const ModelKind kind = model_kind_from_string(rc.model);
  if (kind == ModelKind::medkg && kg_path.empty()) {
    throw std::invalid_argument("train: --kg is required for model medkg");
  }
  std::vector<Document> docs = read_corpus(corpus_file(corpus_path));
  Gazetteer gaz = Gazetteer::read_tsv(gazetteer_file(gaz_path, corpus_path));
  PreprocessConfig pre = preprocess_config(rc);
  TrainConfig tcfg = train_config(rc);
  Dataset data = prepare_dataset(docs, pre, gaz, tcfg);
  KnowledgeGraph g = load_graph(gaz, kg_path);
  MedKGConfig cfg = model_config(rc, data.vocab.size(),
                                 data.labels.size());

  ModelBundle model = train_model(kind, data, g, cfg, tcfg, rc.medg_strict);
  save_checkpoint(model, out_dir);

  const json resolved = resolved_json(rc);
  const std::string digest = config_digest(resolved);
  write_json((fs::path(out_dir) / "run.json").string(),
             {{"command", "train"},
              {"config", resolved},
              {"config_digest", digest},
              {"seed", rc.seed}});

  EvalResult result = evaluate_model(model, data.test, g);
  write_json((fs::path(out_dir) / "metrics.json").string(),
             metrics_report_json(to_string(kind), result, digest, rc.seed));

  const TrainReport& rep = model.report;
  std::cout << "train: " << to_string(kind) << " for " << rep.epochs_run
            << " epochs (best epoch " << rep.best_epoch << ", best val loss "
            << rep.best_val_loss << ")\n";
  std::cout << "train: test accuracy " << result.metrics.accuracy
            << ", macro F1 " << result.metrics.macro_f1 << "\n";
  std::cout << "train: checkpoint -> " << out_dir << " (digest " << digest
            << ", seed " << rc.seed << ")\n";
  return 0;
}

int cmd_eval(RunConfig rc, const std::string& ckpt, const std::string& corpus_path,
             const std::string& gaz_path, const std::string& kg_path,
             const std::string& split, const std::string& out_path) {
  ModelBundle model = load_checkpoint(ckpt);
  std::string digest;
  const fs::path run_path = fs::path(ckpt) / "run.json";
  if (fs::exists(run_path)) {
    std::ifstream in(run_path);
    json run = json::parse(in);
    apply_config_json(rc, run.at("config"));
    digest = run.at("config_digest").get<std::string>();
  } else {
    digest = config_digest(resolved_json(rc));
  }
  rc.seed = model.seed;  // reproduce the training split exactly

  std::vector<Document> docs = read_corpus(corpus_file(corpus_path));
  Gazetteer gaz = Gazetteer::read_tsv(gazetteer_file(gaz_path, corpus_path));
  Dataset data = prepare_dataset(docs, preprocess_config(rc), gaz,
                                 train_config(rc));
  const std::vector<LinkedDocument>* chosen = nullptr;
  if (split == "train") chosen = &data.train;
  else if (split == "val") chosen = &data.val;
  else if (split == "test") chosen = &data.test;
  else throw std::invalid_argument("eval: unknown split '" + split + "'");

  KnowledgeGraph g = load_graph(gaz, kg_path);
  EvalResult result = evaluate_model(model, *chosen, g);
  const std::string out =
      out_path.empty()
          ? (fs::path(ckpt) / ("metrics_" + split + ".json")).string()
          : out_path;
  write_json(out, metrics_report_json(to_string(model.kind), result, digest,
                                      model.seed));
  std::cout << "eval: " << to_string(model.kind) << " on " << split << ": accuracy "
            << result.metrics.accuracy << ", macro F1 "
            << result.metrics.macro_f1 << " -> " << out << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& rc, const std::string& corpus_path,
               const std::string& gaz_path, const std::string& kg_path,
               const std::string& out_path) {
  if (kg_path.empty()) {
    throw std::invalid_argument("ablate: --kg is required");
  }
  std::vector<Document> docs = read_corpus(corpus_file(corpus_path));
  Gazetteer gaz = Gazetteer::read_tsv(gazetteer_file(gaz_path, corpus_path));
  TrainConfig tcfg = train_config(rc);
  Dataset data = prepare_dataset(docs, preprocess_config(rc), gaz, tcfg);
  KnowledgeGraph g = load_graph(gaz, kg_path);
  MedKGConfig cfg = model_config(rc, data.vocab.size(),
                                 data.labels.size());

  AblationReport report = ablate(data, g, cfg, tcfg);
  const std::string digest = config_digest(resolved_json(rc));
  json rows = json::array();
  for (const AblationRow& row : report.rows) {
    rows.push_back({{"model", row.model},
                    {"accuracy", row.accuracy},
                    {"macro_f1", row.macro_f1}});
  }
  write_json(out_path, {{"rows", rows},
                        {"config_digest", digest},
                        {"seed", rc.seed}});
  for (const AblationRow& row : report.rows) {
    std::cout << "ablate: " << row.model << " accuracy " << row.accuracy
              << ", macro F1 " << row.macro_f1 << "\n";
  }
  std::cout << "ablate: report -> " << out_path << " (digest " << digest
            << ", seed " << rc.seed << ")\n";
  return 0;
}

int cmd_grad_check() {
  std::vector<GradSuiteCase> cases = run_grad_check_suite();
  double worst = 0.0;
  bool all_pass = true;
  for (const GradSuiteCase& c : cases) {
    std::cout << "grad-check: " << c.name << " max rel err "
              << c.report.max_rel_err << " (eps " << c.eps << ", tolerance "
              << c.tolerance << ") " << (c.pass ? "PASS" : "FAIL") << "\n";
    worst = std::max(worst, c.report.max_rel_err);
    all_pass = all_pass && c.pass;
  }
  std::cout << "grad-check: worst case " << worst << " over " << cases.size()
            << " cases: " << (all_pass ? "PASS" : "FAIL") << "\n";
  return all_pass ? 0 : 1;
}

struct CommonFlags {
  std::string config;
  CLI::Option* profile_opt = nullptr;
  CLI::Option* dim_opt = nullptr;
  CLI::Option* layers_opt = nullptr;
  CLI::Option* heads_opt = nullptr;
};

// Flag values land in `flags`; the merge into the resolved RunConfig happens
// after parsing so file values never clobber explicit flags.
void add_model_flags(CLI::App* sub, RunConfig& flags, CommonFlags& common) {
  common.profile_opt =
      sub->add_option("--profile", flags.profile, "desk or paper preset");
  common.dim_opt = sub->add_option("--dim", flags.dim, "model width");
  common.layers_opt = sub->add_option("--layers", flags.layers, "block count");
  common.heads_opt = sub->add_option("--heads", flags.heads, "attention heads");
  sub->add_option("--ffn-mult", flags.ffn_mult, "feed-forward multiplier");
  sub->add_option("--max-seq-len", flags.max_seq_len, "token truncation length");
  sub->add_option("--entity-dim", flags.entity_dim,
                  "entity embedding width (0: encoder dim)");
  sub->add_option("--smooth-rounds", flags.smooth_rounds,
                  "neighbor smoothing rounds at init");
  sub->add_option("--kg-attention", flags.kg_attention,
                  "entity attention kind (dot or scaled_dot)");
  sub->add_option("--lr", flags.learning_rate, "Adam learning rate");
  sub->add_option("--batch", flags.batch_size, "batch size");
  sub->add_option("--epochs", flags.max_epochs, "max training epochs");
  sub->add_option("--min-token-freq", flags.min_token_freq,
                  "vocabulary frequency cutoff");
  sub->add_option("--stopwords", flags.stopwords, "stopword file");
}

void merge_profile_flags(RunConfig& rc, const RunConfig& flags,
                         const CommonFlags& common) {
  if (common.profile_opt->count() > 0) {
    rc.profile = flags.profile;
    apply_profile(rc);
  }
  if (common.dim_opt->count() > 0) rc.dim = flags.dim;
  if (common.layers_opt->count() > 0) rc.layers = flags.layers;
  if (common.heads_opt->count() > 0) rc.heads = flags.heads;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"medkg: medical text mining with knowledge-graph fusion"};
  app.require_subcommand(1);

  RunConfig flags;  // raw flag values; merged by precedence after parse
  CommonFlags common;
  std::string corpus_path, gaz_path, kg_path, out_path, merge_path;
  std::string ckpt_path, split = "test";

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--docs", flags.docs, "number of documents");
  gen->add_option("--classes", flags.classes, "number of disease classes");
  gen->add_option("--noise", flags.noise, "noise vocabulary size");
  gen->add_option("--signal-fraction", flags.signal_fraction,
                  "fraction of KG-only-signal documents");
  gen->add_option("--holdout", flags.holdout,
                  "fraction of signal docs with one-off drugs");
  gen->add_option("--seed", flags.seed, "generation seed");
  gen->add_option("--config", common.config, "JSON config file");

  CLI::App* build = app.add_subcommand("build-kg", "build a knowledge graph");
  build->add_option("--corpus", corpus_path, "corpus.jsonl or gen-data dir")
      ->required();
  build->add_option("--gazetteer", gaz_path, "gazetteer TSV");
  build->add_option("--out", out_path, "output triples TSV")->required();
  build->add_option("--window", flags.window, "co-occurrence token window");
  build->add_option("--min-support", flags.min_support,
                    "quality filter threshold");
  build->add_option("--merge", merge_path, "triples TSV merged into the graph");
  build->add_option("--stopwords", flags.stopwords, "stopword file");
  build->add_option("--min-token-freq", flags.min_token_freq,
                    "vocabulary frequency cutoff");
  build->add_option("--config", common.config, "JSON config file");

  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--corpus", corpus_path, "corpus.jsonl or gen-data dir")
      ->required();
  train->add_option("--gazetteer", gaz_path, "gazetteer TSV");
  train->add_option("--kg", kg_path, "knowledge graph triples TSV");
  train->add_option("--model", flags.model, "medkg, medg, or gpt_like");
  train->add_flag("--medg-strict", flags.medg_strict,
                  "bag-of-embeddings text baseline");
  train->add_option("--out", out_path, "checkpoint directory")->required();
  train->add_option("--seed", flags.seed, "training seed");
  train->add_option("--config", common.config, "JSON config file");
  add_model_flags(train, flags, common);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt_path, "checkpoint directory")->required();
  eval->add_option("--corpus", corpus_path, "corpus.jsonl or gen-data dir")
      ->required();
  eval->add_option("--gazetteer", gaz_path, "gazetteer TSV");
  eval->add_option("--kg", kg_path, "knowledge graph triples TSV");
  eval->add_option("--split", split, "train, val, or test");
  eval->add_option("--out", out_path, "metrics JSON path");
  eval->add_option("--config", common.config, "JSON config file");

  CLI::App* ablt = app.add_subcommand("ablate", "train medkg and medg, compare");
  ablt->add_option("--corpus", corpus_path, "corpus.jsonl or gen-data dir")
      ->required();
  ablt->add_option("--gazetteer", gaz_path, "gazetteer TSV");
  ablt->add_option("--kg", kg_path, "knowledge graph triples TSV");
  ablt->add_option("--out", out_path, "ablation report JSON path");
  ablt->add_option("--seed", flags.seed, "training seed");
  ablt->add_option("--config", common.config, "JSON config file");
  add_model_flags(ablt, flags, common);

  CLI::App* gc = app.add_subcommand(
      "grad-check", "finite-difference validation of every gradient");
  (void)gc;

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunConfig rc = base_config(common.config);

    auto merge_seed = [&](CLI::App* sub) {
      if (sub->count("--seed") > 0) rc.seed = flags.seed;
    };
    if (gen->parsed()) {
      if (gen->count("--docs") > 0) rc.docs = flags.docs;
      if (gen->count("--classes") > 0) rc.classes = flags.classes;
      if (gen->count("--noise") > 0) rc.noise = flags.noise;
      if (gen->count("--signal-fraction") > 0) {
        rc.signal_fraction = flags.signal_fraction;
      }
      if (gen->count("--holdout") > 0) rc.holdout = flags.holdout;
      merge_seed(gen);
      return cmd_gen_data(rc, out_path);
    }
    if (build->parsed()) {
      if (build->count("--window") > 0) rc.window = flags.window;
      if (build->count("--min-support") > 0) rc.min_support = flags.min_support;
      if (build->count("--stopwords") > 0) rc.stopwords = flags.stopwords;
      if (build->count("--min-token-freq") > 0) {
        rc.min_token_freq = flags.min_token_freq;
      }
      return cmd_build_kg(rc, corpus_path, gaz_path, out_path, merge_path);
    }
    auto merge_model_flags = [&](CLI::App* sub) {
      merge_profile_flags(rc, flags, common);
      if (sub->count("--ffn-mult") > 0) rc.ffn_mult = flags.ffn_mult;
      if (sub->count("--max-seq-len") > 0) rc.max_seq_len = flags.max_seq_len;
      if (sub->count("--entity-dim") > 0) rc.entity_dim = flags.entity_dim;
      if (sub->count("--smooth-rounds") > 0) {
        rc.smooth_rounds = flags.smooth_rounds;
      }
      if (sub->count("--kg-attention") > 0) rc.kg_attention = flags.kg_attention;
      if (sub->count("--lr") > 0) rc.learning_rate = flags.learning_rate;
      if (sub->count("--batch") > 0) rc.batch_size = flags.batch_size;
      if (sub->count("--epochs") > 0) rc.max_epochs = flags.max_epochs;
      if (sub->count("--min-token-freq") > 0) {
        rc.min_token_freq = flags.min_token_freq;
      }
      if (sub->count("--stopwords") > 0) rc.stopwords = flags.stopwords;
      merge_seed(sub);
    };
    if (train->parsed()) {
      if (train->count("--model") > 0) rc.model = flags.model;
      if (train->count("--medg-strict") > 0) rc.medg_strict = flags.medg_strict;
      merge_model_flags(train);
      return cmd_train(rc, corpus_path, gaz_path, kg_path, out_path);
    }
    if (eval->parsed()) {
      return cmd_eval(rc, ckpt_path, corpus_path, gaz_path, kg_path, split,
                      out_path);
    }
    if (ablt->parsed()) {
      merge_model_flags(ablt);
      if (out_path.empty()) out_path = "ablation.json";
      return cmd_ablate(rc, corpus_path, gaz_path, kg_path, out_path);
    }
    return cmd_grad_check();
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
