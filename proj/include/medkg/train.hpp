#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "medkg/corpus.hpp"
#include "medkg/kg.hpp"
#include "medkg/metrics.hpp"
#include "medkg/model.hpp"

namespace medkg {

struct TrainConfig {
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
  std::uint64_t seed = 7;
  double ratio_train = 0.8;
  double ratio_val = 0.1;
  double ratio_test = 0.1;

  void validate() const;
};

struct SplitCorpus {
  std::vector<Document> train, val, test;
};

// Seeded shuffle, then floor-allocated sizes with the remainder going to
// train. Partitions are disjoint and exhaustive.
SplitCorpus split_corpus(const std::vector<Document>& corpus,
                         const TrainConfig& cfg);

struct AdamState {
  long long step = 0;
  std::map<std::string, std::vector<double>> m, v;
};

// Standard Adam with bias correction, in place on the parameter tensors,
// reading gradients from their grad buffers. Under train32 the updated values
// are snapped to the float32 grid.
void adam_step(const std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, const TrainConfig& cfg, double lr);

// Halve the rate when the validation loss has gone lr_decay_patience
// consecutive epochs without improving on the running best by min_delta;
// the counter restarts after each halving.
double lr_schedule_update(const std::vector<double>& val_history,
                          double current_lr, const TrainConfig& cfg);

// True when the tail of the history shows early_stop_patience consecutive
// epochs without such an improvement.
bool early_stop_check(const std::vector<double>& val_history,
                      const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> history;
  int best_epoch = -1;  // -1 when no epoch ran
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
  int epochs_run = 0;
};

// Generic seeded loop: shuffled batches, Adam, lr schedule, early stopping,
// best-validation parameter restore. batch_loss must build the loss graph for
// the given train indices; val_loss is evaluated without recording.
TrainReport train_loop(
    const std::vector<std::pair<std::string, Tensor>>& params,
    std::size_t num_train,
    const std::function<Tensor(const std::vector<std::size_t>&)>& batch_loss,
    const std::function<double()>& val_loss, const TrainConfig& cfg);

struct Dataset {
  std::vector<LinkedDocument> train, val, test;
  Vocabulary vocab;      // built from the train split
  LabelMap labels;       // lexicographic over the full corpus
};

// Split, build the vocabulary on the train split, then tokenize and
// entity-link every document.
Dataset prepare_dataset(const std::vector<Document>& corpus,
                        const PreprocessConfig& pre, const Gazetteer& gaz,
                        const TrainConfig& cfg);

enum class ModelKind { medkg, medg, gpt_like };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct ModelBundle {
  ModelKind kind = ModelKind::medg;
  MedKGConfig cfg;       // encoder config inside; mode is set per kind
  bool medg_strict = false;
  std::uint64_t seed = 0;
  MedKGParams medkg;     // populated iff kind == medkg
  EncoderParams enc;     // populated otherwise
  TrainReport report;

  std::vector<std::pair<std::string, Tensor>> named_params() const;
};

// Train one model kind on the prepared dataset. cfg.encoder.mode is forced to
// the kind's mode (bidirectional for medkg/medg, causal for gpt_like).
ModelBundle train_model(ModelKind kind, const Dataset& data,
                        const KnowledgeGraph& g, MedKGConfig cfg,
                        const TrainConfig& tcfg, bool medg_strict = false);

struct EvalResult {
  ConfusionMatrix cm;
  Metrics metrics;
  double mean_loss = 0.0;
};

int predict_class(const Tensor& probs);  // argmax, lowest index on ties

EvalResult evaluate_model(const ModelBundle& model,
                          const std::vector<LinkedDocument>& docs,
                          const KnowledgeGraph& g);

struct AblationRow {
  std::string model;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // medkg first, then medg
};

// Train medkg and medg with the same seed, config, and splits; evaluate both
// on the test split.
AblationReport ablate(const Dataset& data, const KnowledgeGraph& g,
                      const MedKGConfig& cfg, const TrainConfig& tcfg);

// Mean negative sequence log probability over the batch; scalar tensor.
Tensor lm_loss(const std::vector<std::vector<int>>& seqs,
               const EncoderParams& params, const EncoderConfig& cfg);

}  // namespace medkg
