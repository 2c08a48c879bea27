#include "medkg/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "medkg/encoder.hpp"
#include "medkg/ops.hpp"

namespace medkg {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("train config: learning_rate must be positive");
  }
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
  if (max_epochs < 0) throw std::invalid_argument("train config: max_epochs must be nonnegative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("train config: adam betas must lie in [0,1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("train config: adam_eps must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw std::invalid_argument("train config: lr_decay_factor must lie in (0,1]");
  }
  if (lr_decay_patience < 1 || early_stop_patience < 1) {
    throw std::invalid_argument("train config: patience values must be >= 1");
  }
  if (early_stop_min_delta < 0.0) {
    throw std::invalid_argument("train config: early_stop_min_delta must be nonnegative");
  }
  if (ratio_train < 0.0 || ratio_val < 0.0 || ratio_test < 0.0 ||
      std::abs(ratio_train + ratio_val + ratio_test - 1.0) > 1e-9) {
    throw std::invalid_argument("train config: split ratios must sum to 1");
  }
}

SplitCorpus split_corpus(const std::vector<Document>& corpus,
                         const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = corpus.size();
  if (n < 10) {
    throw std::runtime_error("split_corpus: corpus of " + std::to_string(n) +
                             " documents is below the minimum of 10");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  rng.shuffle(order);

  const auto take = [&](double ratio) {
    return static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(n) + 1e-9));
  };
  const std::size_t val_count = take(cfg.ratio_val);
  const std::size_t test_count = take(cfg.ratio_test);
  const std::size_t train_count = n - val_count - test_count;

  SplitCorpus out;
  for (std::size_t i = 0; i < n; ++i) {
    const Document& d = corpus[order[i]];
    if (i < train_count) {
      out.train.push_back(d);
    } else if (i < train_count + val_count) {
      out.val.push_back(d);
    } else {
      out.test.push_back(d);
    }
  }
  return out;
}

void adam_step(const std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, const TrainConfig& cfg, double lr) {
  cfg.validate();
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
  state.step += 1;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const bool snap = current_precision() == Precision::train32;

  for (const auto& [name, t] : params) {
    if (!t.requires_grad || !t.grad) {
      throw std::invalid_argument("adam_step: parameter '" + name +
                                  "' carries no gradient buffer");
    }
    const std::size_t n = t.numel();
    std::vector<double>& m = state.m[name];
    std::vector<double>& v = state.v[name];
    if (m.empty()) m.assign(n, 0.0);
    if (v.empty()) v.assign(n, 0.0);
    if (m.size() != n || v.size() != n) {
      throw std::invalid_argument("adam_step: state shape mismatch for '" + name +
                                  "' (" + std::to_string(m.size()) + " vs " +
                                  std::to_string(n) + ")");
    }
    std::vector<double>& value = *t.data;
    const std::vector<double>& grad = *t.grad;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / corr1;
      const double v_hat = v[i] / corr2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
    if (snap) {
      for (std::size_t i = 0; i < n; ++i) {
        value[i] = static_cast<double>(static_cast<float>(value[i]));
      }
    }
  }
}

namespace {

// Trailing count of epochs that failed to improve on the running best by
// min_delta. The first epoch has nothing to improve on and counts as stale.
// When decays fire, the counter restarts after each one.
int stale_epochs(const std::vector<double>& history, double min_delta,
                 int reset_patience) {
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const bool improved = i > 0 && history[i] <= best - min_delta;
    stale = improved ? 0 : stale + 1;
    if (reset_patience > 0 && stale >= reset_patience) stale = 0;
    best = std::min(best, history[i]);
  }
  return stale;
}

}  // namespace

double lr_schedule_update(const std::vector<double>& val_history,
                          double current_lr, const TrainConfig& cfg) {
  cfg.validate();
  if (val_history.empty()) {
    throw std::invalid_argument("lr_schedule_update: empty history");
  }
  // stale_epochs returns 0 exactly when a decay fires at the final epoch.
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  bool fired_now = false;
  for (std::size_t i = 0; i < val_history.size(); ++i) {
    const bool improved = i > 0 && val_history[i] <= best - cfg.early_stop_min_delta;
    stale = improved ? 0 : stale + 1;
    fired_now = false;
    if (stale >= cfg.lr_decay_patience) {
      stale = 0;
      fired_now = true;
    }
    best = std::min(best, val_history[i]);
  }
  return fired_now ? current_lr * cfg.lr_decay_factor : current_lr;
}

bool early_stop_check(const std::vector<double>& val_history,
                      const TrainConfig& cfg) {
  cfg.validate();
  if (val_history.empty()) {
    throw std::invalid_argument("early_stop_check: empty history");
  }
  return stale_epochs(val_history, cfg.early_stop_min_delta, 0) >=
         cfg.early_stop_patience;
}

TrainReport train_loop(
    const std::vector<std::pair<std::string, Tensor>>& params,
    std::size_t num_train,
    const std::function<Tensor(const std::vector<std::size_t>&)>& batch_loss,
    const std::function<double()>& val_loss, const TrainConfig& cfg) {
  cfg.validate();
  if (num_train == 0) throw std::invalid_argument("train_loop: no training documents");

  TrainReport report;
  if (cfg.max_epochs == 0) return report;

  Rng rng(cfg.seed);
  AdamState state;
  double lr = cfg.learning_rate;
  std::vector<double> val_history;

  // Best-validation snapshot of raw parameter values.
  std::vector<std::vector<double>> best_values;
  best_values.reserve(params.size());
  for (const auto& [name, t] : params) best_values.push_back(*t.data);
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(num_train);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    int step = 0;
    for (std::size_t start = 0; start < num_train; start += batch) {
      ++step;
      const std::size_t end = std::min(num_train, start + batch);
      const std::vector<std::size_t> indices(order.begin() + start,
                                             order.begin() + end);
      for (const auto& [name, t] : params) t.zero_grad();
      Tensor loss = batch_loss(indices);
      if (loss.numel() != 1) {
        throw std::invalid_argument("train_loop: batch loss must be scalar");
      }
      if (!loss.all_finite()) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", step " +
                                 std::to_string(step));
      }
      backward(loss);
      adam_step(params, state, cfg, lr);
      loss_sum += loss.at(0) * static_cast<double>(end - start);
    }

    double val = 0.0;
    {
      NoGradScope guard;
      val = val_loss();
    }
    if (!std::isfinite(val)) {
      throw std::runtime_error("training diverged: non-finite validation loss at epoch " +
                               std::to_string(epoch));
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(num_train);
    stats.val_loss = val;
    stats.lr = lr;
    report.history.push_back(stats);
    report.epochs_run = epoch;

    if (val < best_val) {
      best_val = val;
      report.best_epoch = epoch;
      report.best_val_loss = val;
      for (std::size_t i = 0; i < params.size(); ++i) {
        best_values[i] = *params[i].second.data;
      }
    }
    val_history.push_back(val);
    lr = lr_schedule_update(val_history, lr, cfg);
    if (early_stop_check(val_history, cfg)) break;
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    *params[i].second.data = best_values[i];
  }
  return report;
}

Dataset prepare_dataset(const std::vector<Document>& corpus,
                        const PreprocessConfig& pre, const Gazetteer& gaz,
                        const TrainConfig& cfg) {
  SplitCorpus split = split_corpus(corpus, cfg);
  std::vector<std::vector<std::string>> train_tokens;
  train_tokens.reserve(split.train.size());
  for (const Document& d : split.train) train_tokens.push_back(normalize(d.text, pre));
  Dataset data{.train = {},
               .val = {},
               .test = {},
               .vocab = Vocabulary::build(train_tokens, pre),
               .labels = LabelMap(corpus)};

  const auto link_one = [&](const Document& doc) {
    const std::vector<std::string> tokens = normalize(doc.text, pre);
    LinkedDocument out;
    out.tokens = data.vocab.encode(tokens);
    out.label = data.labels.index(doc.label);
    out.entity_ids = link_mentions(extract_mentions(tokens, gaz, doc.id), gaz);
    return out;
  };
  for (const Document& d : split.train) data.train.push_back(link_one(d));
  for (const Document& d : split.val) data.val.push_back(link_one(d));
  for (const Document& d : split.test) data.test.push_back(link_one(d));
  return data;
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::medkg: return "medkg";
    case ModelKind::medg: return "medg";
    case ModelKind::gpt_like: return "gpt_like";
  }
  throw std::domain_error("model kind: unknown enum value");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "medkg") return ModelKind::medkg;
  if (s == "medg") return ModelKind::medg;
  if (s == "gpt_like") return ModelKind::gpt_like;
  throw std::invalid_argument("model kind: unknown name '" + s + "'");
}

std::vector<std::pair<std::string, Tensor>> ModelBundle::named_params() const {
  if (kind == ModelKind::medkg) return medkg.named_params();
  return enc.named_params();
}

namespace {

std::vector<LinkedDocument> gather(const std::vector<LinkedDocument>& docs,
                                   const std::vector<std::size_t>& indices) {
  std::vector<LinkedDocument> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(docs[i]);
  return out;
}

std::vector<std::pair<std::vector<int>, int>> as_pairs(
    const std::vector<LinkedDocument>& docs) {
  std::vector<std::pair<std::vector<int>, int>> out;
  out.reserve(docs.size());
  for (const LinkedDocument& d : docs) out.emplace_back(d.tokens, d.label);
  return out;
}

}  // namespace

ModelBundle train_model(ModelKind kind, const Dataset& data,
                        const KnowledgeGraph& g, MedKGConfig cfg,
                        const TrainConfig& tcfg, bool medg_strict) {
  tcfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train_model: empty train split");
  if (data.val.empty()) throw std::invalid_argument("train_model: empty validation split");

  cfg.encoder.mode = kind == ModelKind::gpt_like ? EncoderMode::causal
                                                 : EncoderMode::bidirectional;
  ModelBundle model;
  model.kind = kind;
  model.cfg = cfg;
  model.medg_strict = medg_strict;
  model.seed = tcfg.seed;

  Rng rng(tcfg.seed);
  if (kind == ModelKind::medkg) {
    model.medkg = MedKGParams::init(cfg, g, rng);
  } else {
    model.enc = EncoderParams::init(cfg.encoder, rng);
  }
  const auto params = model.named_params();

  std::function<Tensor(const std::vector<std::size_t>&)> batch_loss;
  std::function<double()> val_loss;
  switch (kind) {
    case ModelKind::medkg:
      batch_loss = [&](const std::vector<std::size_t>& idx) {
        return medkg_cross_entropy(gather(data.train, idx), model.medkg, model.cfg, g);
      };
      val_loss = [&]() {
        return medkg_cross_entropy(data.val, model.medkg, model.cfg, g).at(0);
      };
      break;
    case ModelKind::medg:
      batch_loss = [&](const std::vector<std::size_t>& idx) {
        return medg_cross_entropy(gather(data.train, idx), model.enc,
                                  model.cfg.encoder, medg_strict);
      };
      val_loss = [&]() {
        return medg_cross_entropy(data.val, model.enc, model.cfg.encoder,
                                  medg_strict)
            .at(0);
      };
      break;
    case ModelKind::gpt_like:
      batch_loss = [&](const std::vector<std::size_t>& idx) {
        return cross_entropy_loss(as_pairs(gather(data.train, idx)), model.enc,
                                  model.cfg.encoder);
      };
      val_loss = [&]() {
        return cross_entropy_loss(as_pairs(data.val), model.enc, model.cfg.encoder)
            .at(0);
      };
      break;
  }

  model.report = train_loop(params, data.train.size(), batch_loss, val_loss, tcfg);
  return model;
}

int predict_class(const Tensor& probs) {
  if (probs.rank() != 1) {
    throw std::invalid_argument("predict_class: expected a probability vector, got " +
                                probs.shape_str());
  }
  int best = 0;
  for (std::size_t i = 1; i < probs.numel(); ++i) {
    if (probs.at(i) > probs.at(best)) best = static_cast<int>(i);
  }
  return best;
}

EvalResult evaluate_model(const ModelBundle& model,
                          const std::vector<LinkedDocument>& docs,
                          const KnowledgeGraph& g) {
  if (docs.empty()) throw std::invalid_argument("evaluate_model: no documents");
  NoGradScope guard;
  const int classes = model.cfg.encoder.num_classes;
  std::vector<int> preds, golds;
  double loss_sum = 0.0;
  for (const LinkedDocument& doc : docs) {
    Tensor probs;
    switch (model.kind) {
      case ModelKind::medkg:
        probs = medkg_forward(doc, model.medkg, model.cfg, g);
        break;
      case ModelKind::medg:
        probs = medg_forward(doc, model.enc, model.cfg.encoder, model.medg_strict);
        break;
      case ModelKind::gpt_like:
        probs = classify(doc.tokens, model.enc, model.cfg.encoder);
        break;
    }
    if (doc.label < 0 || doc.label >= classes) {
      throw std::out_of_range("evaluate_model: label " + std::to_string(doc.label) +
                              " outside [0," + std::to_string(classes) + ")");
    }
    preds.push_back(predict_class(probs));
    golds.push_back(doc.label);
    loss_sum -= std::log(probs.at(doc.label));
  }
  EvalResult out;
  out.cm = confusion(preds, golds, classes);
  out.metrics = compute_metrics(out.cm);
  out.mean_loss = loss_sum / static_cast<double>(docs.size());
  return out;
}

AblationReport ablate(const Dataset& data, const KnowledgeGraph& g,
                      const MedKGConfig& cfg, const TrainConfig& tcfg) {
  AblationReport report;
  for (ModelKind kind : {ModelKind::medkg, ModelKind::medg}) {
    ModelBundle model = train_model(kind, data, g, cfg, tcfg);
    EvalResult eval = evaluate_model(model, data.test, g);
    report.rows.push_back(
        {to_string(kind), eval.metrics.accuracy, eval.metrics.macro_f1});
  }
  return report;
}

Tensor lm_loss(const std::vector<std::vector<int>>& seqs,
               const EncoderParams& params, const EncoderConfig& cfg) {
  if (seqs.empty()) throw std::invalid_argument("lm_loss: empty batch");
  std::vector<Tensor> losses;
  losses.reserve(seqs.size());
  for (const std::vector<int>& seq : seqs) {
    losses.push_back(scale(sequence_log_prob(seq, params, cfg), -1.0));
  }
  return inv_scale(sum(concat(losses)), static_cast<double>(losses.size()));
}

}  // namespace medkg
