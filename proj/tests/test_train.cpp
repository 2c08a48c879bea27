#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "medkg/encoder.hpp"
#include "medkg/kg.hpp"
#include "medkg/model.hpp"
#include "medkg/ops.hpp"
#include "medkg/rng.hpp"
#include "medkg/train.hpp"

using namespace medkg;

namespace {

std::vector<Document> toy_corpus(int n) {
  // One discriminative token per class; everything else shared.
  std::vector<Document> docs;
  for (int i = 0; i < n; ++i) {
    Document d;
    d.id = "doc" + std::to_string(i);
    if (i % 2 == 0) {
      d.text = "patient reports alphatol relief with rest";
      d.label = "atox";
    } else {
      d.text = "patient reports betanol relief with rest";
      d.label = "btox";
    }
    docs.push_back(d);
  }
  return docs;
}

MedKGConfig toy_config(const Dataset& data) {
  MedKGConfig cfg;
  cfg.encoder.vocab_size = data.vocab.size();
  cfg.encoder.max_seq_len = 8;
  cfg.encoder.dim = 8;
  cfg.encoder.layers = 1;
  cfg.encoder.heads = 2;
  cfg.encoder.ffn_mult = 2;
  cfg.encoder.mode = EncoderMode::bidirectional;
  cfg.encoder.num_classes = static_cast<int>(data.labels.labels().size());
  return cfg;
}

std::vector<double> values_of(const std::vector<std::pair<std::string, Tensor>>& params) {
  std::vector<double> out;
  for (const auto& [name, t] : params) {
    out.insert(out.end(), t.data->begin(), t.data->end());
  }
  return out;
}

}  // namespace

TEST_CASE("TrainConfig::validate rejects bad settings") {
  TrainConfig ok;
  CHECK_NOTHROW(ok.validate());
  TrainConfig bad = ok;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.max_epochs = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.adam_beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.lr_decay_factor = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.lr_decay_patience = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.early_stop_min_delta = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.ratio_train = 0.5;  // now sums to 0.7
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("split_corpus partitions deterministically") {
  TrainConfig cfg;
  SUBCASE("1000 docs at 0.8/0.1/0.1") {
    SplitCorpus s = split_corpus(toy_corpus(1000), cfg);
    CHECK(s.train.size() == 800);
    CHECK(s.val.size() == 100);
    CHECK(s.test.size() == 100);
  }
  SUBCASE("10 docs still yields non-empty parts") {
    SplitCorpus s = split_corpus(toy_corpus(10), cfg);
    CHECK(s.train.size() == 8);
    CHECK(s.val.size() == 1);
    CHECK(s.test.size() == 1);
  }
  SUBCASE("fewer than 10 documents is an error") {
    CHECK_THROWS_AS(split_corpus(toy_corpus(9), cfg), std::runtime_error);
  }
  SUBCASE("same seed, same split; parts disjoint and exhaustive") {
    std::vector<Document> corpus = toy_corpus(53);
    SplitCorpus a = split_corpus(corpus, cfg);
    SplitCorpus b = split_corpus(corpus, cfg);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
      CHECK(a.train[i].id == b.train[i].id);
    }
    std::set<std::string> seen;
    for (const auto* part : {&a.train, &a.val, &a.test}) {
      for (const Document& d : *part) {
        CHECK(seen.insert(d.id).second);  // no doc lands in two parts
      }
    }
    CHECK(seen.size() == corpus.size());
  }
  SUBCASE("different seed moves documents around") {
    std::vector<Document> corpus = toy_corpus(200);
    TrainConfig other = cfg;
    other.seed = cfg.seed + 1;
    SplitCorpus a = split_corpus(corpus, cfg);
    SplitCorpus b = split_corpus(corpus, other);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.train.size(); ++i) {
      if (a.train[i].id != b.train[i].id) any_diff = true;
    }
    CHECK(any_diff);
  }
}

TEST_CASE("adam_step follows the update rule") {
  TrainConfig cfg;
  SUBCASE("first step against a hand-computed value") {
    PrecisionScope fp(Precision::check64);
    Tensor w({1}, {2.0}, true);
    (*w.grad)[0] = 1.0;
    std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
    AdamState state;
    adam_step(params, state, cfg, 0.001);
    CHECK(state.step == 1);
    // m_hat = 1, v_hat = 1 -> delta = -lr / (1 + eps).
    const double expected = 2.0 - 0.001 / (1.0 + cfg.adam_eps);
    CHECK((*w.data)[0] == doctest::Approx(expected).epsilon(1e-15));
    CHECK(std::abs((*w.data)[0] - 1.999) < 1e-10);
  }
  SUBCASE("zero gradient leaves parameters untouched but advances the step") {
    PrecisionScope fp(Precision::check64);
    Tensor w({3}, {1.0, -2.0, 0.5}, true);
    std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
    AdamState state;
    adam_step(params, state, cfg, 0.1);
    adam_step(params, state, cfg, 0.1);
    CHECK(state.step == 2);
    CHECK((*w.data)[0] == 1.0);
    CHECK((*w.data)[1] == -2.0);
    CHECK((*w.data)[2] == 0.5);
  }
  SUBCASE("two identical runs stay bitwise identical") {
    auto run = [&] {
      Rng rng(11);
      Tensor w = Tensor::randn({4, 3}, rng, 0.5, true);
      std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
      AdamState state;
      for (int step = 0; step < 25; ++step) {
        for (std::size_t i = 0; i < w.grad->size(); ++i) {
          (*w.grad)[i] = std::sin(0.1 * step + static_cast<double>(i));
        }
        adam_step(params, state, cfg, 0.01);
      }
      return *w.data;
    };
    std::vector<double> a = run();
    std::vector<double> b = run();
    CHECK(a == b);
  }
  SUBCASE("reused state with a reshaped parameter is rejected") {
    Tensor w({2}, {1.0, 2.0}, true);
    std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
    AdamState state;
    adam_step(params, state, cfg, 0.1);
    Tensor w3({3}, {1.0, 2.0, 3.0}, true);
    std::vector<std::pair<std::string, Tensor>> params3 = {{"w", w3}};
    CHECK_THROWS_AS(adam_step(params3, state, cfg, 0.1), std::invalid_argument);
  }
  SUBCASE("training precision snaps parameters to the float32 grid") {
    PrecisionScope fp(Precision::train32);
    Tensor w({1}, {1.0}, true);
    (*w.grad)[0] = 0.7;
    std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
    AdamState state;
    adam_step(params, state, cfg, 0.001);
    const double v = (*w.data)[0];
    CHECK(v == static_cast<double>(static_cast<float>(v)));
    CHECK(v != 1.0);
  }
  SUBCASE("a parameter that never had a gradient buffer is rejected") {
    Tensor w({1}, {1.0}, false);  // no grad storage
    std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
    AdamState state;
    CHECK_THROWS_AS(adam_step(params, state, cfg, 0.1), std::invalid_argument);
  }
}

TEST_CASE("lr_schedule_update halves only after patience stale epochs") {
  TrainConfig cfg;  // patience 2, factor 0.5, min_delta 1e-4
  SUBCASE("strict improvement keeps the rate") {
    CHECK(lr_schedule_update({1.0, 0.9, 0.8, 0.7}, 0.001, cfg) == 0.001);
  }
  SUBCASE("flat history of length two halves") {
    CHECK(lr_schedule_update({0.5, 0.5}, 0.001, cfg) == 0.0005);
  }
  SUBCASE("flat history of length four has halved exactly twice") {
    std::vector<double> history;
    double lr = 0.001;
    for (int epoch = 0; epoch < 4; ++epoch) {
      history.push_back(0.5);
      lr = lr_schedule_update(history, lr, cfg);
    }
    CHECK(lr == 0.00025);
  }
  SUBCASE("improvement below min_delta still counts as stale") {
    TrainConfig tight = cfg;
    tight.early_stop_min_delta = 0.05;
    CHECK(lr_schedule_update({1.0, 0.98}, 0.001, tight) == 0.0005);
  }
  SUBCASE("improvement of exactly min_delta resets the counter") {
    TrainConfig tight = cfg;
    tight.early_stop_min_delta = 0.1;
    CHECK(lr_schedule_update({1.0, 0.9}, 0.001, tight) == 0.001);
  }
  SUBCASE("empty history is an error") {
    CHECK_THROWS_AS(lr_schedule_update({}, 0.001, cfg), std::invalid_argument);
  }
}

TEST_CASE("early_stop_check waits for patience epochs without improvement") {
  TrainConfig cfg;
  cfg.early_stop_patience = 3;
  CHECK_FALSE(early_stop_check({1.0, 0.9, 0.8, 0.7}, cfg));
  CHECK_FALSE(early_stop_check({1.0, 1.0}, cfg));
  CHECK(early_stop_check({1.0, 1.0, 1.0}, cfg));
  CHECK(early_stop_check({0.5, 0.6, 0.7, 0.8}, cfg));
  // A fresh improvement resets the stale counter.
  CHECK_FALSE(early_stop_check({1.0, 1.0, 0.5}, cfg));
  CHECK_THROWS_AS(early_stop_check({}, cfg), std::invalid_argument);
}

TEST_CASE("train_loop drives parameters toward the minimum and restores the best") {
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 4;
  cfg.max_epochs = 60;
  cfg.early_stop_patience = 10;

  Tensor w({1}, {5.0}, true);
  std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
  const Tensor target({1}, {3.0}, false);
  auto batch_loss = [&](const std::vector<std::size_t>&) {
    Tensor d = sub(w, target);
    return mul(d, d);
  };
  auto val_loss = [&] {
    const double d = (*w.data)[0] - 3.0;
    return d * d;
  };

  TrainReport report = train_loop(params, 16, batch_loss, val_loss, cfg);
  REQUIRE(!report.history.empty());
  CHECK(report.epochs_run == static_cast<int>(report.history.size()));
  CHECK(std::abs((*w.data)[0] - 3.0) < 0.05);

  // Best epoch carries the minimal validation loss in the history.
  double min_val = report.history.front().val_loss;
  for (const EpochStats& e : report.history) min_val = std::min(min_val, e.val_loss);
  CHECK(report.best_val_loss == min_val);
  REQUIRE(report.best_epoch >= 1);
  CHECK(report.history[report.best_epoch - 1].val_loss == min_val);
  // Restored parameters reproduce the best validation loss exactly.
  CHECK(val_loss() == min_val);

  // Epochs are numbered from 1 and the learning rate never increases.
  for (std::size_t i = 0; i < report.history.size(); ++i) {
    CHECK(report.history[i].epoch == static_cast<int>(i) + 1);
    if (i > 0) CHECK(report.history[i].lr <= report.history[i - 1].lr);
  }
}

TEST_CASE("train_loop edge cases") {
  TrainConfig cfg;
  SUBCASE("zero epochs is a no-op") {
    cfg.max_epochs = 0;
    Tensor w({2}, {1.0, 2.0}, true);
    std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
    TrainReport report = train_loop(
        params, 8, [&](const std::vector<std::size_t>&) { return mul(w, w); },
        [] { return 1.0; }, cfg);
    CHECK(report.history.empty());
    CHECK(report.epochs_run == 0);
    CHECK((*w.data)[0] == 1.0);
    CHECK((*w.data)[1] == 2.0);
  }
  SUBCASE("non-finite loss reports epoch and step") {
    Tensor w({1}, {1.0}, true);
    std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
    auto nan_loss = [&](const std::vector<std::size_t>&) {
      Tensor bad({1}, {std::nan("")}, false);
      return add(mul(w, w), bad);
    };
    CHECK_THROWS_WITH_AS(
        train_loop(params, 4, nan_loss, [] { return 1.0; }, cfg),
        doctest::Contains("epoch 1"), std::runtime_error);
  }
  SUBCASE("batches cover every training index each epoch") {
    cfg.max_epochs = 1;
    cfg.batch_size = 3;
    Tensor w({1}, {1.0}, true);
    std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
    std::vector<std::size_t> seen;
    train_loop(
        params, 10,
        [&](const std::vector<std::size_t>& idx) {
          seen.insert(seen.end(), idx.begin(), idx.end());
          CHECK(idx.size() <= 3);
          return mul(w, w);
        },
        [] { return 1.0; }, cfg);
    std::sort(seen.begin(), seen.end());
    std::vector<std::size_t> want(10);
    for (std::size_t i = 0; i < 10; ++i) want[i] = i;
    CHECK(seen == want);
  }
}

TEST_CASE("prepare_dataset builds vocab from the training split only") {
  TrainConfig tcfg;
  PreprocessConfig pre;
  pre.min_token_freq = 1;

  // 12 docs; one rare token that lands somewhere by the seeded shuffle.
  std::vector<Document> corpus = toy_corpus(12);
  Gazetteer gaz;
  gaz.add("alphatol", EntityType::drug, "drug:alphatol");
  gaz.add("betanol", EntityType::drug, "drug:betanol");

  Dataset data = prepare_dataset(corpus, pre, gaz, tcfg);
  CHECK(data.train.size() == 10);  // floor semantics: val 1, test 1, rest train
  CHECK(data.val.size() == 1);
  CHECK(data.test.size() == 1);
  CHECK(data.labels.labels() == std::vector<std::string>{"atox", "btox"});

  // Train tokens are known to the vocabulary; every doc got its entities.
  int with_entities = 0;
  for (const LinkedDocument& d : data.train) {
    CHECK(!d.tokens.empty());
    for (int id : d.tokens) CHECK(id >= Vocabulary::kBos);  // freq 1 kept
    if (!d.entity_ids.empty()) ++with_entities;
    for (const std::string& e : d.entity_ids) {
      CHECK((e == "drug:alphatol" || e == "drug:betanol"));
    }
  }
  CHECK(with_entities == static_cast<int>(data.train.size()));

  SUBCASE("vocabulary ignores tokens that only appear outside train") {
    // Give exactly one doc a unique token and force it into val/test by
    // checking against whichever split it landed in.
    std::vector<Document> c2 = toy_corpus(12);
    c2[4].text += " zyxulate";
    Dataset d2 = prepare_dataset(c2, pre, gaz, tcfg);
    bool in_train = false;
    for (const LinkedDocument& d : d2.train) {
      for (int id : d.tokens) {
        if (id == Vocabulary::kUnk) in_train = true;  // never UNK in train
      }
    }
    CHECK_FALSE(in_train);
    CHECK(d2.vocab.contains("zyxulate") == [&] {
      // Token enters the vocab iff doc4 was shuffled into train.
      SplitCorpus s = split_corpus(c2, tcfg);
      for (const Document& d : s.train) {
        if (d.id == "doc4") return true;
      }
      return false;
    }());
  }
}

TEST_CASE("predict_class takes the lowest-index argmax") {
  CHECK(predict_class(Tensor({3}, {0.2, 0.5, 0.3}, false)) == 1);
  CHECK(predict_class(Tensor({4}, {0.25, 0.25, 0.25, 0.25}, false)) == 0);
  CHECK(predict_class(Tensor({3}, {0.1, 0.45, 0.45}, false)) == 1);
  CHECK_THROWS_AS(predict_class(Tensor({2, 2}, {1, 0, 0, 1}, false)),
                  std::invalid_argument);
}

TEST_CASE("train_model separates a two-class toy corpus") {
  TrainConfig tcfg;
  tcfg.learning_rate = 0.01;
  tcfg.batch_size = 8;
  tcfg.max_epochs = 20;
  PreprocessConfig pre;

  std::vector<Document> corpus = toy_corpus(40);
  Gazetteer gaz;  // no entities: pure text models
  Dataset data = prepare_dataset(corpus, pre, gaz, tcfg);
  KnowledgeGraph g;
  MedKGConfig cfg = toy_config(data);

  ModelBundle model = train_model(ModelKind::medg, data, g, cfg, tcfg);
  CHECK(model.kind == ModelKind::medg);
  CHECK(!model.report.history.empty());

  EvalResult on_train = evaluate_model(model, data.train, g);
  CHECK(on_train.metrics.accuracy == 1.0);
  EvalResult on_test = evaluate_model(model, data.test, g);
  CHECK(on_test.metrics.accuracy == 1.0);
  CHECK(on_test.mean_loss > 0.0);
  CHECK(on_test.cm.total() == static_cast<long long>(data.test.size()));

  SUBCASE("training is bitwise reproducible") {
    ModelBundle again = train_model(ModelKind::medg, data, g, cfg, tcfg);
    CHECK(values_of(model.named_params()) == values_of(again.named_params()));
    EvalResult e1 = evaluate_model(model, data.test, g);
    EvalResult e2 = evaluate_model(again, data.test, g);
    CHECK(e1.metrics.accuracy == e2.metrics.accuracy);
    CHECK(e1.mean_loss == e2.mean_loss);
  }
}

TEST_CASE("train_model handles the remaining kinds") {
  TrainConfig tcfg;
  tcfg.learning_rate = 0.01;
  tcfg.batch_size = 8;
  tcfg.max_epochs = 3;
  PreprocessConfig pre;

  std::vector<Document> corpus = toy_corpus(24);
  Gazetteer gaz;
  gaz.add("alphatol", EntityType::drug, "drug:alphatol");
  gaz.add("betanol", EntityType::drug, "drug:betanol");
  Dataset data = prepare_dataset(corpus, pre, gaz, tcfg);
  KnowledgeGraph g = build_graph(corpus, pre, gaz, 20);
  MedKGConfig cfg = toy_config(data);

  SUBCASE("medkg trains and evaluates") {
    ModelBundle model = train_model(ModelKind::medkg, data, g, cfg, tcfg);
    EvalResult r = evaluate_model(model, data.test, g);
    CHECK(r.cm.total() == static_cast<long long>(data.test.size()));
    CHECK(r.metrics.accuracy >= 0.0);
    CHECK(r.metrics.accuracy <= 1.0);
  }
  SUBCASE("gpt_like forces causal mode and still classifies") {
    ModelBundle model = train_model(ModelKind::gpt_like, data, g, cfg, tcfg);
    CHECK(model.cfg.encoder.mode == EncoderMode::causal);
    EvalResult r = evaluate_model(model, data.test, g);
    CHECK(r.cm.total() == static_cast<long long>(data.test.size()));
  }
  SUBCASE("strict medg ignores word order") {
    ModelBundle model =
        train_model(ModelKind::medg, data, g, cfg, tcfg, /*strict=*/true);
    CHECK(model.medg_strict);
    EvalResult r = evaluate_model(model, data.test, g);
    CHECK(r.cm.total() == static_cast<long long>(data.test.size()));
  }
  SUBCASE("empty training split is rejected") {
    Dataset empty = data;
    empty.train.clear();
    CHECK_THROWS_AS(train_model(ModelKind::medg, empty, g, cfg, tcfg),
                    std::invalid_argument);
  }
}

TEST_CASE("ablate reports medkg before medg on the same data") {
  TrainConfig tcfg;
  tcfg.learning_rate = 0.01;
  tcfg.batch_size = 8;
  tcfg.max_epochs = 2;
  PreprocessConfig pre;

  std::vector<Document> corpus = toy_corpus(24);
  Gazetteer gaz;
  gaz.add("alphatol", EntityType::drug, "drug:alphatol");
  gaz.add("betanol", EntityType::drug, "drug:betanol");
  Dataset data = prepare_dataset(corpus, pre, gaz, tcfg);
  KnowledgeGraph g = build_graph(corpus, pre, gaz, 20);
  MedKGConfig cfg = toy_config(data);

  AblationReport report = ablate(data, g, cfg, tcfg);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].model == "medkg");
  CHECK(report.rows[1].model == "medg");
  for (const AblationRow& row : report.rows) {
    CHECK(row.accuracy >= 0.0);
    CHECK(row.accuracy <= 1.0);
    CHECK(row.macro_f1 >= 0.0);
    CHECK(row.macro_f1 <= 1.0);
  }
}

TEST_CASE("lm_loss averages negative sequence log probabilities") {
  EncoderConfig cfg;
  cfg.vocab_size = 9;
  cfg.max_seq_len = 6;
  cfg.dim = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ffn_mult = 2;
  cfg.mode = EncoderMode::causal;
  cfg.num_classes = 2;
  Rng rng(3);
  EncoderParams params = EncoderParams::init(cfg, rng);

  const std::vector<int> s1 = {3, 4, 5};
  const std::vector<int> s2 = {6, 7};
  Tensor l1 = sequence_log_prob(s1, params, cfg);
  Tensor l2 = sequence_log_prob(s2, params, cfg);
  Tensor mean = lm_loss({s1, s2}, params, cfg);
  const double want = -((*l1.data)[0] + (*l2.data)[0]) / 2.0;
  CHECK((*mean.data)[0] == doctest::Approx(want).epsilon(1e-12));
  CHECK((*mean.data)[0] > 0.0);
  CHECK_THROWS_AS(lm_loss({}, params, cfg), std::invalid_argument);
}

TEST_CASE("model kind names round trip") {
  CHECK(to_string(ModelKind::medkg) == "medkg");
  CHECK(to_string(ModelKind::medg) == "medg");
  CHECK(to_string(ModelKind::gpt_like) == "gpt_like");
  CHECK(model_kind_from_string("medkg") == ModelKind::medkg);
  CHECK(model_kind_from_string("medg") == ModelKind::medg);
  CHECK(model_kind_from_string("gpt_like") == ModelKind::gpt_like);
  CHECK_THROWS_AS(model_kind_from_string("bert"), std::invalid_argument);
}
