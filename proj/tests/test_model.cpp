#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "medkg/grad_check.hpp"
#include "medkg/model.hpp"
#include "medkg/ops.hpp"

using namespace medkg;

namespace {

MedKGConfig tiny_config() {
  MedKGConfig cfg;
  cfg.encoder.vocab_size = 11;
  cfg.encoder.max_seq_len = 6;
  cfg.encoder.dim = 8;
  cfg.encoder.layers = 2;
  cfg.encoder.heads = 2;
  cfg.encoder.ffn_mult = 2;
  cfg.encoder.mode = EncoderMode::bidirectional;
  cfg.encoder.num_classes = 3;
  return cfg;
}

KnowledgeGraph tiny_graph() {
  Gazetteer gaz;
  gaz.add("alphadine", EntityType::drug, "drug:alphadine");
  gaz.add("betafen", EntityType::drug, "drug:betafen");
  gaz.add("gout", EntityType::disease, "disease:gout");
  return graph_from(gaz, {{"drug:alphadine", "treats", "disease:gout", 2},
                          {"disease:gout", "causes", "symptom:ache", 1}});
}

EntityEmbeddingTable manual_table(
    const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  EntityEmbeddingTable t;
  t.dim = static_cast<int>(rows.front().second.size());
  for (const auto& [id, v] : rows) {
    t.rows.emplace(id, Tensor({t.dim}, v, true));
  }
  return t;
}

}  // namespace

TEST_CASE("neighbor_smooth mixes rows toward graph neighbors") {
  KnowledgeGraph pair = graph_from(Gazetteer{}, {{"a", "r", "b", 1}});
  EntityEmbeddingTable t =
      manual_table({{"a", {1.0, 2.0}}, {"b", {3.0, 4.0}}, {"c", {9.0, 9.0}}});

  SUBCASE("zero rounds is the identity") {
    EntityEmbeddingTable same = neighbor_smooth(t, pair, 0);
    for (const auto& [id, row] : t.rows) {
      for (std::size_t i = 0; i < row.numel(); ++i) {
        CHECK(same.row(id).at(i) == row.at(i));
      }
    }
  }
  SUBCASE("mutually linked rows meet in the middle") {
    EntityEmbeddingTable s = neighbor_smooth(t, pair, 1);
    CHECK(s.row("a").at(0) == 2.0);
    CHECK(s.row("a").at(1) == 3.0);
    CHECK(s.row("b").at(0) == 2.0);
    CHECK(s.row("b").at(1) == 3.0);
    // c is isolated: unchanged for any number of rounds.
    EntityEmbeddingTable s5 = neighbor_smooth(t, pair, 5);
    CHECK(s5.row("c").at(0) == 9.0);
    CHECK(s5.row("c").at(1) == 9.0);
    CHECK(s.row("c").requires_grad);
  }
  SUBCASE("updates within a round are simultaneous") {
    KnowledgeGraph chain = graph_from(
        Gazetteer{}, {{"a", "r", "b", 1}, {"b", "r", "c", 1}});
    EntityEmbeddingTable line =
        manual_table({{"a", {4.0}}, {"b", {0.0}}, {"c", {8.0}}});
    EntityEmbeddingTable r1 = neighbor_smooth(line, chain, 1);
    CHECK(r1.row("a").at(0) == 2.0);   // 0.5*4 + 0.5*0
    CHECK(r1.row("b").at(0) == 3.0);   // 0.5*0 + 0.5*((4+8)/2)
    CHECK(r1.row("c").at(0) == 4.0);
    EntityEmbeddingTable r2 = neighbor_smooth(line, chain, 2);
    CHECK(r2.row("a").at(0) == 2.5);   // from (2,3,4), not sequential values
    CHECK(r2.row("b").at(0) == 3.0);
    CHECK(r2.row("c").at(0) == 3.5);
  }
  SUBCASE("graph entities without table rows are ignored") {
    KnowledgeGraph far = graph_from(Gazetteer{}, {{"a", "r", "zz", 1}});
    EntityEmbeddingTable s = neighbor_smooth(t, far, 3);
    CHECK(s.row("a").at(0) == 1.0);
  }
  CHECK_THROWS_AS(neighbor_smooth(t, pair, -1), std::invalid_argument);
}

TEST_CASE("entity_context attends over entity rows") {
  EntityEmbeddingTable t = manual_table(
      {{"x", {1.0, 0.0}}, {"y", {0.0, 2.0}}, {"z", {0.0, 0.0}}});
  Tensor query({2}, {0.3, -0.7});
  const ScoringParams sp = ScoringParams::for_scaled_dot(2);

  SUBCASE("empty id list falls back to a zero vector") {
    Tensor c = entity_context(query, {}, t, ScoringKind::scaled_dot, sp);
    REQUIRE(c.shape == std::vector<int>{2});
    CHECK(c.at(0) == 0.0);
    CHECK(c.at(1) == 0.0);
  }
  SUBCASE("single entity returns its row exactly") {
    Tensor c = entity_context(query, {"y"}, t, ScoringKind::scaled_dot, sp);
    CHECK(c.at(0) == 0.0);
    CHECK(c.at(1) == 2.0);
  }
  SUBCASE("equal scores average the rows") {
    Tensor zero_q = Tensor::zeros({2});
    Tensor c = entity_context(zero_q, {"x", "y"}, t, ScoringKind::scaled_dot, sp);
    CHECK(c.at(0) == 0.5);
    CHECK(c.at(1) == 1.0);
  }
  SUBCASE("all-zero rows give a zero context for any ids") {
    EntityEmbeddingTable zt = manual_table({{"x", {0.0, 0.0}}, {"y", {0.0, 0.0}}});
    Tensor c = entity_context(query, {"x", "y"}, zt, ScoringKind::scaled_dot, sp);
    CHECK(c.at(0) == 0.0);
    CHECK(c.at(1) == 0.0);
  }
  CHECK_THROWS_AS(entity_context(query, {"nope"}, t, ScoringKind::scaled_dot, sp),
                  std::out_of_range);
  EntityEmbeddingTable empty;
  CHECK_THROWS_AS(entity_context(query, {}, empty, ScoringKind::scaled_dot, sp),
                  std::invalid_argument);
}

TEST_CASE("expand_entities adds one-hop curated neighbors") {
  KnowledgeGraph g = graph_from(
      Gazetteer{},
      {{"drug:a", "treats", "disease:x", 1},
       {"disease:x", "causes", "symptom:s", 1},
       {"drug:a", kCoOccursRelation, "symptom:t", 4}});

  auto from_drug = expand_entities({"drug:a"}, g);
  CHECK(from_drug == std::vector<std::string>{"disease:x", "drug:a"});

  // Both directions, one hop only, co-occurrence edges skipped.
  auto from_disease = expand_entities({"disease:x"}, g);
  CHECK(from_disease ==
        std::vector<std::string>{"disease:x", "drug:a", "symptom:s"});

  CHECK(expand_entities({"drug:a", "drug:a"}, g) == from_drug);
  CHECK(expand_entities({}, g).empty());
  CHECK(expand_entities({"unlisted"}, g) == std::vector<std::string>{"unlisted"});
}

TEST_CASE("multi_scale_fuse gates per-scale features") {
  Rng rng(7);
  MedKGConfig cfg = tiny_config();
  cfg.encoder.layers = 3;
  MedKGParams params = MedKGParams::init(cfg, tiny_graph(), rng);
  const int d = cfg.encoder.dim;

  auto random_vec = [&](Rng& r) {
    return Tensor::randn({d}, r, 1.0, true);
  };

  SUBCASE("a single scale is passed through with gate 1") {
    MedKGConfig one = tiny_config();
    one.encoder.layers = 1;
    Rng r2(8);
    MedKGParams p1 = MedKGParams::init(one, tiny_graph(), r2);
    Tensor h = random_vec(r2);
    Tensor c = random_vec(r2);
    FusionOutput out = multi_scale_fuse({h}, {c}, p1);
    REQUIRE(out.gates.shape == std::vector<int>{1});
    CHECK(out.gates.at(0) == 1.0);
    Tensor f = matvec(p1.fuse_w[0], concat({h, c}));
    for (std::size_t i = 0; i < f.numel(); ++i) CHECK(out.fused.at(i) == f.at(i));
  }
  SUBCASE("identical features per scale pass through regardless of gates") {
    Tensor h = random_vec(rng);
    Tensor c = random_vec(rng);
    MedKGParams same = params;
    same.fuse_w = {params.fuse_w[0], params.fuse_w[0], params.fuse_w[0]};
    FusionOutput out = multi_scale_fuse({h, h, h}, {c, c, c}, same);
    Tensor f = matvec(params.fuse_w[0], concat({h, c}));
    for (std::size_t i = 0; i < f.numel(); ++i) {
      CHECK(out.fused.at(i) == doctest::Approx(f.at(i)).epsilon(1e-12));
    }
  }
  SUBCASE("gates form a probability distribution on random inputs") {
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Tensor> pools, contexts;
      for (int l = 0; l < 3; ++l) {
        pools.push_back(random_vec(rng));
        contexts.push_back(random_vec(rng));
      }
      FusionOutput out = multi_scale_fuse(pools, contexts, params);
      double total = 0.0;
      for (std::size_t i = 0; i < out.gates.numel(); ++i) {
        CHECK(out.gates.at(i) >= 0.0);
        total += out.gates.at(i);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
      REQUIRE(out.fused.shape == std::vector<int>{d});
      CHECK(out.fused.all_finite());
    }
  }
  SUBCASE("list validation") {
    Tensor h = random_vec(rng);
    Tensor c = random_vec(rng);
    CHECK_THROWS_AS(multi_scale_fuse({}, {}, params), std::invalid_argument);
    CHECK_THROWS_AS(multi_scale_fuse({h, h}, {c}, params), std::invalid_argument);
    CHECK_THROWS_AS(multi_scale_fuse({h, h}, {c, c}, params),
                    std::invalid_argument);  // 3 fusion matrices for 2 scales
  }
}

TEST_CASE("medkg_forward produces class probabilities") {
  MedKGConfig cfg = tiny_config();
  KnowledgeGraph g = tiny_graph();
  Rng rng(21);
  MedKGParams params = MedKGParams::init(cfg, g, rng);
  LinkedDocument doc{{3, 5, 7, 4}, 1, {"drug:alphadine", "disease:gout"}};

  SUBCASE("output is a distribution over classes") {
    Tensor probs = medkg_forward(doc, params, cfg, g);
    REQUIRE(probs.shape == std::vector<int>{3});
    double total = 0.0;
    for (std::size_t i = 0; i < probs.numel(); ++i) {
      CHECK(probs.at(i) >= 0.0);
      total += probs.at(i);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("entity order does not matter") {
    LinkedDocument flipped = doc;
    flipped.entity_ids = {"disease:gout", "drug:alphadine"};
    Tensor a = medkg_forward(doc, params, cfg, g);
    Tensor b = medkg_forward(flipped, params, cfg, g);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
  }
  SUBCASE("documents without entities still classify") {
    LinkedDocument bare{{3, 5}, 0, {}};
    Tensor probs = medkg_forward(bare, params, cfg, g);
    CHECK(probs.all_finite());
  }
  SUBCASE("a zeroed entity table reduces to a text-only model") {
    MedKGParams zeroed = params;
    zeroed.table = params.table;
    for (auto& [id, row] : zeroed.table.rows) {
      row = Tensor::zeros(row.shape, true);
    }
    Tensor base = medkg_forward(doc, zeroed, cfg, g);

    // Scrambling the context half of every fusion matrix changes nothing,
    // because zero contexts never reach it.
    Rng noise(99);
    MedKGParams scrambled = zeroed;
    scrambled.fuse_w.clear();
    for (const Tensor& w : zeroed.fuse_w) {
      std::vector<double> v = *w.data;
      const int cols = w.cols();
      for (int r = 0; r < w.rows(); ++r) {
        for (int c = cfg.encoder.dim; c < cols; ++c) {
          v[static_cast<std::size_t>(r) * cols + c] = noise.normal(0.0, 1.0);
        }
      }
      scrambled.fuse_w.push_back(Tensor(w.shape, std::move(v), true));
    }
    Tensor same = medkg_forward(doc, scrambled, cfg, g);
    for (std::size_t i = 0; i < base.numel(); ++i) CHECK(base.at(i) == same.at(i));
  }
  SUBCASE("unknown linked entity is a lookup error") {
    LinkedDocument bad = doc;
    bad.entity_ids = {"drug:unknown"};
    CHECK_THROWS_AS(medkg_forward(bad, params, cfg, g), std::out_of_range);
  }
  SUBCASE("causal mode is rejected") {
    MedKGConfig causal = cfg;
    causal.encoder.mode = EncoderMode::causal;
    CHECK_THROWS_AS(medkg_forward(doc, params, causal, g), std::invalid_argument);
  }
}

TEST_CASE("medkg initialization smooths entity rows once") {
  MedKGConfig cfg = tiny_config();
  KnowledgeGraph g = tiny_graph();
  MedKGConfig raw_cfg = cfg;
  raw_cfg.smooth_rounds = 0;
  Rng r1(5), r2(5);
  MedKGParams smoothed = MedKGParams::init(cfg, g, r1);
  MedKGParams raw = MedKGParams::init(raw_cfg, g, r2);

  // Same draw order: encoder weights agree bitwise.
  for (std::size_t i = 0; i < raw.encoder.e_w.numel(); ++i) {
    CHECK(raw.encoder.e_w.at(i) == smoothed.encoder.e_w.at(i));
  }
  // Linked entities moved; the table covers every graph entity.
  CHECK(smoothed.table.rows.size() == g.entities.size());
  bool moved = false;
  for (std::size_t i = 0; i < raw.table.row("drug:alphadine").numel(); ++i) {
    if (raw.table.row("drug:alphadine").at(i) !=
        smoothed.table.row("drug:alphadine").at(i)) {
      moved = true;
    }
  }
  CHECK(moved);

  auto named = smoothed.named_params();
  std::set<std::string> names;
  for (const auto& [name, t] : named) {
    CHECK(t.requires_grad);
    names.insert(name);
  }
  CHECK(names.size() == named.size());
  CHECK(names.count("entity.drug:alphadine") == 1);
  CHECK(names.count("fuse.scale1") == 1);
  CHECK(names.count("encoder.e_w") == 1);
}

TEST_CASE("medg_forward matches the plain encoder classifier") {
  MedKGConfig cfg = tiny_config();
  Rng rng(31);
  EncoderParams params = EncoderParams::init(cfg.encoder, rng);
  LinkedDocument doc{{3, 5, 7}, 2, {"drug:alphadine"}};

  Tensor medg = medg_forward(doc, params, cfg.encoder);
  Tensor plain = classify(doc.tokens, params, cfg.encoder);
  REQUIRE(medg.numel() == plain.numel());
  for (std::size_t i = 0; i < medg.numel(); ++i) CHECK(medg.at(i) == plain.at(i));

  double total = 0.0;
  for (std::size_t i = 0; i < medg.numel(); ++i) total += medg.at(i);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));

  SUBCASE("strict variant is a bag of embeddings") {
    LinkedDocument single{{5}, 0, {}};
    Tensor strict = medg_forward(single, params, cfg.encoder, true);
    Tensor expected =
        softmax(add(vecmat(pick_row(params.e_w, 5), params.w_c), params.b_c));
    for (std::size_t i = 0; i < strict.numel(); ++i) {
      CHECK(strict.at(i) == expected.at(i));
    }
    // Strict and full models genuinely differ.
    Tensor full = medg_forward(single, params, cfg.encoder, false);
    bool differs = false;
    for (std::size_t i = 0; i < full.numel(); ++i) {
      if (full.at(i) != strict.at(i)) differs = true;
    }
    CHECK(differs);
  }
  SUBCASE("causal mode is rejected") {
    MedKGConfig causal = tiny_config();
    causal.encoder.mode = EncoderMode::causal;
    CHECK_THROWS_AS(medg_forward(doc, params, causal.encoder),
                    std::invalid_argument);
  }
}

TEST_CASE("medg has strictly fewer parameters than medkg") {
  MedKGConfig cfg = tiny_config();
  Rng rng(41);
  MedKGParams params = MedKGParams::init(cfg, tiny_graph(), rng);
  std::size_t medkg_count = 0;
  for (const auto& [name, t] : params.named_params()) medkg_count += t.numel();
  std::size_t medg_count = 0;
  for (const auto& [name, t] : params.encoder.named_params()) {
    medg_count += t.numel();
  }
  CHECK(medg_count < medkg_count);
}

TEST_CASE("model cross entropies average document losses") {
  MedKGConfig cfg = tiny_config();
  KnowledgeGraph g = tiny_graph();
  Rng rng(51);
  MedKGParams params = MedKGParams::init(cfg, g, rng);
  LinkedDocument d0{{3, 5, 7, 4}, 1, {"drug:alphadine"}};
  LinkedDocument d1{{6, 8}, 0, {"disease:gout"}};

  Tensor probs = medkg_forward(d0, params, cfg, g);
  Tensor single = medkg_cross_entropy({d0}, params, cfg, g);
  CHECK(single.at(0) ==
        doctest::Approx(-std::log(probs.at(1))).epsilon(1e-12));

  Tensor a = medkg_cross_entropy({d0}, params, cfg, g);
  Tensor b = medkg_cross_entropy({d1}, params, cfg, g);
  Tensor both = medkg_cross_entropy({d0, d1}, params, cfg, g);
  CHECK(both.at(0) == doctest::Approx(0.5 * (a.at(0) + b.at(0))).epsilon(1e-12));

  CHECK_THROWS_AS(medkg_cross_entropy({}, params, cfg, g), std::invalid_argument);
  LinkedDocument bad = d0;
  bad.label = 3;
  CHECK_THROWS_AS(medkg_cross_entropy({bad}, params, cfg, g), std::out_of_range);

  Tensor medg = medg_cross_entropy({d0, d1}, params.encoder, cfg.encoder);
  CHECK(medg.at(0) > 0.0);
  CHECK_THROWS_AS(medg_cross_entropy({}, params.encoder, cfg.encoder),
                  std::invalid_argument);
  CHECK_THROWS_AS(medg_cross_entropy({bad}, params.encoder, cfg.encoder),
                  std::out_of_range);
}

TEST_CASE("every medkg trainable path passes grad_check") {
  MedKGConfig cfg = tiny_config();
  KnowledgeGraph g = tiny_graph();
  Rng rng(61);
  MedKGParams params = MedKGParams::init(cfg, g, rng);
  std::vector<LinkedDocument> batch{
      {{3, 5, 7, 4}, 1, {"drug:alphadine", "disease:gout"}},
      {{6, 8, 9}, 2, {"drug:betafen"}},
      {{4, 4}, 0, {}},
  };

  auto loss = [&]() { return medkg_cross_entropy(batch, params, cfg, g); };
  // A 1e-4 step can straddle a ReLU kink somewhere in this deep graph, which
  // biases the central difference; 1e-5 stays on one side of every kink here.
  GradCheckReport report = grad_check(loss, params.named_params(), 1e-5);
  CAPTURE(report.worst_input);
  CAPTURE(report.worst_coord);
  CHECK(report.max_rel_err < 1e-6);

  GradCheckReport coarse = grad_check(loss, params.named_params());
  CHECK(coarse.max_rel_err < 1e-4);
}

TEST_CASE("strict medg path passes grad_check") {
  MedKGConfig cfg = tiny_config();
  Rng rng(71);
  EncoderParams params = EncoderParams::init(cfg.encoder, rng);
  std::vector<LinkedDocument> batch{{{3, 5, 7}, 1, {}}, {{6}, 0, {}}};
  auto loss = [&]() {
    return medg_cross_entropy(batch, params, cfg.encoder, true);
  };
  std::vector<std::pair<std::string, Tensor>> inputs{
      {"e_w", params.e_w},
      {"w_c", params.w_c},
      {"b_c", params.b_c},
  };
  GradCheckReport report = grad_check(loss, inputs);
  CAPTURE(report.worst_input);
  CHECK(report.max_rel_err < 1e-6);
}
