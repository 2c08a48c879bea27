#include "medkg/grad_suite.hpp"

#include <utility>

#include "medkg/attention.hpp"
#include "medkg/model.hpp"
#include "medkg/ops.hpp"
#include "medkg/rng.hpp"

namespace medkg {
namespace {

constexpr double kTolerance = 1e-6;
// Smooth graphs take the default step; anything with a ReLU inside uses a
// smaller one so the central difference cannot straddle a kink.
constexpr double kSmoothEps = 1e-4;
constexpr double kKinkEps = 1e-5;

GradSuiteCase run_case(const std::string& name,
                       const std::function<Tensor()>& f,
                       const std::vector<std::pair<std::string, Tensor>>& inputs,
                       double eps) {
  GradSuiteCase c;
  c.name = name;
  c.eps = eps;
  c.tolerance = kTolerance;
  c.report = grad_check(f, inputs, eps);
  c.pass = c.report.max_rel_err < kTolerance;
  return c;
}

GradSuiteCase scoring_case(ScoringKind kind, const std::string& name) {
  Rng rng(101);
  const int dim = 6;
  const int keys = 4;
  Tensor q = Tensor::randn({dim}, rng, 0.8, true);
  std::vector<Tensor> ks, vs;
  std::vector<std::pair<std::string, Tensor>> inputs = {{"q", q}};
  for (int i = 0; i < keys; ++i) {
    ks.push_back(Tensor::randn({dim}, rng, 0.8, true));
    vs.push_back(Tensor::randn({dim}, rng, 0.8, true));
    inputs.push_back({"k" + std::to_string(i), ks.back()});
    inputs.push_back({"v" + std::to_string(i), vs.back()});
  }
  ScoringParams params;
  if (kind == ScoringKind::additive) {
    Tensor av = Tensor::randn({dim}, rng, 0.5, true);
    Tensor aw = Tensor::randn({dim, dim}, rng, 0.5, true);
    Tensor au = Tensor::randn({dim, dim}, rng, 0.5, true);
    inputs.push_back({"score.v", av});
    inputs.push_back({"score.W", aw});
    inputs.push_back({"score.U", au});
    params = ScoringParams::for_additive(std::move(av), std::move(aw),
                                         std::move(au));
  } else if (kind == ScoringKind::bilinear) {
    Tensor bw = Tensor::randn({dim, dim}, rng, 0.5, true);
    inputs.push_back({"score.W", bw});
    params = ScoringParams::for_bilinear(std::move(bw));
  } else if (kind == ScoringKind::scaled_dot) {
    params = ScoringParams::for_scaled_dot(dim);
  }
  Tensor probe = Tensor::randn({dim}, rng, 1.0, false);
  auto f = [=] {
    AttentionOutput out = attend(q, ks, vs, kind, params);
    return dot(out.context, probe);
  };
  return run_case(name, f, inputs, kSmoothEps);
}

GradSuiteCase multi_head_case(MaskKind mask, const std::string& name) {
  Rng rng(202);
  const int seq = 5, dim = 8, heads = 2;
  Tensor x = Tensor::randn({seq, dim}, rng, 0.6, true);
  MultiHeadParams mh;
  for (int h = 0; h < heads; ++h) {
    mh.wq.push_back(Tensor::randn({dim, dim / heads}, rng, 0.4, true));
    mh.wk.push_back(Tensor::randn({dim, dim / heads}, rng, 0.4, true));
    mh.wv.push_back(Tensor::randn({dim, dim / heads}, rng, 0.4, true));
  }
  mh.wo = Tensor::randn({dim, dim}, rng, 0.4, true);
  mh.bo = Tensor::randn({dim}, rng, 0.4, true);

  std::vector<std::pair<std::string, Tensor>> inputs = {{"x", x}};
  for (int h = 0; h < heads; ++h) {
    inputs.push_back({"wq" + std::to_string(h), mh.wq[h]});
    inputs.push_back({"wk" + std::to_string(h), mh.wk[h]});
    inputs.push_back({"wv" + std::to_string(h), mh.wv[h]});
  }
  inputs.push_back({"wo", mh.wo});
  inputs.push_back({"bo", mh.bo});

  Tensor probe = Tensor::randn({seq, dim}, rng, 1.0, false);
  auto f = [=] {
    Tensor out = multi_head_self_attention(x, heads, mh, mask);
    return sum(mul(out, probe));
  };
  return run_case(name, f, inputs, kSmoothEps);
}

EncoderConfig tiny_encoder(EncoderMode mode) {
  EncoderConfig cfg;
  cfg.vocab_size = 11;
  cfg.max_seq_len = 6;
  cfg.dim = 8;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.ffn_mult = 2;
  cfg.mode = mode;
  cfg.num_classes = 3;
  return cfg;
}

GradSuiteCase encoder_classify_case() {
  EncoderConfig cfg = tiny_encoder(EncoderMode::bidirectional);
  Rng rng(303);
  EncoderParams params = EncoderParams::init(cfg, rng);
  const std::vector<std::pair<std::vector<int>, int>> batch = {
      {{3, 4, 5, 6}, 0}, {{7, 8}, 2}};
  auto f = [=] { return cross_entropy_loss(batch, params, cfg); };
  return run_case("encoder.classify", f, params.named_params(), kKinkEps);
}

GradSuiteCase encoder_lm_case() {
  EncoderConfig cfg = tiny_encoder(EncoderMode::causal);
  Rng rng(404);
  EncoderParams params = EncoderParams::init(cfg, rng);
  const std::vector<int> seq = {3, 9, 4, 5};
  auto f = [=] { return scale(sequence_log_prob(seq, params, cfg), -1.0); };
  return run_case("encoder.lm", f, params.named_params(), kKinkEps);
}

KnowledgeGraph suite_graph() {
  Gazetteer gaz;
  gaz.add("alphadine", EntityType::drug, "drug:alphadine");
  gaz.add("betafen", EntityType::drug, "drug:betafen");
  gaz.add("gout", EntityType::disease, "disease:gout");
  std::vector<Triple> triples = {
      {"drug:alphadine", "treats", "disease:gout", 2},
      {"disease:gout", "causes", "symptom:ache", 1},
  };
  return graph_from(gaz, std::move(triples));
}

GradSuiteCase medkg_case() {
  MedKGConfig cfg;
  cfg.encoder = tiny_encoder(EncoderMode::bidirectional);
  KnowledgeGraph g = suite_graph();
  Rng rng(505);
  MedKGParams params = MedKGParams::init(cfg, g, rng);
  const std::vector<LinkedDocument> batch = {
      {{3, 4, 5}, 0, {"drug:alphadine"}},
      {{6, 7}, 2, {"disease:gout", "drug:betafen"}},
      {{8, 9, 10, 3}, 1, {}},
  };
  auto f = [=, &g] { return medkg_cross_entropy(batch, params, cfg, g); };
  GradSuiteCase c;
  c.name = "medkg.pipeline";
  c.eps = kKinkEps;
  c.tolerance = kTolerance;
  c.report = grad_check(f, params.named_params(), kKinkEps);
  c.pass = c.report.max_rel_err < kTolerance;
  return c;
}

GradSuiteCase medg_strict_case() {
  EncoderConfig cfg = tiny_encoder(EncoderMode::bidirectional);
  Rng rng(606);
  EncoderParams params = EncoderParams::init(cfg, rng);
  const std::vector<LinkedDocument> batch = {
      {{3, 4, 5}, 1, {}}, {{6}, 0, {}}};
  auto f = [=] { return medg_cross_entropy(batch, params, cfg, true); };
  // Only the embedding table and classifier participate.
  std::vector<std::pair<std::string, Tensor>> inputs = {
      {"e_w", params.e_w}, {"w_c", params.w_c}, {"b_c", params.b_c}};
  return run_case("medg.strict", f, inputs, kSmoothEps);
}

}  // namespace

std::vector<GradSuiteCase> run_grad_check_suite() {
  std::vector<GradSuiteCase> cases;
  cases.push_back(scoring_case(ScoringKind::additive, "scoring.additive"));
  cases.push_back(scoring_case(ScoringKind::dot, "scoring.dot"));
  cases.push_back(scoring_case(ScoringKind::scaled_dot, "scoring.scaled_dot"));
  cases.push_back(scoring_case(ScoringKind::bilinear, "scoring.bilinear"));
  cases.push_back(multi_head_case(MaskKind::none, "attention.multi_head"));
  cases.push_back(multi_head_case(MaskKind::causal, "attention.multi_head_causal"));
  cases.push_back(encoder_classify_case());
  cases.push_back(encoder_lm_case());
  cases.push_back(medkg_case());
  cases.push_back(medg_strict_case());
  return cases;
}

}  // namespace medkg
