#include "medkg/model.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

#include "medkg/ops.hpp"

namespace medkg {

EntityEmbeddingTable EntityEmbeddingTable::init(
    const std::vector<std::string>& ids, int dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("entity table: dim must be positive");
  EntityEmbeddingTable t;
  t.dim = dim;
  std::set<std::string> unique(ids.begin(), ids.end());
  for (const std::string& id : unique) {
    if (id.empty()) throw std::invalid_argument("entity table: empty entity id");
    t.rows.emplace(id, Tensor::randn({dim}, rng, 0.02, true));
  }
  return t;
}

const Tensor& EntityEmbeddingTable::row(const std::string& id) const {
  auto it = rows.find(id);
  if (it == rows.end()) {
    throw std::out_of_range("entity table: unknown id '" + id + "'");
  }
  return it->second;
}

void MedKGConfig::validate() const {
  encoder.validate();
  if (encoder.mode != EncoderMode::bidirectional) {
    throw std::invalid_argument("medkg config: encoder mode must be bidirectional");
  }
  if (entity_dim < 0) {
    throw std::invalid_argument("medkg config: entity_dim must be nonnegative");
  }
  if (smooth_rounds < 0) {
    throw std::invalid_argument("medkg config: smooth_rounds must be nonnegative");
  }
  if (kg_attention != ScoringKind::dot && kg_attention != ScoringKind::scaled_dot) {
    throw std::invalid_argument(
        "medkg config: kg attention carries no extra weights; use dot or scaled_dot");
  }
  if (effective_entity_dim() != encoder.dim) {
    throw std::invalid_argument(
        "medkg config: entity dim must equal encoder dim for dot-family attention");
  }
}

MedKGParams MedKGParams::init(const MedKGConfig& cfg, const KnowledgeGraph& g,
                              Rng& rng) {
  cfg.validate();
  const double sd = 0.02;
  const int d = cfg.encoder.dim;
  const int d_e = cfg.effective_entity_dim();
  MedKGParams p;
  p.encoder = EncoderParams::init(cfg.encoder, rng);
  std::vector<std::string> ids;
  ids.reserve(g.entities.size());
  for (const auto& [id, entity] : g.entities) ids.push_back(id);
  if (!ids.empty()) {
    p.table = EntityEmbeddingTable::init(ids, d_e, rng);
    p.table = neighbor_smooth(p.table, g, cfg.smooth_rounds);
  } else {
    p.table.dim = d_e;
  }
  for (int l = 0; l < cfg.encoder.layers; ++l) {
    p.fuse_w.push_back(Tensor::randn({d, d + d_e}, rng, sd, true));
  }
  p.gate_v = Tensor::randn({d}, rng, sd, true);
  p.gate_w = Tensor::randn({d, d}, rng, sd, true);
  p.w_z = Tensor::randn({d, cfg.encoder.num_classes}, rng, sd, true);
  p.b_z = Tensor::zeros({cfg.encoder.num_classes}, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> MedKGParams::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, t] : encoder.named_params()) {
    out.emplace_back("encoder." + name, t);
  }
  for (const auto& [id, row] : table.rows) out.emplace_back("entity." + id, row);
  for (std::size_t l = 0; l < fuse_w.size(); ++l) {
    out.emplace_back("fuse.scale" + std::to_string(l), fuse_w[l]);
  }
  out.emplace_back("gate_v", gate_v);
  out.emplace_back("gate_w", gate_w);
  out.emplace_back("w_z", w_z);
  out.emplace_back("b_z", b_z);
  return out;
}

EntityEmbeddingTable neighbor_smooth(const EntityEmbeddingTable& table,
                                     const KnowledgeGraph& g, int rounds) {
  if (rounds < 0) throw std::invalid_argument("neighbor_smooth: negative rounds");
  const std::size_t dim = static_cast<std::size_t>(table.dim);
  for (const auto& [id, row] : table.rows) {
    if (row.numel() != dim) {
      throw std::invalid_argument("neighbor_smooth: row '" + id +
                                  "' has shape " + row.shape_str());
    }
  }

  // Undirected adjacency restricted to ids that actually have rows.
  std::map<std::string, std::set<std::string>> nbr;
  for (const Triple& t : g.triples) {
    if (!table.contains(t.head) || !table.contains(t.tail)) continue;
    nbr[t.head].insert(t.tail);
    nbr[t.tail].insert(t.head);
  }

  std::map<std::string, std::vector<double>> cur;
  for (const auto& [id, row] : table.rows) cur.emplace(id, *row.data);

  for (int r = 0; r < rounds; ++r) {
    std::map<std::string, std::vector<double>> next = cur;
    for (const auto& [id, neighbors] : nbr) {
      if (neighbors.empty()) continue;
      std::vector<double> mean(dim, 0.0);
      for (const std::string& n : neighbors) {
        const std::vector<double>& v = cur.at(n);
        for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
      }
      const double inv = 1.0 / static_cast<double>(neighbors.size());
      const std::vector<double>& self = cur.at(id);
      std::vector<double>& dst = next.at(id);
      for (std::size_t i = 0; i < dim; ++i) {
        dst[i] = 0.5 * self[i] + 0.5 * (mean[i] * inv);
      }
    }
    cur = std::move(next);
  }

  EntityEmbeddingTable out;
  out.dim = table.dim;
  for (const auto& [id, row] : table.rows) {
    out.rows.emplace(id, Tensor(row.shape, std::move(cur.at(id)), row.requires_grad));
  }
  return out;
}

Tensor entity_context(const Tensor& query,
                      const std::vector<std::string>& entity_ids,
                      const EntityEmbeddingTable& table, ScoringKind kind,
                      const ScoringParams& params) {
  if (entity_ids.empty()) {
    if (table.dim < 1) {
      throw std::invalid_argument("entity context: table carries no dimension");
    }
    return Tensor::zeros({table.dim});
  }
  std::vector<Tensor> rows;
  rows.reserve(entity_ids.size());
  for (const std::string& id : entity_ids) rows.push_back(table.row(id));
  return attend(query, rows, rows, kind, params).context;
}

std::vector<std::string> expand_entities(const std::vector<std::string>& ids,
                                         const KnowledgeGraph& g) {
  const std::set<std::string> base(ids.begin(), ids.end());
  std::set<std::string> out = base;
  for (const Triple& t : g.triples) {
    if (t.relation == kCoOccursRelation) continue;
    if (base.count(t.head)) out.insert(t.tail);
    if (base.count(t.tail)) out.insert(t.head);
  }
  return std::vector<std::string>(out.begin(), out.end());
}

FusionOutput multi_scale_fuse(const std::vector<Tensor>& layer_pools,
                              const std::vector<Tensor>& contexts,
                              const MedKGParams& params) {
  if (layer_pools.empty()) {
    throw std::invalid_argument("multi_scale_fuse: no scales");
  }
  if (layer_pools.size() != contexts.size()) {
    throw std::invalid_argument(
        "multi_scale_fuse: " + std::to_string(layer_pools.size()) +
        " pools vs " + std::to_string(contexts.size()) + " contexts");
  }
  if (params.fuse_w.size() != layer_pools.size()) {
    throw std::invalid_argument(
        "multi_scale_fuse: " + std::to_string(params.fuse_w.size()) +
        " fusion matrices for " + std::to_string(layer_pools.size()) + " scales");
  }
  std::vector<Tensor> f;
  std::vector<Tensor> scores;
  for (std::size_t l = 0; l < layer_pools.size(); ++l) {
    Tensor fused_in = concat({layer_pools[l], contexts[l]});
    Tensor f_l = matvec(params.fuse_w[l], fused_in);
    f.push_back(f_l);
    scores.push_back(dot(params.gate_v, tanh_op(matvec(params.gate_w, f_l))));
  }
  Tensor gates = softmax(concat(scores));
  Tensor fused = scale_by(f[0], pick(gates, 0));
  for (std::size_t l = 1; l < f.size(); ++l) {
    fused = add(fused, scale_by(f[l], pick(gates, static_cast<int>(l))));
  }
  return {fused, gates};
}

Tensor medkg_forward(const LinkedDocument& doc, const MedKGParams& params,
                     const MedKGConfig& cfg, const KnowledgeGraph& g) {
  cfg.validate();
  const ScoringParams sp = cfg.kg_attention == ScoringKind::scaled_dot
                               ? ScoringParams::for_scaled_dot(cfg.effective_entity_dim())
                               : ScoringParams::none();
  const std::vector<int> ids = prepare_tokens(doc.tokens, cfg.encoder);
  const std::vector<Tensor> states = encode(ids, params.encoder, cfg.encoder);
  const std::vector<std::string> entities = expand_entities(doc.entity_ids, g);

  std::vector<Tensor> pools;
  std::vector<Tensor> contexts;
  for (std::size_t l = 1; l < states.size(); ++l) {
    Tensor pooled = pool_final(states[l], ids, cfg.encoder);
    pools.push_back(pooled);
    contexts.push_back(
        entity_context(pooled, entities, params.table, cfg.kg_attention, sp));
  }
  FusionOutput fusion = multi_scale_fuse(pools, contexts, params);
  Tensor logits = add(vecmat(fusion.fused, params.w_z), params.b_z);
  return softmax(logits);
}

Tensor medg_forward(const LinkedDocument& doc, const EncoderParams& params,
                    const EncoderConfig& cfg, bool strict) {
  cfg.validate();
  if (cfg.mode != EncoderMode::bidirectional) {
    throw std::invalid_argument("medg_forward: encoder mode must be bidirectional");
  }
  if (!strict) return classify(doc.tokens, params, cfg);

  // Bag of embeddings: mean token embedding straight into the classifier.
  const std::vector<int> ids = prepare_tokens(doc.tokens, cfg);
  std::vector<bool> keep;
  keep.reserve(ids.size());
  for (int id : ids) keep.push_back(id != cfg.pad_id);
  Tensor emb = gather_rows(params.e_w, ids);
  Tensor pooled = mean_rows(emb, keep);
  Tensor logits = add(vecmat(pooled, params.w_c), params.b_c);
  return softmax(logits);
}

namespace {

Tensor mean_nll(std::vector<Tensor> losses) {
  const double n = static_cast<double>(losses.size());
  return inv_scale(sum(concat(std::move(losses))), n);
}

void check_label(int label, int num_classes, const char* who) {
  if (label < 0 || label >= num_classes) {
    throw std::out_of_range(std::string(who) + ": label " + std::to_string(label) +
                            " outside [0," + std::to_string(num_classes) + ")");
  }
}

}  // namespace

Tensor medkg_cross_entropy(const std::vector<LinkedDocument>& batch,
                           const MedKGParams& params, const MedKGConfig& cfg,
                           const KnowledgeGraph& g) {
  if (batch.empty()) throw std::invalid_argument("medkg_cross_entropy: empty batch");
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (const LinkedDocument& doc : batch) {
    check_label(doc.label, cfg.encoder.num_classes, "medkg_cross_entropy");
    Tensor probs = medkg_forward(doc, params, cfg, g);
    losses.push_back(scale(log_op(pick(probs, doc.label)), -1.0));
  }
  return mean_nll(std::move(losses));
}

Tensor medg_cross_entropy(const std::vector<LinkedDocument>& batch,
                          const EncoderParams& params, const EncoderConfig& cfg,
                          bool strict) {
  if (batch.empty()) throw std::invalid_argument("medg_cross_entropy: empty batch");
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (const LinkedDocument& doc : batch) {
    check_label(doc.label, cfg.num_classes, "medg_cross_entropy");
    Tensor probs = medg_forward(doc, params, cfg, strict);
    losses.push_back(scale(log_op(pick(probs, doc.label)), -1.0));
  }
  return mean_nll(std::move(losses));
}

}  // namespace medkg
