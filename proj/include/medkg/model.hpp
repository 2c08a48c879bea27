#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "medkg/attention.hpp"
#include "medkg/encoder.hpp"
#include "medkg/kg.hpp"
#include "medkg/rng.hpp"
#include "medkg/tensor.hpp"

namespace medkg {

// A preprocessed training example: encoded tokens plus the canonical ids of
// the entities linked in the text.
struct LinkedDocument {
  std::vector<int> tokens;
  int label = 0;
  std::vector<std::string> entity_ids;
};

// One trainable row per entity id. Rows share a single dimension.
struct EntityEmbeddingTable {
  int dim = 0;
  std::map<std::string, Tensor> rows;

  static EntityEmbeddingTable init(const std::vector<std::string>& ids, int dim,
                                   Rng& rng);
  const Tensor& row(const std::string& id) const;  // out_of_range if absent
  bool contains(const std::string& id) const { return rows.count(id) > 0; }
};

struct MedKGConfig {
  EncoderConfig encoder;  // mode must be bidirectional
  int entity_dim = 0;     // 0 means "same as encoder dim"
  ScoringKind kg_attention = ScoringKind::scaled_dot;
  int smooth_rounds = 1;

  int effective_entity_dim() const {
    return entity_dim > 0 ? entity_dim : encoder.dim;
  }
  void validate() const;
};

struct MedKGParams {
  EncoderParams encoder;
  EntityEmbeddingTable table;
  std::vector<Tensor> fuse_w;  // one {dim, dim + entity_dim} matrix per layer
  Tensor gate_v;               // {dim}
  Tensor gate_w;               // {dim, dim}
  Tensor w_z;                  // {dim, num_classes}
  Tensor b_z;                  // {num_classes}

  // Entity rows are drawn like the other weights, then smoothed over the
  // graph cfg.smooth_rounds times.
  static MedKGParams init(const MedKGConfig& cfg, const KnowledgeGraph& g,
                          Rng& rng);
  std::vector<std::pair<std::string, Tensor>> named_params() const;
};

// Each round replaces every row by 0.5*self + 0.5*(mean of graph-neighbor
// rows), synchronously; rows without neighbors in the table are unchanged.
EntityEmbeddingTable neighbor_smooth(const EntityEmbeddingTable& table,
                                     const KnowledgeGraph& g, int rounds);

// Attention of the query over entity rows (keys = values = rows). An empty id
// list yields a zero vector so documents without entities still flow through.
Tensor entity_context(const Tensor& query,
                      const std::vector<std::string>& entity_ids,
                      const EntityEmbeddingTable& table, ScoringKind kind,
                      const ScoringParams& params);

// The ids the model attends to for a document: the linked ids plus their
// one-hop graph neighbors over curated (non-co-occurrence) relations,
// deduplicated and sorted.
std::vector<std::string> expand_entities(const std::vector<std::string>& ids,
                                         const KnowledgeGraph& g);

struct FusionOutput {
  Tensor fused;  // {dim}
  Tensor gates;  // {scales}, nonnegative, sums to 1
};

// f_l = fuse_w[l] . concat(pool_l, context_l); gate scores v^T tanh(W f_l);
// fused = sum_l softmax(scores)_l * f_l.
FusionOutput multi_scale_fuse(const std::vector<Tensor>& layer_pools,
                              const std::vector<Tensor>& contexts,
                              const MedKGParams& params);

// Class probabilities for the full text + knowledge-graph model.
Tensor medkg_forward(const LinkedDocument& doc, const MedKGParams& params,
                     const MedKGConfig& cfg, const KnowledgeGraph& g);

// Text-only ablation: final-layer mean pool into the encoder classifier.
// strict additionally drops the transformer and classifies the mean token
// embedding (a pure bag-of-embeddings baseline).
Tensor medg_forward(const LinkedDocument& doc, const EncoderParams& params,
                    const EncoderConfig& cfg, bool strict = false);

// Mean cross-entropy of medkg_forward over a batch; scalar tensor.
Tensor medkg_cross_entropy(const std::vector<LinkedDocument>& batch,
                           const MedKGParams& params, const MedKGConfig& cfg,
                           const KnowledgeGraph& g);

// Mean cross-entropy of medg_forward over a batch; scalar tensor.
Tensor medg_cross_entropy(const std::vector<LinkedDocument>& batch,
                          const EncoderParams& params, const EncoderConfig& cfg,
                          bool strict = false);

}  // namespace medkg
