#pragma once

#include <optional>
#include <string>
#include <vector>

#include "medkg/tensor.hpp"

namespace medkg {

enum class ScoringKind { additive, dot, scaled_dot, bilinear };

std::string to_string(ScoringKind kind);
ScoringKind scoring_kind_from_string(const std::string& s);

// Parameters for the scoring kinds that need them. additive uses v, W, U;
// bilinear uses W alone; scaled_dot uses d (the key dimension).
struct ScoringParams {
  std::optional<Tensor> v;  // {hidden}
  std::optional<Tensor> W;  // additive {hidden, q_dim}; bilinear {q_dim, k_dim}
  std::optional<Tensor> U;  // {hidden, k_dim}
  int d = 0;

  static ScoringParams none() { return {}; }
  static ScoringParams for_scaled_dot(int d);
  static ScoringParams for_additive(Tensor v, Tensor W, Tensor U);
  static ScoringParams for_bilinear(Tensor W);
};

struct AttentionOutput {
  Tensor context;  // {value_dim}
  Tensor weights;  // {num_keys}, nonnegative, sums to 1
};

// f(Q, K_i): additive v'tanh(WQ + UK); dot Q'K; scaled_dot Q'K/sqrt(d);
// bilinear Q'WK. Returns a scalar tensor so gradients flow to q, k and params.
Tensor score(const Tensor& q, const Tensor& k, ScoringKind kind,
             const ScoringParams& params);

// alpha_i = exp(f(q,k_i)) / sum_j exp(f(q,k_j))
Tensor attention_weights(const Tensor& q, const std::vector<Tensor>& keys,
                         ScoringKind kind, const ScoringParams& params);

AttentionOutput attend(const Tensor& q, const std::vector<Tensor>& keys,
                       const std::vector<Tensor>& values, ScoringKind kind,
                       const ScoringParams& params);

// Convenience form: keys/values given as the rows of rank-2 tensors.
AttentionOutput attend_rows(const Tensor& q, const Tensor& key_rows,
                            const Tensor& value_rows, ScoringKind kind,
                            const ScoringParams& params);

enum class MaskKind { none, causal };

struct MultiHeadParams {
  std::vector<Tensor> wq, wk, wv;  // one {dim, dim/heads} matrix per head
  Tensor wo;                       // {dim, dim}
  Tensor bo;                       // {dim}
};

// Standard multi-head self-attention over x ({seq, dim}); per-head scoring is
// scaled_dot with d = dim/heads. Causal masking keeps position t from seeing
// positions > t.
Tensor multi_head_self_attention(const Tensor& x, int heads,
                                 const MultiHeadParams& params, MaskKind mask);

}  // namespace medkg
