#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "medkg/attention.hpp"
#include "medkg/rng.hpp"
#include "medkg/tensor.hpp"

namespace medkg {

enum class EncoderMode { causal, bidirectional };

struct EncoderConfig {
  int vocab_size = 0;
  int max_seq_len = 0;
  int dim = 0;
  int layers = 0;
  int heads = 0;
  int ffn_mult = 4;
  EncoderMode mode = EncoderMode::causal;
  int num_classes = 0;
  bool truncate_long_inputs = true;
  bool tie_lm_head = true;
  int pad_id = 0;
  int bos_id = 2;

  void validate() const;
};

// One pre-norm transformer block: LN -> multi-head attention -> add;
// LN -> feed-forward (ReLU) -> add.
struct BlockParams {
  Tensor ln1_gamma, ln1_beta;
  MultiHeadParams mha;
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1;  // {dim, ffn_mult*dim}, {ffn_mult*dim}
  Tensor w2, b2;  // {ffn_mult*dim, dim}, {dim}
};

struct EncoderParams {
  Tensor e_w;  // {vocab_size, dim}
  Tensor p_w;  // {max_seq_len, dim}
  std::vector<BlockParams> blocks;
  Tensor w_c;  // {dim, num_classes}
  Tensor b_c;  // {num_classes}
  std::optional<Tensor> lm_w;  // {dim, vocab_size}, present only when untied

  // Weights drawn N(0, 0.02^2) in named_params order; biases zero; LN at 1/0.
  static EncoderParams init(const EncoderConfig& cfg, Rng& rng);

  // Stable enumeration shared by the optimizer and the checkpoint format.
  std::vector<std::pair<std::string, Tensor>> named_params() const;
};

// Validated, truncated token ids as the encoder will actually see them.
std::vector<int> prepare_tokens(const std::vector<int>& tokens,
                                const EncoderConfig& cfg);

// h_0[t] = e_w[token_t] + p_w[t]
Tensor embed(const std::vector<int>& tokens, const EncoderParams& params,
             const EncoderConfig& cfg);

Tensor transformer_block(const Tensor& h, const BlockParams& block,
                         const EncoderConfig& cfg);

// Returns [h_0, h_1, ..., h_layers]; MedKG's fusion consumes the whole list.
std::vector<Tensor> encode(const std::vector<int>& tokens,
                           const EncoderParams& params, const EncoderConfig& cfg);

// Pooled final layer -> classifier -> class probabilities.
Tensor classify(const std::vector<int>& tokens, const EncoderParams& params,
                const EncoderConfig& cfg);

// Pool the final layer per config mode: causal takes the last non-pad row,
// bidirectional averages the non-pad rows.
Tensor pool_final(const Tensor& h_final, const std::vector<int>& tokens,
                  const EncoderConfig& cfg);

// log P(w_1..w_m) under the causal LM with BOS prepended; scalar tensor <= 0.
Tensor sequence_log_prob(const std::vector<int>& tokens,
                         const EncoderParams& params, const EncoderConfig& cfg);

// Mean classification cross-entropy over the batch; scalar tensor >= 0.
Tensor cross_entropy_loss(
    const std::vector<std::pair<std::vector<int>, int>>& batch,
    const EncoderParams& params, const EncoderConfig& cfg);

}  // namespace medkg
