#include "medkg/encoder.hpp"

#include <algorithm>
#include <stdexcept>

#include "medkg/ops.hpp"

namespace medkg {

void EncoderConfig::validate() const {
  if (vocab_size < 1) throw std::invalid_argument("encoder config: vocab_size must be positive");
  if (max_seq_len < 1) throw std::invalid_argument("encoder config: max_seq_len must be >= 1");
  if (dim < 1) throw std::invalid_argument("encoder config: dim must be positive");
  if (layers < 0) throw std::invalid_argument("encoder config: layers must be >= 0");
  if (heads < 1) throw std::invalid_argument("encoder config: heads must be positive");
  if (dim % heads != 0) {
    throw std::invalid_argument("encoder config: dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
  }
  if (ffn_mult < 1) throw std::invalid_argument("encoder config: ffn_mult must be positive");
  if (num_classes < 1) throw std::invalid_argument("encoder config: num_classes must be positive");
  if (pad_id < 0 || pad_id >= vocab_size || bos_id < 0 || bos_id >= vocab_size) {
    throw std::invalid_argument("encoder config: pad/bos ids outside vocab");
  }
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const double sd = 0.02;
  const int d_h = cfg.dim / cfg.heads;
  const int hidden = cfg.ffn_mult * cfg.dim;
  EncoderParams p;
  p.e_w = Tensor::randn({cfg.vocab_size, cfg.dim}, rng, sd, true);
  p.p_w = Tensor::randn({cfg.max_seq_len, cfg.dim}, rng, sd, true);
  for (int l = 0; l < cfg.layers; ++l) {
    BlockParams b;
    b.ln1_gamma = Tensor::full({cfg.dim}, 1.0, true);
    b.ln1_beta = Tensor::zeros({cfg.dim}, true);
    for (int h = 0; h < cfg.heads; ++h) {
      b.mha.wq.push_back(Tensor::randn({cfg.dim, d_h}, rng, sd, true));
      b.mha.wk.push_back(Tensor::randn({cfg.dim, d_h}, rng, sd, true));
      b.mha.wv.push_back(Tensor::randn({cfg.dim, d_h}, rng, sd, true));
    }
    b.mha.wo = Tensor::randn({cfg.dim, cfg.dim}, rng, sd, true);
    b.mha.bo = Tensor::zeros({cfg.dim}, true);
    b.ln2_gamma = Tensor::full({cfg.dim}, 1.0, true);
    b.ln2_beta = Tensor::zeros({cfg.dim}, true);
    b.w1 = Tensor::randn({cfg.dim, hidden}, rng, sd, true);
    b.b1 = Tensor::zeros({hidden}, true);
    b.w2 = Tensor::randn({hidden, cfg.dim}, rng, sd, true);
    b.b2 = Tensor::zeros({cfg.dim}, true);
    p.blocks.push_back(std::move(b));
  }
  p.w_c = Tensor::randn({cfg.dim, cfg.num_classes}, rng, sd, true);
  p.b_c = Tensor::zeros({cfg.num_classes}, true);
  if (!cfg.tie_lm_head) {
    p.lm_w = Tensor::randn({cfg.dim, cfg.vocab_size}, rng, sd, true);
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("e_w", e_w);
  out.emplace_back("p_w", p_w);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    const BlockParams& b = blocks[l];
    out.emplace_back(prefix + "ln1_gamma", b.ln1_gamma);
    out.emplace_back(prefix + "ln1_beta", b.ln1_beta);
    for (std::size_t h = 0; h < b.mha.wq.size(); ++h) {
      const std::string head = "head" + std::to_string(h) + ".";
      out.emplace_back(prefix + head + "wq", b.mha.wq[h]);
      out.emplace_back(prefix + head + "wk", b.mha.wk[h]);
      out.emplace_back(prefix + head + "wv", b.mha.wv[h]);
    }
    out.emplace_back(prefix + "wo", b.mha.wo);
    out.emplace_back(prefix + "bo", b.mha.bo);
    out.emplace_back(prefix + "ln2_gamma", b.ln2_gamma);
    out.emplace_back(prefix + "ln2_beta", b.ln2_beta);
    out.emplace_back(prefix + "w1", b.w1);
    out.emplace_back(prefix + "b1", b.b1);
    out.emplace_back(prefix + "w2", b.w2);
    out.emplace_back(prefix + "b2", b.b2);
  }
  out.emplace_back("w_c", w_c);
  out.emplace_back("b_c", b_c);
  if (lm_w) out.emplace_back("lm_w", *lm_w);
  return out;
}

std::vector<int> prepare_tokens(const std::vector<int>& tokens,
                                const EncoderConfig& cfg) {
  if (tokens.empty()) throw std::invalid_argument("embed: empty token sequence");
  for (int id : tokens) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw std::out_of_range("embed: token id " + std::to_string(id) +
                              " outside vocabulary of size " +
                              std::to_string(cfg.vocab_size));
    }
  }
  if (static_cast<int>(tokens.size()) > cfg.max_seq_len) {
    if (!cfg.truncate_long_inputs) {
      throw std::invalid_argument("embed: sequence length " +
                                  std::to_string(tokens.size()) +
                                  " exceeds max_seq_len " +
                                  std::to_string(cfg.max_seq_len));
    }
    return std::vector<int>(tokens.begin(), tokens.begin() + cfg.max_seq_len);
  }
  return tokens;
}

namespace {

Tensor lm_logits(const Tensor& h_final, const EncoderParams& params,
                 const EncoderConfig& cfg) {
  if (cfg.tie_lm_head) return matmul(h_final, transpose(params.e_w));
  if (!params.lm_w) {
    throw std::invalid_argument("sequence_log_prob: untied config but lm_w missing");
  }
  return matmul(h_final, *params.lm_w);
}

}  // namespace

Tensor embed(const std::vector<int>& tokens, const EncoderParams& params,
             const EncoderConfig& cfg) {
  cfg.validate();
  const std::vector<int> ids = prepare_tokens(tokens, cfg);
  std::vector<int> positions(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) positions[t] = static_cast<int>(t);
  return add(gather_rows(params.e_w, ids), gather_rows(params.p_w, positions));
}

Tensor transformer_block(const Tensor& h, const BlockParams& block,
                         const EncoderConfig& cfg) {
  const MaskKind mask =
      cfg.mode == EncoderMode::causal ? MaskKind::causal : MaskKind::none;
  Tensor attended = multi_head_self_attention(
      layer_norm(h, block.ln1_gamma, block.ln1_beta), cfg.heads, block.mha, mask);
  Tensor a = add(h, attended);
  Tensor normed = layer_norm(a, block.ln2_gamma, block.ln2_beta);
  Tensor hidden = relu(add_row_broadcast(matmul(normed, block.w1), block.b1));
  Tensor ffn = add_row_broadcast(matmul(hidden, block.w2), block.b2);
  return add(a, ffn);
}

std::vector<Tensor> encode(const std::vector<int>& tokens,
                           const EncoderParams& params, const EncoderConfig& cfg) {
  if (static_cast<int>(params.blocks.size()) != cfg.layers) {
    throw std::invalid_argument("encode: params carry " +
                                std::to_string(params.blocks.size()) +
                                " blocks but config expects " +
                                std::to_string(cfg.layers));
  }
  std::vector<Tensor> states;
  states.push_back(embed(tokens, params, cfg));
  for (const BlockParams& block : params.blocks) {
    states.push_back(transformer_block(states.back(), block, cfg));
  }
  return states;
}

Tensor pool_final(const Tensor& h_final, const std::vector<int>& tokens,
                  const EncoderConfig& cfg) {
  const int seq = h_final.rows();
  std::vector<bool> keep(seq, false);
  int last_non_pad = -1;
  for (int t = 0; t < seq; ++t) {
    if (tokens[t] != cfg.pad_id) {
      keep[t] = true;
      last_non_pad = t;
    }
  }
  if (last_non_pad < 0) {
    throw std::invalid_argument("pool_final: sequence is all padding");
  }
  if (cfg.mode == EncoderMode::causal) return pick_row(h_final, last_non_pad);
  return mean_rows(h_final, keep);
}

Tensor classify(const std::vector<int>& tokens, const EncoderParams& params,
                const EncoderConfig& cfg) {
  const std::vector<int> ids = prepare_tokens(tokens, cfg);
  Tensor h_final = encode(ids, params, cfg).back();
  Tensor pooled = pool_final(h_final, ids, cfg);
  Tensor logits = add(vecmat(pooled, params.w_c), params.b_c);
  return softmax(logits);
}

Tensor sequence_log_prob(const std::vector<int>& tokens,
                         const EncoderParams& params, const EncoderConfig& cfg) {
  cfg.validate();
  if (cfg.mode != EncoderMode::causal) {
    throw std::invalid_argument("sequence_log_prob: requires a causal encoder");
  }
  if (tokens.empty()) {
    throw std::invalid_argument("sequence_log_prob: empty token sequence");
  }
  for (int id : tokens) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw std::out_of_range("sequence_log_prob: token id " + std::to_string(id) +
                              " outside vocabulary of size " +
                              std::to_string(cfg.vocab_size));
    }
  }
  // Input is [BOS, w_1, ..., w_{m-1}]; position t predicts w_{t+1}.
  std::vector<int> input{cfg.bos_id};
  input.insert(input.end(), tokens.begin(), tokens.end() - 1);
  Tensor h_final = encode(input, params, cfg).back();
  Tensor logits = lm_logits(h_final, params, cfg);
  const int m = static_cast<int>(tokens.size());
  const int steps = std::min<int>(m, logits.rows());  // truncation-safe
  std::vector<Tensor> terms;
  terms.reserve(steps);
  for (int t = 0; t < steps; ++t) {
    terms.push_back(pick(log_softmax(pick_row(logits, t)), tokens[t]));
  }
  return sum(concat(terms));
}

Tensor cross_entropy_loss(
    const std::vector<std::pair<std::vector<int>, int>>& batch,
    const EncoderParams& params, const EncoderConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("cross_entropy_loss: empty batch");
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (const auto& [tokens, label] : batch) {
    if (label < 0 || label >= cfg.num_classes) {
      throw std::out_of_range("cross_entropy_loss: label " + std::to_string(label) +
                              " outside [0," + std::to_string(cfg.num_classes) + ")");
    }
    const std::vector<int> ids = prepare_tokens(tokens, cfg);
    Tensor h_final = encode(ids, params, cfg).back();
    Tensor pooled = pool_final(h_final, ids, cfg);
    Tensor logits = add(vecmat(pooled, params.w_c), params.b_c);
    losses.push_back(scale(pick(log_softmax(logits), label), -1.0));
  }
  return inv_scale(sum(concat(losses)), static_cast<double>(losses.size()));
}

}  // namespace medkg
