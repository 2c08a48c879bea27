#include "medkg/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "medkg/ops.hpp"

namespace medkg {

std::string to_string(ScoringKind kind) {
  switch (kind) {
    case ScoringKind::additive: return "additive";
    case ScoringKind::dot: return "dot";
    case ScoringKind::scaled_dot: return "scaled_dot";
    case ScoringKind::bilinear: return "bilinear";
  }
  throw std::invalid_argument("scoring kind: bad enum value");
}

ScoringKind scoring_kind_from_string(const std::string& s) {
  if (s == "additive") return ScoringKind::additive;
  if (s == "dot") return ScoringKind::dot;
  if (s == "scaled_dot") return ScoringKind::scaled_dot;
  if (s == "bilinear") return ScoringKind::bilinear;
  throw std::invalid_argument("scoring kind: unknown name '" + s + "'");
}

ScoringParams ScoringParams::for_scaled_dot(int d) {
  if (d < 1) throw std::invalid_argument("scaled_dot: key dimension must be >= 1");
  ScoringParams p;
  p.d = d;
  return p;
}

ScoringParams ScoringParams::for_additive(Tensor v, Tensor W, Tensor U) {
  ScoringParams p;
  p.v = std::move(v);
  p.W = std::move(W);
  p.U = std::move(U);
  return p;
}

ScoringParams ScoringParams::for_bilinear(Tensor W) {
  ScoringParams p;
  p.W = std::move(W);
  return p;
}

namespace {

void require_vector(const Tensor& t, const char* what) {
  if (t.rank() != 1) {
    throw std::invalid_argument(std::string("score: ") + what +
                                " must be rank-1, got " + t.shape_str());
  }
}

const Tensor& required(const std::optional<Tensor>& t, const char* name) {
  if (!t) {
    throw std::invalid_argument(std::string("score: missing parameter ") + name);
  }
  return *t;
}

}  // namespace

Tensor score(const Tensor& q, const Tensor& k, ScoringKind kind,
             const ScoringParams& params) {
  require_vector(q, "query");
  require_vector(k, "key");
  switch (kind) {
    case ScoringKind::additive: {
      const Tensor& v = required(params.v, "v");
      const Tensor& W = required(params.W, "W");
      const Tensor& U = required(params.U, "U");
      if (W.rank() != 2 || W.cols() != q.shape[0]) {
        throw std::invalid_argument("score: additive W " + W.shape_str() +
                                    " incompatible with query " + q.shape_str());
      }
      if (U.rank() != 2 || U.cols() != k.shape[0] || U.rows() != W.rows()) {
        throw std::invalid_argument("score: additive U " + U.shape_str() +
                                    " incompatible with key " + k.shape_str() +
                                    " and W " + W.shape_str());
      }
      if (v.shape[0] != W.rows()) {
        throw std::invalid_argument("score: additive v " + v.shape_str() +
                                    " incompatible with hidden dim " +
                                    std::to_string(W.rows()));
      }
      return dot(v, tanh_op(add(matvec(W, q), matvec(U, k))));
    }
    case ScoringKind::dot: {
      if (q.shape != k.shape) {
        throw std::invalid_argument("score: dot query " + q.shape_str() +
                                    " vs key " + k.shape_str());
      }
      return dot(q, k);
    }
    case ScoringKind::scaled_dot: {
      if (q.shape != k.shape) {
        throw std::invalid_argument("score: scaled_dot query " + q.shape_str() +
                                    " vs key " + k.shape_str());
      }
      if (params.d < 1) {
        throw std::invalid_argument("score: scaled_dot requires d >= 1");
      }
      if (params.d != k.shape[0]) {
        throw std::invalid_argument("score: scaled_dot d=" +
                                    std::to_string(params.d) + " vs key " +
                                    k.shape_str());
      }
      return inv_scale(dot(q, k), std::sqrt(static_cast<double>(params.d)));
    }
    case ScoringKind::bilinear: {
      const Tensor& W = required(params.W, "W");
      if (W.rank() != 2 || W.rows() != q.shape[0] || W.cols() != k.shape[0]) {
        throw std::invalid_argument("score: bilinear W " + W.shape_str() +
                                    " incompatible with query " + q.shape_str() +
                                    " and key " + k.shape_str());
      }
      return dot(q, matvec(W, k));
    }
  }
  throw std::domain_error("score: unknown scoring kind");
}

Tensor attention_weights(const Tensor& q, const std::vector<Tensor>& keys,
                         ScoringKind kind, const ScoringParams& params) {
  if (keys.empty()) throw std::domain_error("attention_weights: no keys");
  std::vector<Tensor> scores;
  scores.reserve(keys.size());
  for (const auto& k : keys) scores.push_back(score(q, k, kind, params));
  return softmax(concat(scores));
}

AttentionOutput attend(const Tensor& q, const std::vector<Tensor>& keys,
                       const std::vector<Tensor>& values, ScoringKind kind,
                       const ScoringParams& params) {
  if (keys.size() != values.size()) {
    throw std::invalid_argument("attend: " + std::to_string(keys.size()) +
                                " keys vs " + std::to_string(values.size()) +
                                " values");
  }
  if (keys.empty()) throw std::domain_error("attend: no keys");
  for (const auto& v : values) {
    if (v.shape != values[0].shape) {
      throw std::invalid_argument("attend: value dims differ: " + v.shape_str() +
                                  " vs " + values[0].shape_str());
    }
  }
  Tensor alpha = attention_weights(q, keys, kind, params);
  // context = alpha' V with the values stacked as rows
  Tensor context = vecmat(alpha, stack_rows(values));
  return {context, alpha};
}

AttentionOutput attend_rows(const Tensor& q, const Tensor& key_rows,
                            const Tensor& value_rows, ScoringKind kind,
                            const ScoringParams& params) {
  if (key_rows.rank() != 2 || value_rows.rank() != 2) {
    throw std::invalid_argument("attend_rows: key/value rows must be rank-2, got " +
                                key_rows.shape_str() + " and " +
                                value_rows.shape_str());
  }
  if (key_rows.rows() != value_rows.rows()) {
    throw std::invalid_argument("attend_rows: " + std::to_string(key_rows.rows()) +
                                " keys vs " + std::to_string(value_rows.rows()) +
                                " values");
  }
  std::vector<Tensor> keys, values;
  for (int i = 0; i < key_rows.rows(); ++i) {
    keys.push_back(pick_row(key_rows, i));
    values.push_back(pick_row(value_rows, i));
  }
  return attend(q, keys, values, kind, params);
}

Tensor multi_head_self_attention(const Tensor& x, int heads,
                                 const MultiHeadParams& params, MaskKind mask) {
  if (x.rank() != 2) {
    throw std::invalid_argument("multi_head_self_attention: x must be rank-2, got " +
                                x.shape_str());
  }
  const int dim = x.cols();
  if (heads < 1 || dim % heads != 0) {
    throw std::invalid_argument("multi_head_self_attention: dim " +
                                std::to_string(dim) + " not divisible by heads " +
                                std::to_string(heads));
  }
  if (static_cast<int>(params.wq.size()) != heads ||
      static_cast<int>(params.wk.size()) != heads ||
      static_cast<int>(params.wv.size()) != heads) {
    throw std::invalid_argument(
        "multi_head_self_attention: expected " + std::to_string(heads) +
        " per-head projections, got wq=" + std::to_string(params.wq.size()) +
        " wk=" + std::to_string(params.wk.size()) +
        " wv=" + std::to_string(params.wv.size()));
  }
  const int d_h = dim / heads;
  const double sqrt_d = std::sqrt(static_cast<double>(d_h));

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Tensor& wq = params.wq[h];
    if (wq.rank() != 2 || wq.rows() != dim || wq.cols() != d_h) {
      throw std::invalid_argument("multi_head_self_attention: head " +
                                  std::to_string(h) + " wq " + wq.shape_str() +
                                  " expected [" + std::to_string(dim) + "," +
                                  std::to_string(d_h) + "]");
    }
    Tensor q = matmul(x, wq);            // {seq, d_h}
    Tensor k = matmul(x, params.wk[h]);
    Tensor v = matmul(x, params.wv[h]);
    Tensor scores = inv_scale(matmul(q, transpose(k)), sqrt_d);  // {seq, seq}
    Tensor alpha = row_softmax(scores, mask == MaskKind::causal);
    head_outputs.push_back(matmul(alpha, v));  // {seq, d_h}
  }
  Tensor merged = heads == 1 ? head_outputs[0] : concat_cols(head_outputs);
  return add_row_broadcast(matmul(merged, params.wo), params.bo);
}

}  // namespace medkg
