#pragma once

#include <vector>

#include "medkg/tensor.hpp"

namespace medkg {

// Differentiable tensor operations. All are pure: inputs are never mutated,
// outputs are fresh tensors. When grad recording is on and any input requires
// grad, the output carries a Node whose backward accumulates into the inputs.

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor inv_scale(const Tensor& a, double divisor);
// Multiply by a scalar tensor (shape {1}); gradient flows to both.
Tensor scale_by(const Tensor& a, const Tensor& factor);

Tensor tanh_op(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor log_op(const Tensor& x);

// Rank-2 x rank-2 matrix product.
Tensor matmul(const Tensor& a, const Tensor& b);
// y = A x for rank-2 A (m x n) and rank-1 x (n).
Tensor matvec(const Tensor& a, const Tensor& x);
// y = x^T A for rank-1 x (m) and rank-2 A (m x n).
Tensor vecmat(const Tensor& x, const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);  // rank-1, returns shape {1}
Tensor transpose(const Tensor& a);

// Stable softmax over a rank-1 tensor (max-subtracted).
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
// Row-wise stable softmax over a rank-2 tensor; with causal=true entry (i,j)
// for j > i is forced to exactly zero weight.
Tensor row_softmax(const Tensor& scores, bool causal);

// Zero-mean unit-variance normalization scaled by gamma, shifted by beta.
// Rank-1 input normalizes the whole vector; rank-2 normalizes each row.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Row lookup: out[i] = table[ids[i]], gradient scatter-added into table rows.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor pick_row(const Tensor& x, int row);      // rank-2 -> rank-1
Tensor pick(const Tensor& x, int index);        // rank-1 -> shape {1}
Tensor sum(const Tensor& x);                    // any rank -> shape {1}
// Mean of the rows selected by `keep` (size = x.rows(), at least one true).
Tensor mean_rows(const Tensor& x, const std::vector<bool>& keep);
Tensor add_row_broadcast(const Tensor& x, const Tensor& bias);

Tensor concat(const std::vector<Tensor>& parts);       // rank-1 pieces
Tensor stack_rows(const std::vector<Tensor>& rows);    // rank-1 -> rank-2
Tensor concat_cols(const std::vector<Tensor>& parts);  // rank-2, same rows
Tensor slice_cols(const Tensor& x, int col0, int col1);

}  // namespace medkg
