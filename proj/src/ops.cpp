#include "medkg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace medkg {

namespace {

constexpr double kMaskedScore = -1e30;

bool want_grad(const Tensor& t) { return grad_enabled() && t.requires_grad; }

Tensor make_output(std::vector<int> shape, std::vector<double> values,
                   const char* op, std::vector<Tensor> parents) {
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad;
  }
  Tensor out(std::move(shape), std::move(values), needs);
  if (needs) {
    out.node = std::make_shared<Node>();
    out.node->op = op;
    out.node->parents = std::move(parents);
  }
  return out;
}

void set_backward(Tensor& out, std::function<void(const Tensor&)> fn) {
  if (out.node) out.node->backward = std::move(fn);
}

std::vector<double>* grad_of(const Tensor& t) {
  return t.requires_grad ? t.grad.get() : nullptr;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  }
}

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank-" +
                                std::to_string(rank) + ", got " + t.shape_str());
  }
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw std::runtime_error(std::string(op) + ": produced a non-finite value");
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) + b.at(i);
  Tensor out = make_output(a.shape, std::move(v), "add", {a, b});
  set_backward(out, [](const Tensor& o) {
    for (int p = 0; p < 2; ++p) {
      if (auto* g = grad_of(o.node->parents[p])) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += (*o.grad)[i];
      }
    }
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) - b.at(i);
  Tensor out = make_output(a.shape, std::move(v), "sub", {a, b});
  set_backward(out, [](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += (*o.grad)[i];
    }
    if (auto* g = grad_of(o.node->parents[1])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= (*o.grad)[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) * b.at(i);
  Tensor out = make_output(a.shape, std::move(v), "mul", {a, b});
  set_backward(out, [](const Tensor& o) {
    const Tensor& a = o.node->parents[0];
    const Tensor& b = o.node->parents[1];
    if (auto* g = grad_of(a)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += (*o.grad)[i] * b.at(i);
    }
    if (auto* g = grad_of(b)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += (*o.grad)[i] * a.at(i);
    }
  });
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) * factor;
  Tensor out = make_output(a.shape, std::move(v), "scale", {a});
  set_backward(out, [factor](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += (*o.grad)[i] * factor;
    }
  });
  return out;
}

Tensor inv_scale(const Tensor& a, double divisor) {
  if (divisor == 0.0) throw std::invalid_argument("inv_scale: divisor is zero");
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) / divisor;
  Tensor out = make_output(a.shape, std::move(v), "inv_scale", {a});
  set_backward(out, [divisor](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += (*o.grad)[i] / divisor;
    }
  });
  return out;
}

Tensor scale_by(const Tensor& a, const Tensor& factor) {
  if (factor.numel() != 1) {
    throw std::invalid_argument("scale_by: factor must be a scalar tensor, got " +
                                factor.shape_str());
  }
  const double f = factor.at(0);
  std::vector<double> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) * f;
  Tensor out = make_output(a.shape, std::move(v), "scale_by", {a, factor});
  set_backward(out, [f](const Tensor& o) {
    const Tensor& a = o.node->parents[0];
    if (auto* g = grad_of(a)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += (*o.grad)[i] * f;
    }
    if (auto* g = grad_of(o.node->parents[1])) {
      double acc = 0.0;
      for (std::size_t i = 0; i < o.numel(); ++i) acc += (*o.grad)[i] * a.at(i);
      (*g)[0] += acc;
    }
  });
  return out;
}

Tensor tanh_op(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(x.at(i));
  Tensor out = make_output(x.shape, std::move(v), "tanh", {x});
  // Capture outputs by value so the rule does not depend on buffer identity.
  auto values = out.data;
  set_backward(out, [values](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double y = (*values)[i];
        (*g)[i] += (*o.grad)[i] * (1.0 - y * y);
      }
    }
  });
  return out;
}

Tensor relu(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
  Tensor out = make_output(x.shape, std::move(v), "relu", {x});
  set_backward(out, [](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    if (auto* g = grad_of(x)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (x.at(i) > 0.0) (*g)[i] += (*o.grad)[i];
      }
    }
  });
  return out;
}

Tensor log_op(const Tensor& x) {
  std::vector<double> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(x.at(i));
  Tensor out = make_output(x.shape, std::move(v), "log", {x});
  require_finite(out, "log");
  set_backward(out, [](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    if (auto* g = grad_of(x)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += (*o.grad)[i] / x.at(i);
    }
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                a.shape_str() + " x " + b.shape_str());
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> v(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = a.at2(i, p);
      if (aip == 0.0) continue;
      const std::size_t brow = static_cast<std::size_t>(p) * n;
      const std::size_t orow = static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) v[orow + j] += aip * (*b.data)[brow + j];
    }
  }
  Tensor out = make_output({m, n}, std::move(v), "matmul", {a, b});
  set_backward(out, [m, k, n](const Tensor& o) {
    const Tensor& a = o.node->parents[0];
    const Tensor& b = o.node->parents[1];
    if (auto* ga = grad_of(a)) {
      // dA += G B^T
      for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += (*o.grad)[static_cast<std::size_t>(i) * n + j] * b.at2(p, j);
          (*ga)[static_cast<std::size_t>(i) * k + p] += acc;
        }
      }
    }
    if (auto* gb = grad_of(b)) {
      // dB += A^T G
      for (int p = 0; p < k; ++p) {
        for (int i = 0; i < m; ++i) {
          const double aip = a.at2(i, p);
          if (aip == 0.0) continue;
          const std::size_t orow = static_cast<std::size_t>(i) * n;
          const std::size_t brow = static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) (*gb)[brow + j] += aip * (*o.grad)[orow + j];
        }
      }
    }
  });
  return out;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  require_rank(a, 2, "matvec");
  require_rank(x, 1, "matvec");
  if (a.cols() != x.shape[0]) {
    throw std::invalid_argument("matvec: dimensions disagree: " + a.shape_str() +
                                " x " + x.shape_str());
  }
  const int m = a.rows(), n = a.cols();
  std::vector<double> v(m, 0.0);
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += a.at2(i, j) * x.at(j);
    v[i] = acc;
  }
  Tensor out = make_output({m}, std::move(v), "matvec", {a, x});
  set_backward(out, [m, n](const Tensor& o) {
    const Tensor& a = o.node->parents[0];
    const Tensor& x = o.node->parents[1];
    if (auto* ga = grad_of(a)) {
      for (int i = 0; i < m; ++i) {
        const double gi = (*o.grad)[i];
        if (gi == 0.0) continue;
        for (int j = 0; j < n; ++j) (*ga)[static_cast<std::size_t>(i) * n + j] += gi * x.at(j);
      }
    }
    if (auto* gx = grad_of(x)) {
      for (int i = 0; i < m; ++i) {
        const double gi = (*o.grad)[i];
        if (gi == 0.0) continue;
        for (int j = 0; j < n; ++j) (*gx)[j] += gi * a.at2(i, j);
      }
    }
  });
  return out;
}

Tensor vecmat(const Tensor& x, const Tensor& a) {
  require_rank(x, 1, "vecmat");
  require_rank(a, 2, "vecmat");
  if (x.shape[0] != a.rows()) {
    throw std::invalid_argument("vecmat: dimensions disagree: " + x.shape_str() +
                                " x " + a.shape_str());
  }
  const int m = a.rows(), n = a.cols();
  std::vector<double> v(n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double xi = x.at(i);
    if (xi == 0.0) continue;
    for (int j = 0; j < n; ++j) v[j] += xi * a.at2(i, j);
  }
  Tensor out = make_output({n}, std::move(v), "vecmat", {x, a});
  set_backward(out, [m, n](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    const Tensor& a = o.node->parents[1];
    if (auto* gx = grad_of(x)) {
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += a.at2(i, j) * (*o.grad)[j];
        (*gx)[i] += acc;
      }
    }
    if (auto* ga = grad_of(a)) {
      for (int i = 0; i < m; ++i) {
        const double xi = x.at(i);
        if (xi == 0.0) continue;
        for (int j = 0; j < n; ++j) (*ga)[static_cast<std::size_t>(i) * n + j] += xi * (*o.grad)[j];
      }
    }
  });
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "dot");
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a.at(i) * b.at(i);
  Tensor out = make_output({1}, {acc}, "dot", {a, b});
  set_backward(out, [](const Tensor& o) {
    const Tensor& a = o.node->parents[0];
    const Tensor& b = o.node->parents[1];
    const double g0 = (*o.grad)[0];
    if (auto* g = grad_of(a)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += g0 * b.at(i);
    }
    if (auto* g = grad_of(b)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += g0 * a.at(i);
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const int m = a.rows(), n = a.cols();
  std::vector<double> v(a.numel());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(j) * m + i] = a.at2(i, j);
  }
  Tensor out = make_output({n, m}, std::move(v), "transpose", {a});
  set_backward(out, [m, n](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          (*g)[static_cast<std::size_t>(i) * n + j] += (*o.grad)[static_cast<std::size_t>(j) * m + i];
        }
      }
    }
  });
  return out;
}

namespace {

// Shared stable-softmax kernel for one contiguous row.
void softmax_row_values(const double* x, double* y, int n) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    denom += y[i];
  }
  for (int i = 0; i < n; ++i) y[i] /= denom;
}

}  // namespace

Tensor softmax(const Tensor& x) {
  require_rank(x, 1, "softmax");
  if (x.numel() == 0) throw std::domain_error("softmax: empty input");
  if (!x.all_finite()) throw std::domain_error("softmax: non-finite input");
  const int n = x.shape[0];
  std::vector<double> v(n);
  softmax_row_values(x.data->data(), v.data(), n);
  Tensor out = make_output({n}, std::move(v), "softmax", {x});
  require_finite(out, "softmax");
  auto values = out.data;
  set_backward(out, [values, n](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += (*o.grad)[i] * (*values)[i];
      for (int i = 0; i < n; ++i) (*g)[i] += (*values)[i] * ((*o.grad)[i] - s);
    }
  });
  return out;
}

Tensor log_softmax(const Tensor& x) {
  require_rank(x, 1, "log_softmax");
  if (x.numel() == 0) throw std::domain_error("log_softmax: empty input");
  const int n = x.shape[0];
  double mx = x.at(0);
  for (int i = 1; i < n; ++i) mx = std::max(mx, x.at(i));
  double denom = 0.0;
  for (int i = 0; i < n; ++i) denom += std::exp(x.at(i) - mx);
  const double lse = mx + std::log(denom);
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = x.at(i) - lse;
  Tensor out = make_output({n}, std::move(v), "log_softmax", {x});
  require_finite(out, "log_softmax");
  auto values = out.data;
  set_backward(out, [values, n](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += (*o.grad)[i];
      for (int i = 0; i < n; ++i) (*g)[i] += (*o.grad)[i] - std::exp((*values)[i]) * s;
    }
  });
  return out;
}

Tensor row_softmax(const Tensor& scores, bool causal) {
  require_rank(scores, 2, "row_softmax");
  const int m = scores.rows(), n = scores.cols();
  std::vector<double> masked(scores.numel());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const double s = scores.at2(i, j);
      masked[static_cast<std::size_t>(i) * n + j] = (causal && j > i) ? kMaskedScore : s;
    }
  }
  std::vector<double> v(scores.numel());
  for (int i = 0; i < m; ++i) {
    softmax_row_values(masked.data() + static_cast<std::size_t>(i) * n,
                       v.data() + static_cast<std::size_t>(i) * n, n);
  }
  Tensor out = make_output({m, n}, std::move(v), "row_softmax", {scores});
  require_finite(out, "row_softmax");
  auto values = out.data;
  set_backward(out, [values, m, n](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      for (int i = 0; i < m; ++i) {
        const std::size_t row = static_cast<std::size_t>(i) * n;
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += (*o.grad)[row + j] * (*values)[row + j];
        for (int j = 0; j < n; ++j) {
          (*g)[row + j] += (*values)[row + j] * ((*o.grad)[row + j] - s);
        }
      }
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw std::invalid_argument("layer_norm: expected rank 1 or 2, got " + x.shape_str());
  }
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  const int n = x.rank() == 1 ? x.shape[0] : x.cols();
  const int m = x.rank() == 1 ? 1 : x.rows();
  require_rank(gamma, 1, "layer_norm");
  require_rank(beta, 1, "layer_norm");
  if (gamma.shape[0] != n || beta.shape[0] != n) {
    throw std::invalid_argument("layer_norm: gamma/beta length mismatch: x " +
                                x.shape_str() + ", gamma " + gamma.shape_str() +
                                ", beta " + beta.shape_str());
  }
  std::vector<double> v(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(m);
  for (int i = 0; i < m; ++i) {
    const std::size_t row = static_cast<std::size_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += (*x.data)[row + j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = (*x.data)[row + j] - mean;
      var += d * d;
    }
    var /= n;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) {
      xhat[row + j] = ((*x.data)[row + j] - mean) * inv_std[i];
      v[row + j] = gamma.at(j) * xhat[row + j] + beta.at(j);
    }
  }
  Tensor out = make_output(x.shape, std::move(v), "layer_norm", {x, gamma, beta});
  set_backward(out, [xhat = std::move(xhat), inv_std = std::move(inv_std), m,
                     n](const Tensor& o) {
    const Tensor& x = o.node->parents[0];
    const Tensor& gamma = o.node->parents[1];
    auto* gx = grad_of(x);
    auto* gg = grad_of(gamma);
    auto* gb = grad_of(o.node->parents[2]);
    for (int i = 0; i < m; ++i) {
      const std::size_t row = static_cast<std::size_t>(i) * n;
      if (gg) {
        for (int j = 0; j < n; ++j) (*gg)[j] += (*o.grad)[row + j] * xhat[row + j];
      }
      if (gb) {
        for (int j = 0; j < n; ++j) (*gb)[j] += (*o.grad)[row + j];
      }
      if (gx) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int j = 0; j < n; ++j) {
          const double gj = (*o.grad)[row + j] * gamma.at(j);
          sum_g += gj;
          sum_gx += gj * xhat[row + j];
        }
        for (int j = 0; j < n; ++j) {
          const double gj = (*o.grad)[row + j] * gamma.at(j);
          (*gx)[row + j] += inv_std[i] * (gj - sum_g / n - xhat[row + j] * sum_gx / n);
        }
      }
    }
  });
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank(table, 2, "gather_rows");
  if (ids.empty()) throw std::invalid_argument("gather_rows: empty id list");
  const int n = table.cols();
  for (int id : ids) {
    if (id < 0 || id >= table.rows()) {
      throw std::out_of_range("gather_rows: row " + std::to_string(id) +
                              " outside table " + table.shape_str());
    }
  }
  std::vector<double> v(ids.size() * static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t src = static_cast<std::size_t>(ids[i]) * n;
    std::copy_n(table.data->data() + src, n, v.data() + i * n);
  }
  Tensor out = make_output({static_cast<int>(ids.size()), n}, std::move(v),
                           "gather_rows", {table});
  set_backward(out, [ids, n](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::size_t dst = static_cast<std::size_t>(ids[i]) * n;
        const std::size_t src = i * n;
        for (int j = 0; j < n; ++j) (*g)[dst + j] += (*o.grad)[src + j];
      }
    }
  });
  return out;
}

Tensor pick_row(const Tensor& x, int row) {
  require_rank(x, 2, "pick_row");
  if (row < 0 || row >= x.rows()) {
    throw std::out_of_range("pick_row: row " + std::to_string(row) +
                            " outside " + x.shape_str());
  }
  const int n = x.cols();
  std::vector<double> v(x.data->data() + static_cast<std::size_t>(row) * n,
                        x.data->data() + static_cast<std::size_t>(row + 1) * n);
  Tensor out = make_output({n}, std::move(v), "pick_row", {x});
  set_backward(out, [row, n](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      const std::size_t dst = static_cast<std::size_t>(row) * n;
      for (int j = 0; j < n; ++j) (*g)[dst + j] += (*o.grad)[j];
    }
  });
  return out;
}

Tensor pick(const Tensor& x, int index) {
  require_rank(x, 1, "pick");
  if (index < 0 || index >= x.shape[0]) {
    throw std::out_of_range("pick: index " + std::to_string(index) +
                            " outside " + x.shape_str());
  }
  Tensor out = make_output({1}, {x.at(index)}, "pick", {x});
  set_backward(out, [index](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) (*g)[index] += (*o.grad)[0];
  });
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.at(i);
  Tensor out = make_output({1}, {acc}, "sum", {x});
  set_backward(out, [](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      const double g0 = (*o.grad)[0];
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += g0;
    }
  });
  return out;
}

Tensor mean_rows(const Tensor& x, const std::vector<bool>& keep) {
  require_rank(x, 2, "mean_rows");
  if (static_cast<int>(keep.size()) != x.rows()) {
    throw std::invalid_argument("mean_rows: mask length " + std::to_string(keep.size()) +
                                " vs rows " + std::to_string(x.rows()));
  }
  int count = 0;
  for (bool k : keep) count += k ? 1 : 0;
  if (count == 0) throw std::invalid_argument("mean_rows: mask selects no rows");
  const int m = x.rows(), n = x.cols();
  std::vector<double> v(n, 0.0);
  for (int i = 0; i < m; ++i) {
    if (!keep[i]) continue;
    for (int j = 0; j < n; ++j) v[j] += x.at2(i, j);
  }
  for (double& e : v) e /= count;
  Tensor out = make_output({n}, std::move(v), "mean_rows", {x});
  set_backward(out, [keep, count, m, n](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      for (int i = 0; i < m; ++i) {
        if (!keep[i]) continue;
        for (int j = 0; j < n; ++j) {
          (*g)[static_cast<std::size_t>(i) * n + j] += (*o.grad)[j] / count;
        }
      }
    }
  });
  return out;
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row_broadcast");
  require_rank(bias, 1, "add_row_broadcast");
  if (bias.shape[0] != x.cols()) {
    throw std::invalid_argument("add_row_broadcast: bias " + bias.shape_str() +
                                " vs " + x.shape_str());
  }
  const int m = x.rows(), n = x.cols();
  std::vector<double> v(x.numel());
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(i) * n + j] = x.at2(i, j) + bias.at(j);
  }
  Tensor out = make_output(x.shape, std::move(v), "add_row_broadcast", {x, bias});
  set_backward(out, [m, n](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += (*o.grad)[i];
    }
    if (auto* g = grad_of(o.node->parents[1])) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) (*g)[j] += (*o.grad)[static_cast<std::size_t>(i) * n + j];
      }
    }
  });
  return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no parts");
  std::vector<double> v;
  std::vector<int> sizes;
  for (const auto& p : parts) {
    require_rank(p, 1, "concat");
    sizes.push_back(p.shape[0]);
    v.insert(v.end(), p.data->begin(), p.data->end());
  }
  const int total = static_cast<int>(v.size());
  Tensor out = make_output({total}, std::move(v), "concat", parts);
  set_backward(out, [sizes](const Tensor& o) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < sizes.size(); ++p) {
      if (auto* g = grad_of(o.node->parents[p])) {
        for (int j = 0; j < sizes[p]; ++j) (*g)[j] += (*o.grad)[offset + j];
      }
      offset += sizes[p];
    }
  });
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  const int n = rows[0].shape[0];
  std::vector<double> v;
  for (const auto& r : rows) {
    require_rank(r, 1, "stack_rows");
    if (r.shape[0] != n) {
      throw std::invalid_argument("stack_rows: row length mismatch " +
                                  r.shape_str() + " vs " + rows[0].shape_str());
    }
    v.insert(v.end(), r.data->begin(), r.data->end());
  }
  Tensor out = make_output({static_cast<int>(rows.size()), n}, std::move(v),
                           "stack_rows", rows);
  set_backward(out, [n](const Tensor& o) {
    for (std::size_t p = 0; p < o.node->parents.size(); ++p) {
      if (auto* g = grad_of(o.node->parents[p])) {
        const std::size_t src = p * n;
        for (int j = 0; j < n; ++j) (*g)[j] += (*o.grad)[src + j];
      }
    }
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int m = parts[0].rows();
  int total = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.rows() != m) {
      throw std::invalid_argument("concat_cols: row count mismatch " +
                                  p.shape_str() + " vs " + parts[0].shape_str());
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> v(static_cast<std::size_t>(m) * total);
  int col0 = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const int w = widths[p];
    for (int i = 0; i < m; ++i) {
      std::copy_n(parts[p].data->data() + static_cast<std::size_t>(i) * w, w,
                  v.data() + static_cast<std::size_t>(i) * total + col0);
    }
    col0 += w;
  }
  Tensor out = make_output({m, total}, std::move(v), "concat_cols", parts);
  set_backward(out, [widths, m, total](const Tensor& o) {
    int col0 = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      const int w = widths[p];
      if (auto* g = grad_of(o.node->parents[p])) {
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < w; ++j) {
            (*g)[static_cast<std::size_t>(i) * w + j] +=
                (*o.grad)[static_cast<std::size_t>(i) * total + col0 + j];
          }
        }
      }
      col0 += w;
    }
  });
  return out;
}

Tensor slice_cols(const Tensor& x, int col0, int col1) {
  require_rank(x, 2, "slice_cols");
  if (col0 < 0 || col1 <= col0 || col1 > x.cols()) {
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(col0) +
                                "," + std::to_string(col1) + ") on " + x.shape_str());
  }
  const int m = x.rows(), n = x.cols(), w = col1 - col0;
  std::vector<double> v(static_cast<std::size_t>(m) * w);
  for (int i = 0; i < m; ++i) {
    std::copy_n(x.data->data() + static_cast<std::size_t>(i) * n + col0, w,
                v.data() + static_cast<std::size_t>(i) * w);
  }
  Tensor out = make_output({m, w}, std::move(v), "slice_cols", {x});
  set_backward(out, [col0, m, n, w](const Tensor& o) {
    if (auto* g = grad_of(o.node->parents[0])) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < w; ++j) {
          (*g)[static_cast<std::size_t>(i) * n + col0 + j] +=
              (*o.grad)[static_cast<std::size_t>(i) * w + j];
        }
      }
    }
  });
  return out;
}

}  // namespace medkg
