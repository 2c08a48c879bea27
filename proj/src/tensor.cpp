#include "medkg/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace medkg {

namespace {
thread_local Precision g_precision = Precision::train32;
thread_local bool g_grad_enabled = true;

void check_shape(const std::vector<int>& shape, std::size_t n_values) {
  if (shape.empty() || shape.size() > 3) {
    throw std::invalid_argument("tensor: rank must be 1..3, got rank " +
                                std::to_string(shape.size()));
  }
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: nonpositive dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  if (n != n_values) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " wants " +
                                std::to_string(n) + " values, got " +
                                std::to_string(n_values));
  }
}
}  // namespace

Precision current_precision() { return g_precision; }

PrecisionScope::PrecisionScope(Precision p) : previous_(g_precision) { g_precision = p; }
PrecisionScope::~PrecisionScope() { g_precision = previous_; }

bool grad_enabled() { return g_grad_enabled; }

NoGradScope::NoGradScope() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradScope::~NoGradScope() { g_grad_enabled = previous_; }

Tensor::Tensor(std::vector<int> shape_in, std::vector<double> values,
               bool requires_grad_in)
    : shape(std::move(shape_in)),
      data(std::make_shared<std::vector<double>>(std::move(values))),
      requires_grad(requires_grad_in) {
  check_shape(shape, data->size());
  if (requires_grad) grad = std::make_shared<std::vector<double>>(data->size(), 0.0);
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d > 0 ? d : 0);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d > 0 ? d : 0);
  std::vector<double> values(n);
  for (auto& v : values) v = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

std::size_t Tensor::numel() const { return data ? data->size() : 0; }

int Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("tensor: rows() on rank-" + std::to_string(rank()));
  return shape[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("tensor: cols() on rank-" + std::to_string(rank()));
  return shape[1];
}

bool Tensor::all_finite() const {
  for (double v : *data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::zero_grad() const {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

void Tensor::quantize_float32() {
  for (auto& v : *data) v = static_cast<double>(static_cast<float>(v));
}

std::string Tensor::shape_str() const { return medkg::shape_str(shape); }

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ",";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar tensor, got " +
                                loss.shape_str());
  }
  if (!loss.grad) {
    throw std::invalid_argument("backward: loss does not require grad");
  }
  (*loss.grad)[0] = 1.0;

  // Post-order DFS over the recorded graph, then replay in reverse.
  std::vector<const Tensor*> order;
  std::vector<std::pair<const Tensor*, std::size_t>> stack;
  std::unordered_set<Node*> seen;
  if (loss.node) {
    seen.insert(loss.node.get());
    stack.emplace_back(&loss, 0);
  }
  while (!stack.empty()) {
    auto& [t, next_child] = stack.back();
    const auto& parents = t->node->parents;
    bool descended = false;
    while (next_child < parents.size()) {
      const Tensor& p = parents[next_child++];
      if (p.node && !seen.count(p.node.get())) {
        seen.insert(p.node.get());
        stack.emplace_back(&p, 0);
        descended = true;
        break;
      }
    }
    if (!descended) {
      order.push_back(t);
      stack.pop_back();
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Tensor& t = **it;
    if (t.node->backward) t.node->backward(t);
  }
}

}  // namespace medkg
