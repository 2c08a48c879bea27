#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "medkg/rng.hpp"

namespace medkg {

// Numeric policy. train32 keeps trainable parameters on the float32 grid
// (values snapped after each optimizer step, checkpoints stored as float32);
// check64 disables snapping and is required while verifying gradients.
enum class Precision { train32, check64 };

Precision current_precision();

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision previous_;
};

// Graph recording can be suspended for evaluation-only forward passes.
bool grad_enabled();

class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

class Tensor;

// One recorded step of a computation. `backward` reads the output's gradient
// buffer and accumulates into the parents' buffers.
struct Node {
  const char* op = "";
  std::vector<Tensor> parents;
  std::function<void(const Tensor& out)> backward;
};

// Dense row-major tensor of rank 1..3 holding doubles, with an optional
// same-shape gradient buffer. Copies are shallow handles on shared storage.
class Tensor {
 public:
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // set by ops while grad recording is on

  Tensor() = default;
  Tensor(std::vector<int> shape_in, std::vector<double> values,
         bool requires_grad_in = false);

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  // Entries drawn i.i.d. normal(0, stddev).
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  int rank() const { return static_cast<int>(shape.size()); }
  std::size_t numel() const;
  int rows() const;  // rank-2 only
  int cols() const;  // rank-2 only

  double& at(std::size_t i) { return (*data)[i]; }
  double at(std::size_t i) const { return (*data)[i]; }
  double& at2(int r, int c) { return (*data)[static_cast<std::size_t>(r) * cols() + c]; }
  double at2(int r, int c) const { return (*data)[static_cast<std::size_t>(r) * cols() + c]; }

  bool all_finite() const;
  void zero_grad() const;
  // Snap every value to the nearest float32 (train32 parameter grid).
  void quantize_float32();

  std::string shape_str() const;
};

std::string shape_str(const std::vector<int>& shape);

// Reverse-mode sweep from a scalar (shape {1}) tensor: seeds its gradient
// with 1 and runs every recorded backward in reverse topological order.
void backward(const Tensor& loss);

}  // namespace medkg
