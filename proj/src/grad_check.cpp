#include "medkg/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace medkg {

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& inputs,
                           double eps) {
  if (inputs.empty()) throw std::invalid_argument("grad_check: no inputs");
  if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");
  PrecisionScope precision(Precision::check64);

  for (const auto& [name, t] : inputs) {
    if (!t.requires_grad || !t.grad) {
      throw std::invalid_argument("grad_check: input '" + name +
                                  "' does not track gradients");
    }
    t.zero_grad();
  }

  Tensor loss = f();
  if (loss.numel() != 1) {
    throw std::invalid_argument("grad_check: f must return a scalar, got " +
                                loss.shape_str());
  }
  backward(loss);

  // Snapshot analytic gradients before the perturbation passes overwrite state.
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& [name, t] : inputs) analytic.push_back(*t.grad);

  auto eval_loss = [&]() {
    NoGradScope no_grad;
    Tensor l = f();
    const double v = l.at(0);
    if (!std::isfinite(v)) {
      throw std::runtime_error("grad_check: loss is non-finite during probing");
    }
    return v;
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& t = inputs[k].second;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double saved = (*t.data)[i];
      (*t.data)[i] = saved + eps;
      const double up = eval_loss();
      (*t.data)[i] = saved - eps;
      const double down = eval_loss();
      (*t.data)[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = inputs[k].first;
        report.worst_coord = i;
      }
    }
  }
  return report;
}

}  // namespace medkg
