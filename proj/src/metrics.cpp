#include "medkg/metrics.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace medkg {

long long ConfusionMatrix::at(int gold, int pred) const {
  if (gold < 0 || gold >= num_classes || pred < 0 || pred >= num_classes) {
    throw std::out_of_range("confusion: cell (" + std::to_string(gold) + "," +
                            std::to_string(pred) + ") outside " +
                            std::to_string(num_classes) + " classes");
  }
  return counts[static_cast<std::size_t>(gold) * num_classes + pred];
}

long long ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), 0LL);
}

ConfusionMatrix confusion(const std::vector<int>& preds,
                          const std::vector<int>& golds, int num_classes) {
  if (num_classes < 1) {
    throw std::invalid_argument("confusion: num_classes must be positive");
  }
  if (preds.size() != golds.size()) {
    throw std::invalid_argument("confusion: " + std::to_string(preds.size()) +
                                " predictions vs " + std::to_string(golds.size()) +
                                " golds");
  }
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.counts.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int g = golds[i];
    const int p = preds[i];
    if (g < 0 || g >= num_classes || p < 0 || p >= num_classes) {
      throw std::out_of_range("confusion: label (" + std::to_string(g) + "," +
                              std::to_string(p) + ") at sample " +
                              std::to_string(i) + " outside [0," +
                              std::to_string(num_classes) + ")");
    }
    ++cm.counts[static_cast<std::size_t>(g) * num_classes + p];
  }
  return cm;
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
  if (cm.num_classes < 1 ||
      cm.counts.size() != static_cast<std::size_t>(cm.num_classes) * cm.num_classes) {
    throw std::invalid_argument("compute_metrics: malformed confusion matrix");
  }
  const long long total = cm.total();
  if (total <= 0) {
    throw std::runtime_error("compute_metrics: empty confusion matrix");
  }
  Metrics m;
  long long trace = 0;
  for (int c = 0; c < cm.num_classes; ++c) trace += cm.at(c, c);
  m.accuracy = static_cast<double>(trace) / static_cast<double>(total);

  double f1_sum = 0.0;
  for (int c = 0; c < cm.num_classes; ++c) {
    long long tp = cm.at(c, c);
    long long fp = 0;
    long long fn = 0;
    for (int o = 0; o < cm.num_classes; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    ClassMetrics cls;
    if (tp + fp > 0) cls.precision = static_cast<double>(tp) / (tp + fp);
    if (tp + fn > 0) cls.recall = static_cast<double>(tp) / (tp + fn);
    if (cls.precision + cls.recall > 0.0) {
      cls.f1 = 2.0 * cls.precision * cls.recall / (cls.precision + cls.recall);
    }
    f1_sum += cls.f1;
    m.per_class.push_back(cls);
  }
  m.macro_f1 = f1_sum / cm.num_classes;
  return m;
}

}  // namespace medkg
