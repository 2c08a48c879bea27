#pragma once

#include <vector>

namespace medkg {

// Row = gold class, column = predicted class.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<long long> counts;  // row-major, num_classes^2 entries

  long long at(int gold, int pred) const;
  long long total() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds,
                          const std::vector<int>& golds, int num_classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct Metrics {
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;  // one-vs-rest, by class id
  double macro_f1 = 0.0;
};

// accuracy = trace/total; per class precision TP/(TP+FP), recall TP/(TP+FN),
// f1 = 2PR/(P+R); any zero denominator yields 0; macro_f1 = mean of class f1.
Metrics compute_metrics(const ConfusionMatrix& cm);

}  // namespace medkg
