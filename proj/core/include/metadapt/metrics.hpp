#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metadapt/tensor.hpp"

namespace metadapt {

// one-vs-rest counts per class
struct ConfusionCounts {
  int num_classes = 0;
  std::int64_t total = 0;
  std::vector<std::int64_t> tp, fp, fn, tn;
};

ConfusionCounts confusion(const std::vector<int>& preds, const std::vector<int>& truth,
                          int num_classes);

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double auc = 0.5;
  bool auc_defined = false;
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;  // macro-averaged
  double recall = 0.0;     // macro-averaged
  double f1 = 0.0;         // harmonic mean of the macro precision/recall
  double auc_roc = 0.5;    // binary AUC for K=2, macro one-vs-rest otherwise
  std::int64_t n_samples = 0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::string> degenerate_flags;  // empty-denominator cases
};

// scores: n x K per-class probabilities (column k is the score of class k)
MetricsReport metrics(const ConfusionCounts& counts, const Tensor& scores,
                      const std::vector<int>& truth);

// Mann-Whitney AUC with midranks for ties; 0.5 when either class is absent
// is the caller's concern (throws on single-class input)
double auc_rank(const std::vector<double>& scores, const std::vector<char>& is_positive);

}  // namespace metadapt
