#include "metadapt/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace metadapt {

ConfusionCounts confusion(const std::vector<int>& preds, const std::vector<int>& truth,
                          int num_classes) {
  if (preds.size() != truth.size()) {
    throw std::invalid_argument("confusion: prediction and truth lengths differ");
  }
  if (num_classes < 2) throw std::invalid_argument("confusion: need at least 2 classes");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= num_classes || truth[i] < 0 || truth[i] >= num_classes) {
      throw std::invalid_argument("confusion: label out of range at index " + std::to_string(i));
    }
  }

  ConfusionCounts c;
  c.num_classes = num_classes;
  c.total = static_cast<std::int64_t>(preds.size());
  c.tp.assign(static_cast<std::size_t>(num_classes), 0);
  c.fp.assign(static_cast<std::size_t>(num_classes), 0);
  c.fn.assign(static_cast<std::size_t>(num_classes), 0);
  c.tn.assign(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (int k = 0; k < num_classes; ++k) {
      const bool p = preds[i] == k;
      const bool t = truth[i] == k;
      auto idx = static_cast<std::size_t>(k);
      if (p && t) {
        ++c.tp[idx];
      } else if (p && !t) {
        ++c.fp[idx];
      } else if (!p && t) {
        ++c.fn[idx];
      } else {
        ++c.tn[idx];
      }
    }
  }
  return c;
}

double auc_rank(const std::vector<double>& scores, const std::vector<char>& is_positive) {
  if (scores.size() != is_positive.size()) {
    throw std::invalid_argument("auc_rank: scores and labels differ in length");
  }
  std::int64_t n_pos = 0;
  for (char p : is_positive) n_pos += p ? 1 : 0;
  const std::int64_t n_neg = static_cast<std::int64_t>(scores.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auc_rank: need both positive and negative samples");
  }

  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)]; });

  // midranks over tie groups; U = rank_sum_pos - n_pos(n_pos+1)/2
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() &&
           scores[static_cast<std::size_t>(order[j])] == scores[static_cast<std::size_t>(order[i])]) {
      ++j;
    }
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (is_positive[static_cast<std::size_t>(order[k])]) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsReport metrics(const ConfusionCounts& counts, const Tensor& scores,
                      const std::vector<int>& truth) {
  if (counts.total != static_cast<std::int64_t>(truth.size())) {
    throw std::invalid_argument("metrics: counts and truth cover different sample sets");
  }
  if (scores.rows() != static_cast<int>(truth.size())) {
    throw std::invalid_argument("metrics: scores and truth cover different sample sets");
  }
  if (scores.cols() != counts.num_classes) {
    throw std::invalid_argument("metrics: score columns must match the class count");
  }

  MetricsReport r;
  r.n_samples = counts.total;

  std::int64_t correct = 0;
  for (int k = 0; k < counts.num_classes; ++k) correct += counts.tp[static_cast<std::size_t>(k)];
  r.accuracy = counts.total > 0 ? static_cast<double>(correct) / static_cast<double>(counts.total) : 0.0;

  double macro_p = 0.0, macro_r = 0.0;
  r.per_class.resize(static_cast<std::size_t>(counts.num_classes));
  for (int k = 0; k < counts.num_classes; ++k) {
    auto idx = static_cast<std::size_t>(k);
    ClassMetrics& cm = r.per_class[idx];
    const std::int64_t p_den = counts.tp[idx] + counts.fp[idx];
    const std::int64_t r_den = counts.tp[idx] + counts.fn[idx];
    if (p_den == 0) {
      cm.precision = 0.0;
      r.degenerate_flags.push_back("precision_class_" + std::to_string(k));
    } else {
      cm.precision = static_cast<double>(counts.tp[idx]) / static_cast<double>(p_den);
    }
    if (r_den == 0) {
      cm.recall = 0.0;
      r.degenerate_flags.push_back("recall_class_" + std::to_string(k));
    } else {
      cm.recall = static_cast<double>(counts.tp[idx]) / static_cast<double>(r_den);
    }
    if (cm.precision + cm.recall > 0.0) {
      cm.f1 = 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall);
    } else {
      cm.f1 = 0.0;
      r.degenerate_flags.push_back("f1_class_" + std::to_string(k));
    }
    macro_p += cm.precision;
    macro_r += cm.recall;
  }
  r.precision = macro_p / counts.num_classes;
  r.recall = macro_r / counts.num_classes;
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.f1 = 0.0;
    r.degenerate_flags.push_back("f1");
  }

  // AUC: binary uses the positive-class scores; otherwise macro one-vs-rest
  auto class_auc = [&](int k) -> std::pair<double, bool> {
    std::vector<double> s(truth.size());
    std::vector<char> pos(truth.size());
    std::int64_t n_pos = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      s[i] = scores.at(static_cast<int>(i), k);
      pos[i] = truth[i] == k ? 1 : 0;
      n_pos += pos[i];
    }
    if (n_pos == 0 || n_pos == static_cast<std::int64_t>(truth.size())) return {0.5, false};
    return {auc_rank(s, pos), true};
  };

  if (counts.num_classes == 2) {
    auto [auc, defined] = class_auc(1);
    r.per_class[1].auc = auc;
    r.per_class[1].auc_defined = defined;
    r.per_class[0].auc = defined ? 1.0 - auc : 0.5;
    r.per_class[0].auc_defined = defined;
    r.auc_roc = auc;
    if (!defined) r.degenerate_flags.push_back("auc_roc");
  } else {
    double sum = 0.0;
    int defined_count = 0;
    for (int k = 0; k < counts.num_classes; ++k) {
      auto [auc, defined] = class_auc(k);
      r.per_class[static_cast<std::size_t>(k)].auc = auc;
      r.per_class[static_cast<std::size_t>(k)].auc_defined = defined;
      if (defined) {
        sum += auc;
        ++defined_count;
      } else {
        r.degenerate_flags.push_back("auc_class_" + std::to_string(k));
      }
    }
    r.auc_roc = defined_count > 0 ? sum / defined_count : 0.5;
    if (defined_count == 0) r.degenerate_flags.push_back("auc_roc");
  }
  return r;
}

}  // namespace metadapt
