// Test-only reference implementations, kept independent of the library's
// computation paths: naive loops, pair enumeration and finite differences.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "metadapt/tensor.hpp"

namespace oracles {

// naive triple-loop product
inline metadapt::Tensor matmul_loop(const metadapt::Tensor& a, const metadapt::Tensor& b) {
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
      out[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
  return metadapt::Tensor::from_data_unchecked({m, n}, std::move(out));
}

// O(n^2) pairwise AUC with ties counted 1/2
inline double auc_pairwise(const std::vector<double>& scores, const std::vector<char>& pos) {
  double wins = 0.0;
  long long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (pos[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

// threshold-sweep ROC integration (trapezoid over unique thresholds)
inline double auc_threshold_sweep(const std::vector<double>& scores, const std::vector<char>& pos) {
  std::vector<double> uniq(scores);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

  long long n_pos = 0, n_neg = 0;
  for (char p : pos) (p ? n_pos : n_neg) += 1;

  // sweep thresholds from above the max down to below the min
  std::vector<std::pair<double, double>> curve;  // (fpr, tpr)
  curve.emplace_back(0.0, 0.0);
  for (auto it = uniq.rbegin(); it != uniq.rend(); ++it) {
    const double thr = *it;
    long long tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= thr) (pos[i] ? tp : fp) += 1;
    }
    curve.emplace_back(static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos);
  }
  curve.emplace_back(1.0, 1.0);

  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].first - curve[i - 1].first) * 0.5 * (curve[i].second + curve[i - 1].second);
  }
  return area;
}

// central finite difference of a scalar function of a parameter vector
template <typename F>
std::vector<double> finite_difference(F f, std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace oracles
