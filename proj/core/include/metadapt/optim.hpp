#pragma once

#include <map>
#include <string>

#include "metadapt/tensor.hpp"

namespace metadapt {

// plain gradient step: p <- p - lr * g, returns fresh untracked tensors
ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr);

// Adam with bias correction; state is keyed by parameter name
class AdamState {
 public:
  AdamState(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  ParamSet step(const ParamSet& params, const ParamSet& grads, double lr);

 private:
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace metadapt
