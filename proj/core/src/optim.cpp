#include "metadapt/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace metadapt {

ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr) {
  ParamSet out;
  for (const auto& [name, p] : params) {
    const auto& g = grads.at(name);
    if (!p.same_extent(g)) throw std::invalid_argument("sgd_step: gradient shape mismatch for " + name);
    std::vector<double> d(p.data());
    const auto& gd = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lr * gd[i];
    out.insert(name, Tensor::from_data_unchecked({p.rows(), p.cols()}, std::move(d)));
  }
  return out;
}

ParamSet AdamState::step(const ParamSet& params, const ParamSet& grads, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  ParamSet out;
  for (const auto& [name, p] : params) {
    const auto& g = grads.at(name).data();
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    std::vector<double> d(p.data());
    for (std::size_t i = 0; i < d.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      d[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
    out.insert(name, Tensor::from_data_unchecked({p.rows(), p.cols()}, std::move(d)));
  }
  return out;
}

}  // namespace metadapt
