#include "metadapt/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metadapt/autodiff.hpp"

namespace metadapt {

void AttackSpec::validate() const {
  if (epsilon <= 0.0) throw std::invalid_argument("AttackSpec: epsilon must be positive");
  if (kind == Kind::pgd) {
    if (pgd_steps < 1) throw std::invalid_argument("AttackSpec: pgd_steps must be >= 1");
    if (pgd_step_size <= 0.0) throw std::invalid_argument("AttackSpec: pgd_step_size must be positive");
  }
}

namespace {

Tensor input_gradient(const InputLoss& loss, const Tensor& x) {
  Tape tape;
  Tensor xt = leaf(tape, x);
  Tensor l = loss(xt);
  std::vector<Tensor> wrt{xt};
  Tensor g = backward_tensors(l, wrt)[0];
  if (!g.all_finite()) throw std::runtime_error("attack: non-finite input gradient");
  return g;
}

Tensor signed_step(const Tensor& x, const Tensor& g, double step) {
  std::vector<double> out(x.data());
  const auto& gd = g.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (gd[i] > 0.0) {
      out[i] += step;
    } else if (gd[i] < 0.0) {
      out[i] -= step;
    }
  }
  return Tensor::from_data_unchecked({x.rows(), x.cols()}, std::move(out));
}

Tensor project_box(const Tensor& x, const Tensor& center, double eps) {
  std::vector<double> out(x.data());
  const auto& cd = center.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(std::max(out[i], cd[i] - eps), cd[i] + eps);
  }
  return Tensor::from_data_unchecked({x.rows(), x.cols()}, std::move(out));
}

}  // namespace

Tensor fgsm(const InputLoss& loss, const Tensor& x, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("fgsm: eps must be positive");
  return signed_step(x, input_gradient(loss, x), eps);
}

Tensor pgd(const InputLoss& loss, const Tensor& x, const AttackSpec& spec) {
  if (spec.kind != AttackSpec::Kind::pgd) throw std::invalid_argument("pgd: spec.kind must be pgd");
  spec.validate();
  Tensor current = x;
  for (int k = 0; k < spec.pgd_steps; ++k) {
    current = signed_step(current, input_gradient(loss, current), spec.pgd_step_size);
    current = project_box(current, x, spec.epsilon);
  }
  return current;
}

std::vector<std::pair<double, MetricsReport>> robustness_curve(
    const std::function<MetricsReport(double level)>& eval_at, const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("robustness_curve: empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) {
      throw std::invalid_argument("robustness_curve: grid must be strictly increasing");
    }
  }
  std::vector<std::pair<double, MetricsReport>> out;
  out.reserve(grid.size());
  for (double level : grid) out.emplace_back(level, eval_at(level));
  return out;
}

}  // namespace metadapt
