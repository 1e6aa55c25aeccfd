#pragma once

#include <functional>
#include <vector>

#include "metadapt/metrics.hpp"
#include "metadapt/tensor.hpp"

namespace metadapt {

struct AttackSpec {
  enum class Kind { fgsm, pgd } kind = Kind::fgsm;
  double epsilon = 0.1;
  int pgd_steps = 10;
  double pgd_step_size = 0.025;

  void validate() const;
};

// builds a scalar task loss on the given (tracked) input batch
using InputLoss = std::function<Tensor(const Tensor& x_tracked)>;

// x' = x + eps * sign(grad_x loss); coordinates with exactly zero gradient
// stay put, and ||x' - x||_inf <= eps always
Tensor fgsm(const InputLoss& loss, const Tensor& x, double eps);

// signed-gradient steps projected onto the eps-ball around x; one step of
// size eps reproduces fgsm exactly
Tensor pgd(const InputLoss& loss, const Tensor& x, const AttackSpec& spec);

// Evaluates a model under increasing perturbation levels. The caller's
// eval_at must perform a clean evaluation at level 0.
std::vector<std::pair<double, MetricsReport>> robustness_curve(
    const std::function<MetricsReport(double level)>& eval_at, const std::vector<double>& grid);

}  // namespace metadapt
