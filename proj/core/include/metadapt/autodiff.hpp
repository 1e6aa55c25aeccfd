#pragma once

#include <functional>
#include <span>
#include <vector>

#include "metadapt/tensor.hpp"

namespace metadapt {

// GradMode::value computes gradients as plain numbers. GradMode::graph
// records the adjoint computation on the same tape, so the returned
// gradients are tracked tensors and can be differentiated again (this is
// what makes the exact meta-update possible).
enum class GradMode { value, graph };

// Reverse sweep from a scalar loss. Parameters not reachable from the loss
// receive zero gradients of matching shape. Accumulation order is fixed, so
// repeated calls are bit-identical.
ParamSet backward(const Tensor& loss, const ParamSet& params,
                  GradMode mode = GradMode::value);

std::vector<Tensor> backward_tensors(const Tensor& loss,
                                     std::span<const Tensor> wrt,
                                     GradMode mode = GradMode::value);

// One sweep, several parameter sets (e.g. extractor + classifier).
std::vector<ParamSet> backward_multi(const Tensor& loss,
                                     std::span<const ParamSet* const> param_sets,
                                     GradMode mode = GradMode::value);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `f` must be deterministic and is called both with tracked and untracked
// parameters.
double grad_check(const std::function<Tensor(const ParamSet&)>& f,
                  const ParamSet& params, double h = 1e-5);

}  // namespace metadapt
