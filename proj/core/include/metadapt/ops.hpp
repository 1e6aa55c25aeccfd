#pragma once

#include "metadapt/tensor.hpp"

namespace metadapt {

// Tensor arithmetic. Binary elementwise kinds accept equal extents, a 1xN
// row against an MxN matrix, or a 1x1 scalar against anything; richer
// broadcasting is a shape error. Every function records on the tape when at
// least one argument is tracked, and the recorded backward rules are
// themselves built from these operations, so gradients can be differentiated
// again.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // errors on non-positive entries
Tensor neg(const Tensor& x);
Tensor sqrt(const Tensor& x);

// clamp into [lo, hi]; gradient is zero where the clamp is active
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor clamp_min(const Tensor& x, double lo);

Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

Tensor sum(const Tensor& x);       // 1x1
Tensor sum_rows(const Tensor& x);  // column sums: m x n -> 1 x n
Tensor mean_all(const Tensor& x);  // 1x1
Tensor mean_rows(const Tensor& x); // column means: m x n -> 1 x n

// rowwise softmax with per-row max subtraction
Tensor softmax_rows(const Tensor& x);

Tensor transpose(const Tensor& x);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, int begin, int end);

// dispatcher mirroring the elementwise kind set
enum class EwKind { add, sub, mul, relu, sigmoid, exp, log, neg };
Tensor elementwise(EwKind kind, const Tensor& a);
Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b);

}  // namespace metadapt
