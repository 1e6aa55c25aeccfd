#include "metadapt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace metadapt {

namespace {

enum class Bcast { full, rowvec, scalar };

struct BinShape {
  int m, n;
  Bcast a, b;
};

bool is_scalar_1x1(const Tensor& t) { return t.rows() == 1 && t.cols() == 1; }

BinShape bin_shape(const char* op, const Tensor& a, const Tensor& b) {
  const int am = a.rows(), an = a.cols(), bm = b.rows(), bn = b.cols();
  if (am == bm && an == bn) return {am, an, Bcast::full, Bcast::full};
  if (is_scalar_1x1(b)) return {am, an, Bcast::full, Bcast::scalar};
  if (is_scalar_1x1(a)) return {bm, bn, Bcast::scalar, Bcast::full};
  if (bm == 1 && bn == an) return {am, an, Bcast::full, Bcast::rowvec};
  if (am == 1 && an == bn) return {bm, bn, Bcast::rowvec, Bcast::full};
  throw_shape_error(op, a, b);
}

double read(const Tensor& t, Bcast mode, int r, int c) {
  switch (mode) {
    case Bcast::full: return t.at(r, c);
    case Bcast::rowvec: return t.at(0, c);
    case Bcast::scalar: return t.at(0, 0);
  }
  return 0.0;
}

Tape* pick_tape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.tracked() && b.tracked() && a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  }
  if (a.tracked()) return a.tape();
  if (b.tracked()) return b.tape();
  return nullptr;
}

Tensor finish_unary(OpKind kind, const Tensor& x, Tensor out, double c0 = 0.0, double c1 = 0.0,
                    bool save_output = false) {
  if (!x.tracked()) return out;
  TapeNode node;
  node.kind = kind;
  node.inputs[0] = x.node();
  node.n_inputs = 1;
  node.saved.push_back(x);
  node.c0 = c0;
  node.c1 = c1;
  Tape& tape = *x.tape();
  int id = tape.record(std::move(node));
  Tensor tracked = tracked_view(tape, id, out);
  if (save_output) tape.at_mutable(id).saved.push_back(tracked);
  return tracked;
}

Tensor finish_binary(OpKind kind, const Tensor& a, const Tensor& b, Tensor out) {
  Tape* tape = pick_tape(op_name(kind), a, b);
  if (tape == nullptr) return out;
  TapeNode node;
  node.kind = kind;
  node.inputs[0] = a.tracked() ? a.node() : -1;
  node.inputs[1] = b.tracked() ? b.node() : -1;
  node.n_inputs = 2;
  node.saved.push_back(a);
  node.saved.push_back(b);
  int id = tape->record(std::move(node));
  return tracked_view(*tape, id, out);
}

template <typename F>
Tensor binary_pointwise(OpKind kind, const Tensor& a, const Tensor& b, F f) {
  BinShape s = bin_shape(op_name(kind), a, b);
  std::vector<double> out(static_cast<std::size_t>(s.m) * s.n);
  std::size_t idx = 0;
  for (int r = 0; r < s.m; ++r) {
    for (int c = 0; c < s.n; ++c) {
      out[idx++] = f(read(a, s.a, r, c), read(b, s.b, r, c));
    }
  }
  return finish_binary(kind, a, b, Tensor::from_data_unchecked({s.m, s.n}, std::move(out)));
}

template <typename F>
Tensor unary_pointwise(OpKind kind, const Tensor& x, F f, double c0 = 0.0, double c1 = 0.0,
                       bool save_output = false) {
  const auto& in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return finish_unary(kind, x, Tensor::from_data_unchecked({x.rows(), x.cols()}, std::move(out)),
                      c0, c1, save_output);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_pointwise(OpKind::add, a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_pointwise(OpKind::sub, a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_pointwise(OpKind::mul, a, b, [](double x, double y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_pointwise(OpKind::div, a, b, [](double x, double y) { return x / y; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw_shape_error("matmul", a, b);
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = ad[static_cast<std::size_t>(i) * k + p];
      if (av == 0.0) continue;
      const std::size_t arow = static_cast<std::size_t>(i) * n;
      const std::size_t brow = static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) out[arow + j] += av * bd[brow + j];
    }
  }
  return finish_binary(OpKind::matmul, a, b, Tensor::from_data_unchecked({m, n}, std::move(out)));
}

Tensor relu(const Tensor& x) {
  return unary_pointwise(OpKind::relu, x, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  auto f = [](double v) {
    if (v >= 0.0) {
      const double e = std::exp(-v);
      return 1.0 / (1.0 + e);
    }
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return unary_pointwise(OpKind::sigmoid, x, f, 0.0, 0.0, /*save_output=*/true);
}

Tensor exp(const Tensor& x) {
  return unary_pointwise(OpKind::exp, x, [](double v) { return std::exp(v); }, 0.0, 0.0,
                         /*save_output=*/true);
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (v <= 0.0) throw std::domain_error("log: non-positive input " + std::to_string(v));
  }
  return unary_pointwise(OpKind::log, x, [](double v) { return std::log(v); });
}

Tensor neg(const Tensor& x) {
  return unary_pointwise(OpKind::neg, x, [](double v) { return -v; });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.data()) {
    if (v < 0.0) throw std::domain_error("sqrt: negative input " + std::to_string(v));
  }
  return unary_pointwise(OpKind::sqrt, x, [](double v) { return std::sqrt(v); }, 0.0, 0.0,
                         /*save_output=*/true);
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must be <= hi");
  return unary_pointwise(OpKind::clamp, x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
                         lo, hi);
}

Tensor clamp_min(const Tensor& x, double lo) {
  return clamp(x, lo, std::numeric_limits<double>::infinity());
}

Tensor scale(const Tensor& x, double c) {
  return unary_pointwise(OpKind::scale, x, [c](double v) { return v * c; }, c);
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_pointwise(OpKind::add_scalar, x, [c](double v) { return v + c; }, c);
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return finish_unary(OpKind::sum, x, Tensor::from_data_unchecked({1, 1}, {s}));
}

Tensor sum_rows(const Tensor& x) {
  const int m = x.rows(), n = x.cols();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) out[static_cast<std::size_t>(c)] += x.at(r, c);
  }
  return finish_unary(OpKind::sum_rows, x, Tensor::from_data_unchecked({1, n}, std::move(out)));
}

Tensor mean_all(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_rows(const Tensor& x) { return scale(sum_rows(x), 1.0 / static_cast<double>(x.rows())); }

Tensor softmax_rows(const Tensor& x) {
  const int m = x.rows(), n = x.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  for (int r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < n; ++c) mx = std::max(mx, x.at(r, c));
    double denom = 0.0;
    for (int c = 0; c < n; ++c) {
      const double e = std::exp(x.at(r, c) - mx);
      out[static_cast<std::size_t>(r) * n + c] = e;
      denom += e;
    }
    for (int c = 0; c < n; ++c) out[static_cast<std::size_t>(r) * n + c] /= denom;
  }
  return finish_unary(OpKind::softmax_rows, x,
                      Tensor::from_data_unchecked({m, n}, std::move(out)), 0.0, 0.0,
                      /*save_output=*/true);
}

Tensor transpose(const Tensor& x) {
  const int m = x.rows(), n = x.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) out[static_cast<std::size_t>(c) * m + r] = x.at(r, c);
  }
  return finish_unary(OpKind::transpose, x, Tensor::from_data_unchecked({n, m}, std::move(out)));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw_shape_error("concat_cols", a, b);
  const int m = a.rows(), p = a.cols(), q = b.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * (p + q));
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < p; ++c) out[static_cast<std::size_t>(r) * (p + q) + c] = a.at(r, c);
    for (int c = 0; c < q; ++c) out[static_cast<std::size_t>(r) * (p + q) + p + c] = b.at(r, c);
  }
  return finish_binary(OpKind::concat_cols, a, b,
                       Tensor::from_data_unchecked({m, p + q}, std::move(out)));
}

Tensor slice_cols(const Tensor& x, int begin, int end) {
  const int m = x.rows(), n = x.cols();
  if (begin < 0 || end > n || begin >= end) {
    throw std::invalid_argument("slice_cols: invalid range [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") for width " + std::to_string(n));
  }
  const int w = end - begin;
  std::vector<double> out(static_cast<std::size_t>(m) * w);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < w; ++c) out[static_cast<std::size_t>(r) * w + c] = x.at(r, begin + c);
  }
  return finish_unary(OpKind::slice_cols, x, Tensor::from_data_unchecked({m, w}, std::move(out)),
                      static_cast<double>(begin), static_cast<double>(end));
}

Tensor elementwise(EwKind kind, const Tensor& a) {
  switch (kind) {
    case EwKind::relu: return relu(a);
    case EwKind::sigmoid: return sigmoid(a);
    case EwKind::exp: return exp(a);
    case EwKind::log: return log(a);
    case EwKind::neg: return neg(a);
    default: throw std::invalid_argument("elementwise: kind requires two arguments");
  }
}

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
  switch (kind) {
    case EwKind::add: return add(a, b);
    case EwKind::sub: return sub(a, b);
    case EwKind::mul: return mul(a, b);
    default: throw std::invalid_argument("elementwise: kind takes one argument");
  }
}

}  // namespace metadapt
