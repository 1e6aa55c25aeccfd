#include "metadapt/autodiff.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "metadapt/ops.hpp"

namespace metadapt {

namespace {

// adjoint reduced back to the extent of the broadcast operand
Tensor reduce_to(const Tensor& adj, const Tensor& like) {
  if (adj.rows() == like.rows() && adj.cols() == like.cols()) return adj;
  if (like.rows() == 1 && like.cols() == 1) return sum(adj);
  if (like.rows() == 1 && like.cols() == adj.cols()) return sum_rows(adj);
  throw std::logic_error("reduce_to: unexpected adjoint extents");
}

Tensor binary_mask(const Tensor& x, double lo, double hi) {
  std::vector<double> m(x.data().size());
  const auto& d = x.data();
  for (std::size_t i = 0; i < d.size(); ++i) m[i] = (d[i] > lo && d[i] < hi) ? 1.0 : 0.0;
  return Tensor::from_data_unchecked({x.rows(), x.cols()}, std::move(m));
}

struct Rule {
  // adjoint contributions aligned with node inputs; an undefined Tensor
  // means "no contribution" (input untracked)
  Tensor a, b;
};

// Backward rules are written with the public ops. When `saved` tensors are
// tracked (graph mode) the rule itself lands on the tape, which is what
// makes gradients differentiable a second time.
Rule backward_rule(const TapeNode& node, const Tensor& adj, GradMode mode) {
  auto sv = [&](int i) {
    const Tensor& t = node.saved[static_cast<std::size_t>(i)];
    return mode == GradMode::graph ? t : t.detached();
  };
  const bool need_a = node.inputs[0] >= 0;
  const bool need_b = node.n_inputs > 1 && node.inputs[1] >= 0;

  switch (node.kind) {
    case OpKind::leaf:
      return {};
    case OpKind::add: {
      Rule r;
      if (need_a) r.a = reduce_to(adj, sv(0));
      if (need_b) r.b = reduce_to(adj, sv(1));
      return r;
    }
    case OpKind::sub: {
      Rule r;
      if (need_a) r.a = reduce_to(adj, sv(0));
      if (need_b) r.b = reduce_to(neg(adj), sv(1));
      return r;
    }
    case OpKind::mul: {
      Rule r;
      if (need_a) r.a = reduce_to(mul(adj, sv(1)), sv(0));
      if (need_b) r.b = reduce_to(mul(adj, sv(0)), sv(1));
      return r;
    }
    case OpKind::div: {
      Rule r;
      Tensor a = sv(0), b = sv(1);
      if (need_a) r.a = reduce_to(div(adj, b), a);
      if (need_b) r.b = reduce_to(neg(mul(adj, div(a, mul(b, b)))), b);
      return r;
    }
    case OpKind::matmul: {
      Rule r;
      if (need_a) r.a = matmul(adj, transpose(sv(1)));
      if (need_b) r.b = matmul(transpose(sv(0)), adj);
      return r;
    }
    case OpKind::relu: {
      Rule r;
      if (need_a) {
        r.a = mul(adj, binary_mask(node.saved[0], 0.0, std::numeric_limits<double>::infinity()));
      }
      return r;
    }
    case OpKind::sigmoid: {
      Rule r;
      if (need_a) {
        Tensor y = sv(1);  // saved output
        r.a = mul(adj, mul(y, add_scalar(neg(y), 1.0)));
      }
      return r;
    }
    case OpKind::exp: {
      Rule r;
      if (need_a) r.a = mul(adj, sv(1));
      return r;
    }
    case OpKind::log: {
      Rule r;
      if (need_a) r.a = div(adj, sv(0));
      return r;
    }
    case OpKind::neg: {
      Rule r;
      if (need_a) r.a = neg(adj);
      return r;
    }
    case OpKind::sqrt: {
      Rule r;
      if (need_a) r.a = scale(div(adj, sv(1)), 0.5);
      return r;
    }
    case OpKind::clamp: {
      Rule r;
      if (need_a) r.a = mul(adj, binary_mask(node.saved[0], node.c0, node.c1));
      return r;
    }
    case OpKind::scale: {
      Rule r;
      if (need_a) r.a = scale(adj, node.c0);
      return r;
    }
    case OpKind::add_scalar: {
      Rule r;
      if (need_a) r.a = adj;
      return r;
    }
    case OpKind::sum: {
      Rule r;
      if (need_a) {
        const Tensor& x = node.saved[0];
        r.a = mul(Tensor::full({x.rows(), x.cols()}, 1.0), adj);
      }
      return r;
    }
    case OpKind::sum_rows: {
      Rule r;
      if (need_a) {
        const Tensor& x = node.saved[0];
        r.a = mul(Tensor::full({x.rows(), x.cols()}, 1.0), adj);
      }
      return r;
    }
    case OpKind::softmax_rows: {
      Rule r;
      if (need_a) {
        Tensor y = sv(1);
        const int n = y.cols();
        // row sums of adj*y, replicated across columns via a ones matrix
        Tensor rowsum = matmul(mul(adj, y), Tensor::full({n, n}, 1.0));
        r.a = mul(y, sub(adj, rowsum));
      }
      return r;
    }
    case OpKind::transpose: {
      Rule r;
      if (need_a) r.a = transpose(adj);
      return r;
    }
    case OpKind::concat_cols: {
      Rule r;
      const int p = node.saved[0].cols();
      const int q = node.saved[1].cols();
      if (need_a) r.a = slice_cols(adj, 0, p);
      if (need_b) r.b = slice_cols(adj, p, p + q);
      return r;
    }
    case OpKind::slice_cols: {
      Rule r;
      if (need_a) {
        const Tensor& x = node.saved[0];
        const int m = x.rows(), n = x.cols();
        const int begin = static_cast<int>(node.c0), end = static_cast<int>(node.c1);
        Tensor grad = adj;
        if (begin > 0) grad = concat_cols(Tensor::zeros({m, begin}), grad);
        if (end < n) grad = concat_cols(grad, Tensor::zeros({m, n - end}));
        r.a = grad;
      }
      return r;
    }
  }
  throw std::logic_error("backward_rule: unhandled op kind");
}

}  // namespace

std::vector<Tensor> backward_tensors(const Tensor& loss, std::span<const Tensor> wrt,
                                     GradMode mode) {
  if (!loss.tracked()) throw std::invalid_argument("backward: loss is not on a tape");
  if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  Tape& tape = *loss.tape();
  for (const Tensor& w : wrt) {
    if (w.tracked() && w.tape() != &tape) {
      throw std::invalid_argument("backward: target tensor lives on a different tape");
    }
  }

  const int top = loss.node();
  std::vector<std::optional<Tensor>> adj(static_cast<std::size_t>(top) + 1);
  adj[static_cast<std::size_t>(top)] = Tensor::scalar(1.0);

  for (int i = top; i >= 0; --i) {
    if (!adj[static_cast<std::size_t>(i)].has_value()) continue;
    // copy: rule evaluation may append nodes to the tape
    const TapeNode node = tape.at(i);
    if (node.kind == OpKind::leaf) continue;
    Rule rule = backward_rule(node, *adj[static_cast<std::size_t>(i)], mode);
    const Tensor* contribs[2] = {&rule.a, &rule.b};
    for (int k = 0; k < node.n_inputs; ++k) {
      const int in = node.inputs[k];
      if (in < 0 || !contribs[k]->defined()) continue;
      auto& slot = adj[static_cast<std::size_t>(in)];
      slot = slot.has_value() ? add(*slot, *contribs[k]) : *contribs[k];
    }
  }

  std::vector<Tensor> grads;
  grads.reserve(wrt.size());
  for (const Tensor& w : wrt) {
    if (w.tracked() && w.node() <= top && adj[static_cast<std::size_t>(w.node())].has_value()) {
      grads.push_back(*adj[static_cast<std::size_t>(w.node())]);
    } else {
      grads.push_back(Tensor::zeros({w.rows(), w.cols()}));
    }
  }
  return grads;
}

ParamSet backward(const Tensor& loss, const ParamSet& params, GradMode mode) {
  std::vector<Tensor> wrt;
  wrt.reserve(params.size());
  for (const auto& [name, t] : params) wrt.push_back(t);
  std::vector<Tensor> grads = backward_tensors(loss, wrt, mode);
  ParamSet out;
  std::size_t i = 0;
  for (const auto& [name, t] : params) out.insert(name, grads[i++]);
  return out;
}

std::vector<ParamSet> backward_multi(const Tensor& loss,
                                     std::span<const ParamSet* const> param_sets, GradMode mode) {
  std::vector<Tensor> wrt;
  for (const ParamSet* ps : param_sets) {
    for (const auto& [name, t] : *ps) wrt.push_back(t);
  }
  std::vector<Tensor> grads = backward_tensors(loss, wrt, mode);
  std::vector<ParamSet> out;
  std::size_t i = 0;
  for (const ParamSet* ps : param_sets) {
    ParamSet g;
    for (const auto& [name, t] : *ps) g.insert(name, grads[i++]);
    out.push_back(std::move(g));
  }
  return out;
}

double grad_check(const std::function<Tensor(const ParamSet&)>& f, const ParamSet& params,
                  double h) {
  ParamSet analytic;
  {
    Tape tape;
    ParamSet tracked = attach(tape, params);
    Tensor loss = f(tracked);
    analytic = backward(loss, tracked);
  }

  auto eval_at = [&](std::size_t pi, std::size_t ci, double delta) {
    ParamSet shifted;
    std::size_t idx = 0;
    for (const auto& [name, t] : params) {
      if (idx == pi) {
        std::vector<double> d = t.data();
        d[ci] += delta;
        shifted.insert(name, Tensor::from_data_unchecked({t.rows(), t.cols()}, std::move(d)));
      } else {
        shifted.insert(name, t.detached());
      }
      ++idx;
    }
    return f(shifted).value();
  };

  double max_err = 0.0;
  std::size_t pi = 0;
  for (const auto& [name, t] : params) {
    const auto& g = analytic.at(name).data();
    for (std::size_t ci = 0; ci < g.size(); ++ci) {
      const double fd = (eval_at(pi, ci, h) - eval_at(pi, ci, -h)) / (2.0 * h);
      const double err = std::abs(g[ci] - fd) / std::max(1.0, std::abs(g[ci]));
      max_err = std::max(max_err, err);
    }
    ++pi;
  }
  return max_err;
}

}  // namespace metadapt
