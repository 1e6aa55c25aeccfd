#include "metadapt/meta.hpp"

#include <cmath>
#include <stdexcept>

#include "metadapt/autodiff.hpp"
#include "metadapt/ops.hpp"
#include "metadapt/rng.hpp"

namespace metadapt {

namespace {
constexpr std::int64_t kExactModeParamCap = 10000;
}

void MetaConfig::validate() const {
  if (inner_lr < 0.0) throw std::invalid_argument("MetaConfig: inner_lr must be >= 0");
  if (outer_lr < 0.0) throw std::invalid_argument("MetaConfig: outer_lr must be >= 0");
  if (inner_steps < 1) throw std::invalid_argument("MetaConfig: inner_steps must be >= 1");
  if (meta_batch_size < 1) throw std::invalid_argument("MetaConfig: meta_batch_size must be >= 1");
  if (iters_per_epoch < 1) throw std::invalid_argument("MetaConfig: iters_per_epoch must be >= 1");
  if (lr_decay_every_epochs < 1) {
    throw std::invalid_argument("MetaConfig: lr_decay_every_epochs must be >= 1");
  }
}

ParamSet inner_adapt(const ParamSet& theta, const EpisodeBatch& support, const TaskLoss& loss,
                     const MetaConfig& cfg) {
  cfg.validate();
  ParamSet current = theta.detached();
  for (int step = 0; step < cfg.inner_steps; ++step) {
    Tape tape;
    ParamSet tracked = attach(tape, current);
    Tensor l = loss(tracked, support);
    if (!std::isfinite(l.value())) {
      throw std::runtime_error("inner_adapt: non-finite loss at step " + std::to_string(step));
    }
    ParamSet grads = backward(l, tracked);
    current = sgd_step(current, grads, cfg.inner_lr);
  }
  return current;
}

namespace {

// adapted parameters as tracked expressions of theta (for the exact mode)
ParamSet inner_adapt_tracked(const ParamSet& theta_tracked, const EpisodeBatch& support,
                             const TaskLoss& loss, const MetaConfig& cfg) {
  ParamSet current = theta_tracked;
  for (int step = 0; step < cfg.inner_steps; ++step) {
    Tensor l = loss(current, support);
    if (!std::isfinite(l.value())) {
      throw std::runtime_error("inner_adapt: non-finite loss at step " + std::to_string(step));
    }
    ParamSet grads = backward(l, current, GradMode::graph);
    ParamSet next;
    for (const auto& [name, p] : current) {
      next.insert(name, sub(p, scale(grads.at(name), cfg.inner_lr)));
    }
    current = std::move(next);
  }
  return current;
}

void accumulate(ParamSet& into, const ParamSet& grads) {
  if (into.empty()) {
    into = grads.detached();
    return;
  }
  for (auto& [name, t] : into.entries()) {
    std::vector<double> d(t.data());
    const auto& g = grads.at(name).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    t = Tensor::from_data_unchecked({t.rows(), t.cols()}, std::move(d));
  }
}

void scale_params(ParamSet& ps, double c) {
  for (auto& [name, t] : ps.entries()) {
    std::vector<double> d(t.data());
    for (auto& v : d) v *= c;
    t = Tensor::from_data_unchecked({t.rows(), t.cols()}, std::move(d));
  }
}

}  // namespace

MetaStepResult meta_step(const ParamSet& theta, std::span<const Episode> episodes,
                         const TaskLoss& loss, const MetaConfig& cfg, AdamState* adam,
                         double lr) {
  cfg.validate();
  if (episodes.empty()) throw std::invalid_argument("meta_step: need at least one episode");

  const double inv_n = 1.0 / static_cast<double>(episodes.size());
  double meta_loss = 0.0;
  ParamSet grad_sum;

  if (cfg.mode == MetaMode::exact) {
    if (theta.total_params() > kExactModeParamCap) {
      throw std::invalid_argument("meta_step: exact mode supports at most " +
                                  std::to_string(kExactModeParamCap) + " parameters");
    }
    Tape tape;
    ParamSet tracked = attach(tape, theta);
    Tensor total;
    for (const Episode& ep : episodes) {
      ParamSet adapted = inner_adapt_tracked(tracked, ep.support, loss, cfg);
      Tensor q = loss(adapted, ep.query);
      total = total.defined() ? add(total, q) : q;
    }
    Tensor mean = scale(total, inv_n);
    meta_loss = mean.value();
    if (!std::isfinite(meta_loss)) throw std::runtime_error("meta_step: non-finite meta-loss");
    grad_sum = backward(mean, tracked);
  } else {
    for (const Episode& ep : episodes) {
      ParamSet adapted = inner_adapt(theta, ep.support, loss, cfg);
      Tape tape;
      ParamSet tracked = attach(tape, adapted);
      Tensor q = loss(tracked, ep.query);
      meta_loss += q.value();
      accumulate(grad_sum, backward(q, tracked));
    }
    meta_loss *= inv_n;
    if (!std::isfinite(meta_loss)) throw std::runtime_error("meta_step: non-finite meta-loss");
    scale_params(grad_sum, inv_n);
  }

  MetaStepResult out;
  out.meta_loss = meta_loss;
  if (lr == 0.0) {
    out.theta = theta.detached();
  } else if (cfg.optimizer == MetaOptimizer::adam) {
    if (adam == nullptr) throw std::invalid_argument("meta_step: adam optimizer needs state");
    out.theta = adam->step(theta, grad_sum, lr);
  } else {
    out.theta = sgd_step(theta, grad_sum, lr);
  }
  return out;
}

Episode TaskSampler::sample() {
  const std::uint64_t ep_seed = Rng::derive(seed_, static_cast<std::uint64_t>(index_));
  ++index_;
  Episode ep = gen_(ep_seed);
  ep.task_id = index_ - 1;
  return ep;
}

std::vector<Episode> TaskSampler::sample_batch(int n) {
  std::vector<Episode> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(sample());
  return out;
}

ParamSet meta_train(const ParamSet& theta, TaskSampler& sampler, const TaskLoss& loss,
                    const MetaConfig& cfg, int iterations, MetaTrace* trace,
                    const std::function<void(int, double)>& on_iter) {
  cfg.validate();
  if (iterations < 1) throw std::invalid_argument("meta_train: iterations must be >= 1");

  ParamSet current = theta.detached();
  AdamState adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  for (int it = 0; it < iterations; ++it) {
    const int epoch = it / cfg.iters_per_epoch;
    const int decays = epoch / cfg.lr_decay_every_epochs;
    const double lr = cfg.outer_lr * std::pow(cfg.lr_decay, static_cast<double>(decays));
    std::vector<Episode> episodes = sampler.sample_batch(cfg.meta_batch_size);
    MetaStepResult step = meta_step(current, episodes, loss, cfg, &adam, lr);
    current = std::move(step.theta);
    if (trace != nullptr) trace->meta_loss.push_back(step.meta_loss);
    if (on_iter) on_iter(it, step.meta_loss);
  }
  return current;
}

}  // namespace metadapt
