#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "metadapt/optim.hpp"
#include "metadapt/tensor.hpp"

namespace metadapt {

struct EpisodeBatch {
  Tensor x;  // batch x dim
  Tensor y;  // batch x K, one-hot
};

// one sampled task: support for inner adaptation, query for scoring
struct Episode {
  EpisodeBatch support, query;
  std::string domain_id;
  std::int64_t task_id = 0;
};

// scalar task loss at the given parameters; must work for both tracked and
// untracked parameter sets
using TaskLoss = std::function<Tensor(const ParamSet&, const EpisodeBatch&)>;

enum class MetaMode { first_order, exact };
enum class MetaOptimizer { sgd, adam };

struct MetaConfig {
  double inner_lr = 0.01;
  double outer_lr = 0.001;
  int inner_steps = 1;
  int meta_batch_size = 4;
  MetaMode mode = MetaMode::first_order;
  MetaOptimizer optimizer = MetaOptimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // outer lr is multiplied by lr_decay every lr_decay_every_epochs epochs,
  // one epoch being iters_per_epoch meta iterations
  int iters_per_epoch = 100;
  double lr_decay = 0.1;
  int lr_decay_every_epochs = 10;

  void validate() const;
};

// k plain gradient steps on the support loss; the input parameters are
// untouched (functional update)
ParamSet inner_adapt(const ParamSet& theta, const EpisodeBatch& support, const TaskLoss& loss,
                     const MetaConfig& cfg);

struct MetaStepResult {
  ParamSet theta;
  double meta_loss = 0.0;  // mean query loss at the adapted parameters
};

// One outer update over a batch of episodes. first_order treats the adapted
// parameters as leaves; exact differentiates through the inner steps
// (parameter count capped at 10,000 in that mode).
MetaStepResult meta_step(const ParamSet& theta, std::span<const Episode> episodes,
                         const TaskLoss& loss, const MetaConfig& cfg, AdamState* adam,
                         double lr);

// deterministic episode stream: the generator is called with a per-episode
// sub-seed derived from (seed, call index)
class TaskSampler {
 public:
  using Generator = std::function<Episode(std::uint64_t episode_seed)>;

  TaskSampler(Generator gen, std::uint64_t seed) : gen_(std::move(gen)), seed_(seed) {}

  Episode sample();
  std::vector<Episode> sample_batch(int n);

  std::uint64_t seed() const { return seed_; }
  std::int64_t index() const { return index_; }

 private:
  Generator gen_;
  std::uint64_t seed_;
  std::int64_t index_ = 0;
};

struct MetaTrace {
  std::vector<double> meta_loss;  // per iteration
};

// repeated meta_step over freshly sampled episode batches; on_iter (when
// set) receives (iteration, meta_loss) after each step
ParamSet meta_train(const ParamSet& theta, TaskSampler& sampler, const TaskLoss& loss,
                    const MetaConfig& cfg, int iterations, MetaTrace* trace = nullptr,
                    const std::function<void(int, double)>& on_iter = {});

}  // namespace metadapt
