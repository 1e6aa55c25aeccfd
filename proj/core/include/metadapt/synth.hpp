#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metadapt/meta.hpp"
#include "metadapt/tensor.hpp"

namespace metadapt {

// Controlled distribution shift: x -> scale * R(rotation) * x + translation,
// then additive Gaussian noise. Rotation acts in the first two coordinates.
struct DomainSpec {
  double rotation = 0.0;
  std::vector<double> translation;  // empty means zero
  double scale = 1.0;
  double noise = 0.0;  // sigma of additive Gaussian after the transform

  void validate(int input_dim) const;
};

enum class TaskFamily { gaussian_blobs, two_arcs };

struct TaskFamilySpec {
  TaskFamily family = TaskFamily::gaussian_blobs;
  int num_classes = 2;
  int input_dim = 2;
  double mean_radius = 2.0;  // class-geometry scale
  double class_std = 1.0;    // within-class spread
  double label_flip = 0.0;   // rho, probability of flipping to another class

  void validate() const;
};

enum class Split { train, val, test };

std::string split_name(Split s);

struct LabeledSet {
  Tensor inputs;  // n x d
  Tensor labels;  // n x K one-hot
  std::string domain_id;
  Split split = Split::train;

  int n() const { return inputs.rows(); }
  int dim() const { return inputs.cols(); }
  int num_classes() const { return labels.cols(); }
  std::vector<int> label_indices() const;
};

LabeledSet generate_domain(const TaskFamilySpec& family, const DomainSpec& dom, int n,
                           std::uint64_t seed, const std::string& domain_id = "domain");

struct BayesEstimate {
  double accuracy = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo estimate of the Bayes-optimal accuracy under the generative
// model, before label flips. gaussian_blobs uses the closed-form posterior
// (nearest transformed mean under isotropic covariance); two_arcs falls back
// to a nearest-manifold approximation.
BayesEstimate bayes_accuracy(const TaskFamilySpec& family, const DomainSpec& dom, int n_mc,
                             std::uint64_t seed = 0);

struct SplitSets {
  LabeledSet train, val, test;
};

// seed-deterministic shuffled partition; rounding remainder goes to train
SplitSets split(const LabeledSet& set, double f_train, double f_val, double f_test,
                std::uint64_t seed);

// Fresh task instance (random rotation of the family geometry) with disjoint
// support and query draws.
Episode sample_episode(const TaskFamilySpec& family, std::uint64_t seed, int n_support,
                       int n_query);

// episode stream over the family, deterministic in the sampler seed
TaskSampler make_task_sampler(const TaskFamilySpec& family, int n_support, int n_query,
                              std::uint64_t seed);

// additive Gaussian on inputs, independent label flips to a uniformly random
// other class
LabeledSet inject_noise(const LabeledSet& set, double sigma_x, double rho_y, std::uint64_t seed);

// per-column z-scoring, fit on the training split only
struct Standardizer {
  std::vector<double> mean, stddev;
  bool fitted = false;

  void fit(const Tensor& x);
  Tensor apply(const Tensor& x) const;
  LabeledSet apply(const LabeledSet& set) const;
};

}  // namespace metadapt
