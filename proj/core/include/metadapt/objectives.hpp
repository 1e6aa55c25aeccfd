#pragma once

#include <map>
#include <string>

#include "metadapt/tensor.hpp"

namespace metadapt {

// Scalar training objective plus untracked component values for logging.
struct LossValue {
  Tensor value;  // tracked scalar when inputs are tracked
  std::map<std::string, double> components;

  double scalar() const { return value.value(); }
};

// mean over the batch of -log p(correct class); probabilities clamped >= 1e-12
LossValue cross_entropy(const Tensor& probs, const Tensor& onehot_labels);

// L_D = -mean(log d_src) - mean(log(1 - d_tgt)); minimized by the discriminator
LossValue discriminator_loss(const Tensor& d_src, const Tensor& d_tgt);

// L_F = mean(log d_src) + mean(log(1 - d_tgt)); equals -L_D on the same
// inputs and is minimized by the feature extractor
LossValue adversarial_feature_loss(const Tensor& d_src, const Tensor& d_tgt);

// L_total = L_C + lambda * L_F
LossValue total_loss(const LossValue& l_c, const LossValue& l_f, double lambda);

// mean over the batch of ||x - x_hat||^2
LossValue reconstruction_loss(const Tensor& x, const Tensor& x_hat);

// L_embedding = L_reconstruction + lambda_e * L_task
LossValue embedding_loss(const LossValue& l_rec, const LossValue& l_task, double lambda_e);

}  // namespace metadapt
