#include "metadapt/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "metadapt/ops.hpp"

namespace metadapt {

namespace {

void check_probability_rows(const Tensor& probs) {
  for (int r = 0; r < probs.rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < probs.cols(); ++c) s += probs.at(r, c);
    if (std::abs(s - 1.0) > 1e-6) {
      throw std::invalid_argument("cross_entropy: probability row " + std::to_string(r) +
                                  " sums to " + std::to_string(s));
    }
  }
}

void check_one_hot(const Tensor& labels) {
  for (int r = 0; r < labels.rows(); ++r) {
    int ones = 0;
    for (int c = 0; c < labels.cols(); ++c) {
      const double v = labels.at(r, c);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        throw std::invalid_argument("cross_entropy: label row " + std::to_string(r) +
                                    " is not one-hot");
      }
    }
    if (ones != 1) {
      throw std::invalid_argument("cross_entropy: label row " + std::to_string(r) +
                                  " is not one-hot");
    }
  }
}

}  // namespace

LossValue cross_entropy(const Tensor& probs, const Tensor& onehot_labels) {
  if (!probs.same_extent(onehot_labels)) throw_shape_error("cross_entropy", probs, onehot_labels);
  check_probability_rows(probs);
  check_one_hot(onehot_labels);
  const double m = static_cast<double>(probs.rows());
  // labels mask out everything but the correct-class probability
  Tensor picked = mul(onehot_labels, log(clamp_min(probs, 1e-12)));
  Tensor loss = scale(neg(sum(picked)), 1.0 / m);
  return {loss, {{"L_C", loss.value()}}};
}

LossValue discriminator_loss(const Tensor& d_src, const Tensor& d_tgt) {
  Tensor mean_src = mean_all(log(clamp_min(d_src, 1e-12)));
  Tensor mean_tgt = mean_all(log(clamp_min(add_scalar(neg(d_tgt), 1.0), 1e-12)));
  Tensor loss = add(neg(mean_src), neg(mean_tgt));
  return {loss, {{"L_D", loss.value()}}};
}

LossValue adversarial_feature_loss(const Tensor& d_src, const Tensor& d_tgt) {
  Tensor mean_src = mean_all(log(clamp_min(d_src, 1e-12)));
  Tensor mean_tgt = mean_all(log(clamp_min(add_scalar(neg(d_tgt), 1.0), 1e-12)));
  Tensor loss = add(mean_src, mean_tgt);
  return {loss, {{"L_F", loss.value()}}};
}

LossValue total_loss(const LossValue& l_c, const LossValue& l_f, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be non-negative");
  Tensor loss = add(l_c.value, scale(l_f.value, lambda));
  LossValue out{loss, l_c.components};
  for (const auto& [k, v] : l_f.components) out.components[k] = v;
  out.components["L_total"] = loss.value();
  return out;
}

LossValue reconstruction_loss(const Tensor& x, const Tensor& x_hat) {
  if (!x.same_extent(x_hat)) throw_shape_error("reconstruction_loss", x, x_hat);
  Tensor diff = sub(x, x_hat);
  Tensor loss = scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(x.rows()));
  return {loss, {{"L_reconstruction", loss.value()}}};
}

LossValue embedding_loss(const LossValue& l_rec, const LossValue& l_task, double lambda_e) {
  if (lambda_e < 0.0) throw std::invalid_argument("embedding_loss: lambda_e must be non-negative");
  Tensor loss = add(l_rec.value, scale(l_task.value, lambda_e));
  LossValue out{loss, l_rec.components};
  for (const auto& [k, v] : l_task.components) out.components[k] = v;
  out.components["L_embedding"] = loss.value();
  return out;
}

}  // namespace metadapt
