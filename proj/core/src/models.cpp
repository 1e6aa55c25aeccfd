#include "metadapt/models.hpp"

#include <cmath>
#include <stdexcept>

#include "metadapt/ops.hpp"
#include "metadapt/rng.hpp"

namespace metadapt {

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw std::invalid_argument("MlpSpec: need at least input and output widths");
  }
  for (int w : layer_widths) {
    if (w <= 0) throw std::invalid_argument("MlpSpec: widths must be positive");
  }
}

ParamSet init_params(const MlpSpec& spec, std::uint64_t seed, std::string_view prefix) {
  spec.validate();
  Rng rng(seed);
  ParamSet params;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int fan_in = spec.layer_widths[static_cast<std::size_t>(l)];
    const int fan_out = spec.layer_widths[static_cast<std::size_t>(l) + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
    for (auto& v : w) v = rng.uniform(-limit, limit);
    params.insert(std::string(prefix) + "w" + std::to_string(l),
                  Tensor::from_data_unchecked({fan_in, fan_out}, std::move(w)));
    params.insert(std::string(prefix) + "b" + std::to_string(l), Tensor::zeros({1, fan_out}));
  }
  return params;
}

Tensor mlp_forward(const MlpSpec& spec, const ParamSet& params, const Tensor& x,
                   std::string_view prefix) {
  spec.validate();
  if (x.cols() != spec.input_width()) {
    throw std::invalid_argument("mlp_forward: input width " + std::to_string(x.cols()) +
                                " does not match spec width " + std::to_string(spec.input_width()));
  }
  Tensor h = x;
  const std::string p(prefix);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const Tensor& w = params.at(p + "w" + std::to_string(l));
    const Tensor& b = params.at(p + "b" + std::to_string(l));
    h = add(matmul(h, w), b);
    if (l + 1 < spec.num_layers()) h = relu(h);
  }
  switch (spec.head) {
    case OutputHead::linear: return h;
    case OutputHead::softmax: return softmax_rows(h);
    case OutputHead::sigmoid: return sigmoid(h);
  }
  return h;
}

Tensor forward_extractor(const MlpSpec& spec, const ParamSet& params, const Tensor& x,
                         std::string_view prefix) {
  MlpSpec s = spec;
  s.head = OutputHead::linear;
  return mlp_forward(s, params, x, prefix);
}

Tensor forward_classifier(const MlpSpec& spec, const ParamSet& params, const Tensor& h,
                          std::string_view prefix) {
  if (spec.output_width() < 2) {
    throw std::invalid_argument("forward_classifier: need at least 2 classes");
  }
  MlpSpec s = spec;
  s.head = OutputHead::softmax;
  return mlp_forward(s, params, h, prefix);
}

Tensor forward_discriminator(const MlpSpec& spec, const ParamSet& params, const Tensor& h,
                             std::string_view prefix) {
  MlpSpec s = spec;
  s.head = OutputHead::sigmoid;
  Tensor d = mlp_forward(s, params, h, prefix);
  return clamp(d, 1e-12, 1.0 - 1e-12);
}

std::vector<int> argmax_rows(const Tensor& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (int r = 0; r < probs.rows(); ++r) {
    int best = 0;
    double bv = probs.at(r, 0);
    for (int c = 1; c < probs.cols(); ++c) {
      if (probs.at(r, c) > bv) {
        bv = probs.at(r, c);
        best = c;
      }
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

}  // namespace metadapt
