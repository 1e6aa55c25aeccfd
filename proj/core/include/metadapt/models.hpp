#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "metadapt/tensor.hpp"

namespace metadapt {

enum class Activation { relu };
enum class OutputHead { linear, softmax, sigmoid };

// Fully connected network description. layer_widths is the complete chain
// including input and output widths, e.g. {2, 32, 32, 16} maps 2 inputs
// through two hidden layers to 16 features. Hidden layers use the
// activation; the last layer applies the output head.
struct MlpSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::relu;
  OutputHead head = OutputHead::linear;

  int input_width() const { return layer_widths.front(); }
  int output_width() const { return layer_widths.back(); }
  int num_layers() const { return static_cast<int>(layer_widths.size()) - 1; }
  void validate() const;
};

// He-style uniform init: w ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero.
// Parameter names are "<prefix>w<i>" / "<prefix>b<i>".
ParamSet init_params(const MlpSpec& spec, std::uint64_t seed, std::string_view prefix = "");

Tensor mlp_forward(const MlpSpec& spec, const ParamSet& params, const Tensor& x,
                   std::string_view prefix = "");

// the three networks of the adversarial setup; thin wrappers fixing the head
Tensor forward_extractor(const MlpSpec& spec, const ParamSet& params, const Tensor& x,
                         std::string_view prefix = "");
// rowwise class probabilities (rows sum to 1)
Tensor forward_classifier(const MlpSpec& spec, const ParamSet& params, const Tensor& h,
                          std::string_view prefix = "");
// sigmoid output clamped into [1e-12, 1 - 1e-12]
Tensor forward_discriminator(const MlpSpec& spec, const ParamSet& params, const Tensor& h,
                             std::string_view prefix = "");

// argmax per row; ties break toward the lowest class index
std::vector<int> argmax_rows(const Tensor& probs);

}  // namespace metadapt
