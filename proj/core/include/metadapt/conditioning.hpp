#pragma once

#include <map>
#include <string>

#include "metadapt/models.hpp"
#include "metadapt/tensor.hpp"

namespace metadapt {

enum class BnMode { train, eval };

// Running normalization statistics for one (layer, domain) pair.
struct BnRunning {
  std::vector<double> mean, var;
  bool init = false;
};

// keyed "<layer>/<domain>"
using StatsTable = std::map<std::string, BnRunning>;

// Batch normalization whose statistics are tracked per domain. Train mode
// normalizes with the current batch moments (gradients flow through them)
// and folds the moments into the running slot; eval mode normalizes with
// the stored per-domain statistics.
struct AdaBnState {
  Tensor gamma, beta;      // 1 x n learned affine
  BnRunning* running = nullptr;
  double epsilon = 1e-5;
  double momentum = 0.1;
};

Tensor ada_bn(const Tensor& x, const AdaBnState& st, BnMode mode);

// As ada_bn, but the affine parameters are functions of the domain
// embedding: gamma(e) = e @ wg + bg, beta(e) = e @ wb + bb.
struct CondBnMaps {
  Tensor wg, bg, wb, bb;  // wg/wb: d_e x n, bg/bb: 1 x n
};

Tensor cond_bn(const Tensor& x, const CondBnMaps& maps, const Tensor& e_row, BnRunning* running,
               BnMode mode, double epsilon = 1e-5, double momentum = 0.1);

// scalar gate sigmoid(e . w_g) in (0, 1)
Tensor gate_value(const Tensor& w_g_col, const Tensor& e_row);

// h = f_out + sigmoid(e . w_g) * g_out
Tensor gated_domain_forward(const Tensor& f_out, const Tensor& g_out, const Tensor& w_g_col,
                            const Tensor& e_row);

// h' = A (.) h with A = softmax over output coordinates of [h; e] @ w,
// w: (n + d_e) x n. Per-row weights sum to 1.
Tensor contextual_attention(const Tensor& h, const Tensor& e_row, const Tensor& w);

// replicate a 1 x d row across m rows (differentiable)
Tensor tile_rows(const Tensor& row, int m);

// Feature extractor with the conditioning stack. Enabled mechanisms are
// applied after every hidden activation, in the order
// adabn -> condbn -> gated -> attention. The gated module's side network
// sees the original input concatenated with the domain embedding.
struct ExtractorArch {
  MlpSpec mlp;  // full chain; output layer is linear features
  bool adabn = false;
  bool condbn = false;
  bool gated = false;
  bool attention = false;
  int embed_dim = 16;
  std::vector<int> gated_hidden = {8};
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  bool has_bn() const { return adabn || condbn; }
  bool uses_embedding() const { return condbn || gated || attention; }
  void validate() const;
};

// MLP weights plus per-layer conditioning parameters, all in one set so the
// extractor updates touch everything that belongs to it
ParamSet init_extractor(const ExtractorArch& arch, std::uint64_t seed);

Tensor conditioned_extractor_forward(const ExtractorArch& arch, const ParamSet& theta_f,
                                     const Tensor& x, const Tensor& e_row, StatsTable& stats,
                                     const std::string& domain, BnMode mode);

}  // namespace metadapt
