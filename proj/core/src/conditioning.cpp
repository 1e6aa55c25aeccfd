#include "metadapt/conditioning.hpp"

#include <stdexcept>

#include "metadapt/ops.hpp"
#include "metadapt/rng.hpp"

namespace metadapt {

namespace {

struct BatchMoments {
  Tensor mean, var;  // 1 x n, tracked when x is
};

BatchMoments batch_moments(const Tensor& x) {
  const double m = static_cast<double>(x.rows());
  Tensor mean = scale(sum_rows(x), 1.0 / m);
  Tensor dev = sub(x, mean);
  Tensor var = scale(sum_rows(mul(dev, dev)), 1.0 / m);
  return {mean, var};
}

Tensor normalize(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                 const Tensor& beta, double eps) {
  Tensor xhat = div(sub(x, mean), sqrt(add_scalar(var, eps)));
  return add(mul(gamma, xhat), beta);
}

void fold_running(BnRunning& slot, const Tensor& mean, const Tensor& var, double momentum) {
  const auto& md = mean.data();
  const auto& vd = var.data();
  if (!slot.init) {
    slot.mean.assign(md.begin(), md.end());
    slot.var.assign(vd.begin(), vd.end());
    slot.init = true;
    return;
  }
  for (std::size_t i = 0; i < md.size(); ++i) {
    slot.mean[i] = (1.0 - momentum) * slot.mean[i] + momentum * md[i];
    slot.var[i] = (1.0 - momentum) * slot.var[i] + momentum * vd[i];
  }
}

Tensor bn_core(const Tensor& x, const Tensor& gamma, const Tensor& beta, BnRunning* running,
               BnMode mode, double eps, double momentum) {
  if (gamma.cols() != x.cols() || beta.cols() != x.cols()) {
    throw std::invalid_argument("batch norm: affine width does not match feature width");
  }
  if (mode == BnMode::train) {
    BatchMoments bm = batch_moments(x);
    if (running != nullptr) fold_running(*running, bm.mean.detached(), bm.var.detached(), momentum);
    return normalize(x, bm.mean, bm.var, gamma, beta, eps);
  }
  if (running == nullptr || !running->init) {
    throw std::runtime_error("batch norm: no stored statistics for eval mode");
  }
  Tensor mean = Tensor::row(running->mean);
  Tensor var = Tensor::row(running->var);
  return normalize(x, mean, var, gamma, beta, eps);
}

}  // namespace

Tensor ada_bn(const Tensor& x, const AdaBnState& st, BnMode mode) {
  return bn_core(x, st.gamma, st.beta, st.running, mode, st.epsilon, st.momentum);
}

Tensor cond_bn(const Tensor& x, const CondBnMaps& maps, const Tensor& e_row, BnRunning* running,
               BnMode mode, double epsilon, double momentum) {
  Tensor gamma = add(matmul(e_row, maps.wg), maps.bg);
  Tensor beta = add(matmul(e_row, maps.wb), maps.bb);
  return bn_core(x, gamma, beta, running, mode, epsilon, momentum);
}

Tensor gate_value(const Tensor& w_g_col, const Tensor& e_row) {
  if (e_row.cols() != w_g_col.rows()) throw_shape_error("gate_value", e_row, w_g_col);
  return sigmoid(matmul(e_row, w_g_col));  // 1 x 1
}

Tensor gated_domain_forward(const Tensor& f_out, const Tensor& g_out, const Tensor& w_g_col,
                            const Tensor& e_row) {
  if (!f_out.same_extent(g_out)) throw_shape_error("gated_domain_forward", f_out, g_out);
  return add(f_out, mul(g_out, gate_value(w_g_col, e_row)));
}

Tensor contextual_attention(const Tensor& h, const Tensor& e_row, const Tensor& w) {
  if (w.rows() != h.cols() + e_row.cols() || w.cols() != h.cols()) {
    throw std::invalid_argument("contextual_attention: weight matrix must be (n+d_e) x n");
  }
  Tensor he = concat_cols(h, tile_rows(e_row, h.rows()));
  Tensor weights = softmax_rows(matmul(he, w));
  return mul(weights, h);
}

Tensor tile_rows(const Tensor& row, int m) {
  if (row.rows() != 1) throw std::invalid_argument("tile_rows: expected a single row");
  if (m == 1) return row;
  return matmul(Tensor::full({m, 1}, 1.0), row);
}

void ExtractorArch::validate() const {
  mlp.validate();
  if (embed_dim <= 0) throw std::invalid_argument("ExtractorArch: embed_dim must be positive");
  if (bn_eps <= 0) throw std::invalid_argument("ExtractorArch: bn_eps must be positive");
  if (bn_momentum <= 0 || bn_momentum > 1) {
    throw std::invalid_argument("ExtractorArch: bn_momentum must be in (0, 1]");
  }
  for (int w : gated_hidden) {
    if (w <= 0) throw std::invalid_argument("ExtractorArch: gated_hidden widths must be positive");
  }
}

ParamSet init_extractor(const ExtractorArch& arch, std::uint64_t seed) {
  arch.validate();
  ParamSet params = init_params(arch.mlp, seed);
  // conditioning applies after each hidden activation, not the feature head
  for (int l = 0; l < arch.mlp.num_layers() - 1; ++l) {
    const int n = arch.mlp.layer_widths[static_cast<std::size_t>(l) + 1];
    const std::string li = std::to_string(l);
    if (arch.adabn) {
      params.insert("bn" + li + ".gamma", Tensor::full({1, n}, 1.0));
      params.insert("bn" + li + ".beta", Tensor::zeros({1, n}));
    }
    if (arch.condbn) {
      // maps start as identity normalization: gamma(e) = 1, beta(e) = 0
      params.insert("cbn" + li + ".wg", Tensor::zeros({arch.embed_dim, n}));
      params.insert("cbn" + li + ".bg", Tensor::full({1, n}, 1.0));
      params.insert("cbn" + li + ".wb", Tensor::zeros({arch.embed_dim, n}));
      params.insert("cbn" + li + ".bb", Tensor::zeros({1, n}));
    }
    if (arch.gated) {
      MlpSpec g;
      g.layer_widths.push_back(arch.mlp.input_width() + arch.embed_dim);
      for (int w : arch.gated_hidden) g.layer_widths.push_back(w);
      g.layer_widths.push_back(n);
      ParamSet gp = init_params(g, Rng::derive(seed, 1000 + static_cast<std::uint64_t>(l)),
                                "g" + li + ".");
      for (auto& [k, v] : gp.entries()) params.insert(k, v);
      params.insert("g" + li + ".gate", Tensor::zeros({arch.embed_dim, 1}));
    }
    if (arch.attention) {
      MlpSpec a;
      a.layer_widths = {n + arch.embed_dim, n};
      ParamSet ap = init_params(a, Rng::derive(seed, 2000 + static_cast<std::uint64_t>(l)),
                                "attn" + li + ".");
      params.insert("attn" + li + ".w", ap.at("attn" + li + ".w0"));
    }
  }
  return params;
}

Tensor conditioned_extractor_forward(const ExtractorArch& arch, const ParamSet& theta_f,
                                     const Tensor& x, const Tensor& e_row, StatsTable& stats,
                                     const std::string& domain, BnMode mode) {
  arch.validate();
  if (x.cols() != arch.mlp.input_width()) {
    throw std::invalid_argument("extractor: input width " + std::to_string(x.cols()) +
                                " does not match spec width " +
                                std::to_string(arch.mlp.input_width()));
  }
  if (arch.uses_embedding() && e_row.cols() != arch.embed_dim) {
    throw std::invalid_argument("extractor: embedding width " + std::to_string(e_row.cols()) +
                                " does not match embed_dim " + std::to_string(arch.embed_dim));
  }
  Tensor h = x;
  for (int l = 0; l < arch.mlp.num_layers(); ++l) {
    const std::string li = std::to_string(l);
    h = add(matmul(h, theta_f.at("w" + li)), theta_f.at("b" + li));
    if (l + 1 == arch.mlp.num_layers()) break;  // linear feature head
    h = relu(h);
    if (arch.adabn) {
      auto slot = [&]() -> BnRunning* {
        const std::string key = "bn" + li + "/" + domain;
        if (mode == BnMode::train) return &stats[key];
        auto it = stats.find(key);
        if (it == stats.end()) {
          throw std::runtime_error("extractor: no stored AdaBN statistics for domain '" + domain +
                                   "' at layer " + li);
        }
        return &it->second;
      }();
      AdaBnState st{theta_f.at("bn" + li + ".gamma"), theta_f.at("bn" + li + ".beta"), slot,
                    arch.bn_eps, arch.bn_momentum};
      h = ada_bn(h, st, mode);
    }
    if (arch.condbn) {
      const std::string key = "cbn" + li + "/" + domain;
      BnRunning* slot = nullptr;
      if (mode == BnMode::train) {
        slot = &stats[key];
      } else {
        auto it = stats.find(key);
        if (it == stats.end()) {
          throw std::runtime_error("extractor: no stored CondBN statistics for domain '" + domain +
                                   "' at layer " + li);
        }
        slot = &it->second;
      }
      CondBnMaps maps{theta_f.at("cbn" + li + ".wg"), theta_f.at("cbn" + li + ".bg"),
                      theta_f.at("cbn" + li + ".wb"), theta_f.at("cbn" + li + ".bb")};
      h = cond_bn(h, maps, e_row, slot, mode, arch.bn_eps, arch.bn_momentum);
    }
    if (arch.gated) {
      MlpSpec g;
      g.layer_widths.push_back(arch.mlp.input_width() + arch.embed_dim);
      for (int w : arch.gated_hidden) g.layer_widths.push_back(w);
      g.layer_widths.push_back(h.cols());
      Tensor gin = concat_cols(x, tile_rows(e_row, x.rows()));
      Tensor g_out = mlp_forward(g, theta_f, gin, "g" + li + ".");
      h = gated_domain_forward(h, g_out, theta_f.at("g" + li + ".gate"), e_row);
    }
    if (arch.attention) {
      h = contextual_attention(h, e_row, theta_f.at("attn" + li + ".w"));
    }
  }
  return h;
}

}  // namespace metadapt
