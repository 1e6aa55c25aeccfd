#include "metadapt/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metadapt/autodiff.hpp"
#include "metadapt/objectives.hpp"
#include "metadapt/ops.hpp"
#include "metadapt/optim.hpp"
#include "metadapt/rng.hpp"

namespace metadapt {

void AutoencoderNets::validate() const {
  encoder.validate();
  decoder.validate();
  if (decoder.input_width() != encoder.output_width()) {
    throw std::invalid_argument("AutoencoderNets: decoder input must match code width");
  }
  if (decoder.output_width() != encoder.input_width()) {
    throw std::invalid_argument("AutoencoderNets: decoder output must match input width");
  }
}

const DomainEmbedding& EmbeddingTable::at(const std::string& domain_id) const {
  auto it = entries.find(domain_id);
  if (it == entries.end()) {
    throw std::runtime_error("EmbeddingTable: unknown domain id '" + domain_id + "'");
  }
  return it->second;
}

void EmbeddingTable::put(DomainEmbedding e) {
  if (dim == 0) dim = e.dim();
  if (e.dim() != dim) {
    throw std::invalid_argument("EmbeddingTable: embedding dimension mismatch for '" +
                                e.domain_id + "'");
  }
  entries[e.domain_id] = std::move(e);
}

ParamSet init_autoencoder(const AutoencoderNets& nets, std::uint64_t seed) {
  nets.validate();
  ParamSet params = init_params(nets.encoder, Rng::derive(seed, 1), "enc.");
  ParamSet dec = init_params(nets.decoder, Rng::derive(seed, 2), "dec.");
  for (auto& [k, v] : dec.entries()) params.insert(k, v);
  return params;
}

Tensor encode(const AutoencoderNets& nets, const ParamSet& theta_e, const Tensor& x) {
  return mlp_forward(nets.encoder, theta_e, x, "enc.");
}

Tensor decode(const AutoencoderNets& nets, const ParamSet& theta_e, const Tensor& code) {
  return mlp_forward(nets.decoder, theta_e, code, "dec.");
}

std::vector<double> train_autoencoder(const AutoencoderNets& nets, ParamSet& theta_e,
                                      const Tensor& data, int epochs, double lr,
                                      std::uint64_t seed, int batch_size,
                                      const EmbeddingTaskHook& task_hook, double lambda_e) {
  nets.validate();
  if (epochs < 1) throw std::invalid_argument("train_autoencoder: epochs must be >= 1");
  if (data.rows() < 1) throw std::invalid_argument("train_autoencoder: empty data");

  const int n = data.rows();
  const int bs = batch_size <= 0 ? n : std::min(batch_size, n);
  Rng rng(seed);
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(epochs));

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    if (bs < n) rng.shuffle(order);

    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += bs) {
      const int stop = std::min(start + bs, n);
      std::vector<double> bx(static_cast<std::size_t>(stop - start) * data.cols());
      for (int r = start; r < stop; ++r) {
        for (int c = 0; c < data.cols(); ++c) {
          bx[static_cast<std::size_t>(r - start) * data.cols() + c] =
              data.at(order[static_cast<std::size_t>(r)], c);
        }
      }
      Tensor batch = Tensor::from_data_unchecked({stop - start, data.cols()}, std::move(bx));

      Tape tape;
      ParamSet tracked = attach(tape, theta_e);
      Tensor code = encode(nets, tracked, batch);
      Tensor x_hat = decode(nets, tracked, code);
      LossValue rec = reconstruction_loss(batch, x_hat);
      Tensor objective = rec.value;
      if (task_hook && lambda_e > 0.0) {
        Tensor e_row = mean_rows(code);
        objective = add(objective, scale(task_hook(e_row), lambda_e));
      }
      epoch_loss += objective.value();
      ++batches;
      if (lr != 0.0) {
        ParamSet grads = backward(objective, tracked);
        theta_e = sgd_step(theta_e, grads, lr);
      }
    }
    trace.push_back(epoch_loss / batches);
  }
  return trace;
}

std::vector<double> permutation_invariant_column_mean(const Tensor& x) {
  const int n = x.rows(), d = x.cols();
  std::vector<double> mean(static_cast<std::size_t>(d));
  std::vector<double> col(static_cast<std::size_t>(n));
  for (int c = 0; c < d; ++c) {
    for (int r = 0; r < n; ++r) col[static_cast<std::size_t>(r)] = x.at(r, c);
    std::sort(col.begin(), col.end());
    // run-length accumulation: equal values combine exactly, so duplicated
    // batches average to the identical result
    double s = 0.0;
    std::size_t i = 0;
    while (i < col.size()) {
      std::size_t j = i;
      while (j < col.size() && col[j] == col[i]) ++j;
      s += static_cast<double>(j - i) * col[i];
      i = j;
    }
    mean[static_cast<std::size_t>(c)] = s / static_cast<double>(n);
  }
  return mean;
}

DomainEmbedding domain_embedding(const AutoencoderNets& nets, const ParamSet& theta_e,
                                 const Tensor& domain_data, const std::string& domain_id) {
  if (domain_data.rows() < 1) throw std::invalid_argument("domain_embedding: empty batch");
  Tensor codes = encode(nets, theta_e, domain_data);
  DomainEmbedding e;
  e.domain_id = domain_id;
  e.values = permutation_invariant_column_mean(codes);
  return e;
}

}  // namespace metadapt
