#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "metadapt/models.hpp"
#include "metadapt/tensor.hpp"

namespace metadapt {

// encoder x -> code (d_e), decoder code -> x_hat
struct AutoencoderNets {
  MlpSpec encoder, decoder;
  void validate() const;
  int code_dim() const { return encoder.output_width(); }
};

struct DomainEmbedding {
  std::string domain_id;
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }
  Tensor row() const { return Tensor::row(values); }
};

enum class EmbeddingProvenance { autoencoder, supervised, joint };

struct EmbeddingTable {
  int dim = 0;
  EmbeddingProvenance provenance = EmbeddingProvenance::autoencoder;
  std::map<std::string, DomainEmbedding> entries;

  bool empty() const { return entries.empty(); }
  const DomainEmbedding& at(const std::string& domain_id) const;
  void put(DomainEmbedding e);
};

// parameter set for both nets, encoder under "enc.", decoder under "dec."
ParamSet init_autoencoder(const AutoencoderNets& nets, std::uint64_t seed);

Tensor encode(const AutoencoderNets& nets, const ParamSet& theta_e, const Tensor& x);
Tensor decode(const AutoencoderNets& nets, const ParamSet& theta_e, const Tensor& code);

// optional supervised term for joint training: receives the tracked
// per-domain embedding row and returns a scalar task loss
using EmbeddingTaskHook = std::function<Tensor(const Tensor& e_row)>;

// Minibatch gradient descent on the reconstruction loss (plus
// lambda_e * task loss when a hook is given). Returns the per-epoch mean
// loss trace. batch_size 0 means full batch.
std::vector<double> train_autoencoder(const AutoencoderNets& nets, ParamSet& theta_e,
                                      const Tensor& data, int epochs, double lr,
                                      std::uint64_t seed, int batch_size = 0,
                                      const EmbeddingTaskHook& task_hook = {},
                                      double lambda_e = 0.0);

// Mean encoder code over the domain's batch. The columnwise mean uses sorted
// run-length accumulation, so it is exactly permutation-invariant and exact
// under batch duplication.
DomainEmbedding domain_embedding(const AutoencoderNets& nets, const ParamSet& theta_e,
                                 const Tensor& domain_data, const std::string& domain_id);

// exact columnwise mean used by domain_embedding (exposed for testing)
std::vector<double> permutation_invariant_column_mean(const Tensor& x);

}  // namespace metadapt
