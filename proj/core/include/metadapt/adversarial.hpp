#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metadapt/conditioning.hpp"
#include "metadapt/embeddings.hpp"
#include "metadapt/meta.hpp"
#include "metadapt/metrics.hpp"
#include "metadapt/synth.hpp"

namespace metadapt {

struct ModelArch {
  ExtractorArch extractor;
  MlpSpec classifier;     // feature_dim -> ... -> K
  MlpSpec discriminator;  // feature_dim -> ... -> 1
  AutoencoderNets autoencoder;

  void validate() const;
};

struct AdvConfig {
  double eta_d = 0.05;
  double eta_f = 0.05;
  double eta_c = 0.05;
  double lambda_adv = 0.1;
  int d_steps_per_f_step = 1;
  int epochs = 50;
  int batch_size = 32;

  void validate() const;
};

struct EpochLogRow {
  int epoch = 0;
  double l_c = 0.0, l_d = 0.0, l_f = 0.0;
  double disc_acc = 0.0, src_acc = 0.0;
};

struct TrainState {
  ModelArch arch;
  ParamSet f, c, d, e;  // extractor (incl. conditioning), classifier, discriminator, autoencoder
  EmbeddingTable embeddings;
  StatsTable bn_stats;
  Standardizer scaler;
  int epoch = 0;
  std::vector<EpochLogRow> log;
  std::vector<double> fine_tune_loss;
  std::vector<std::string> warnings;
  int ld_excursion_run = 0;  // consecutive epochs with L_D outside the healthy band
};

TrainState make_initial_state(const ModelArch& arch, std::uint64_t seed);

// embedding row for a domain; all-zero when no table was learned
Tensor state_embedding_row(const TrainState& st, const std::string& domain);

// eval-mode forward through extractor and classifier; never mutates
Tensor predict_probs(const TrainState& st, const Tensor& x, const std::string& domain);

// One pass over paired source/target batches: per pair,
// d_steps_per_f_step discriminator descents on L_D with the extractor
// frozen, then one joint step where the extractor descends L_C + lambda*L_F
// and the classifier descends L_C. Target labels are never used. With
// train_discriminator=false the discriminator is left untouched (ablation).
void adversarial_epoch(TrainState& st, const LabeledSet& src, const LabeledSet& tgt,
                       const AdvConfig& cfg, std::uint64_t epoch_seed,
                       bool train_discriminator = true);

struct EmbedStageConfig {
  int epochs = 50;
  double lr = 0.01;
  int batch_size = 32;
  double lambda_e = 0.0;
  bool joint_refine = false;  // second phase with the task term, after the autoencoder phase
};

struct MetaStageConfig {
  MetaConfig cfg;
  int iterations = 200;
  int n_support = 10;
  int n_query = 20;
};

struct PipelineToggles {
  bool meta = true;
  bool adversarial = true;
  bool embeddings = true;
  bool dynamic_adjust = true;
  bool attention = true;
};

struct PipelineConfig {
  ModelArch arch;
  TaskFamilySpec family;
  DomainSpec source, target;
  int n_per_domain = 600;
  double f_train = 0.7, f_val = 0.15, f_test = 0.15;
  bool standardize = true;
  EmbedStageConfig embed;
  MetaStageConfig meta;
  AdvConfig adv;
  PipelineToggles toggles;
  std::uint64_t seed = 0;
  std::string source_id = "source";
  std::string target_id = "target";
};

struct PipelineResult {
  TrainState state;
  SplitSets source_splits, target_splits;  // post-standardization
  MetaTrace meta_trace;
};

// Stage order: domain-embedding learning, then episodic meta-training of
// extractor+classifier, then the adversarial alignment loop. Each stage is
// individually skippable through the toggles (adversarial off keeps the
// supervised loop but freezes the discriminator and drops the L_F term).
PipelineResult pretrain(const PipelineConfig& cfg,
                        const std::function<void(int, double)>& on_meta_iter = {});

// applies the ablation toggles to a base architecture
ExtractorArch effective_extractor(const ExtractorArch& base, const PipelineToggles& t);

// Supervised fine-tuning on a small labeled target set; optional embedding
// refresh descends lambda_e * the task loss with rate eta_e.
TrainState fine_tune(const TrainState& st, const LabeledSet& tgt_labeled, int steps, double eta_f,
                     double eta_c, double eta_e = 0.0, double lambda_e = 1.0);

// eval-mode metrics on a labeled test set; read-only
MetricsReport evaluate(const TrainState& st, const LabeledSet& test);

// Retrains a fresh discriminator on frozen features and reports its held-out
// accuracy (the alignment probe: low accuracy means aligned features).
double probe_discriminator_accuracy(const Tensor& h_src, const Tensor& h_tgt, std::uint64_t seed,
                                    int epochs = 300, double lr = 0.01);

enum class PerturbKind { fgsm, pgd, noise };

// metrics under increasing perturbation; level 0 is the clean evaluation
std::vector<std::pair<double, MetricsReport>> robustness_sweep(
    const TrainState& st, const LabeledSet& test, PerturbKind kind,
    const std::vector<double>& grid, int pgd_steps = 10, double pgd_step_ratio = 0.25,
    std::uint64_t noise_seed = 0);

}  // namespace metadapt
