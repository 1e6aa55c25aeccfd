#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "metadapt/adversarial.hpp"
#include "metadapt/io.hpp"

namespace metadapt {

// exit code 1
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// exit code 2
struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  int n_per_domain = 600;
  double f_train = 0.7, f_val = 0.15, f_test = 0.15;
  bool standardize = true;
};

struct ModelConfig {
  std::vector<int> extractor_hidden = {32, 32};
  int feature_dim = 16;
  std::vector<int> classifier_hidden;
  std::vector<int> discriminator_hidden = {16, 16};
  bool adabn = false;
  bool condbn = true;
  bool gated = true;
  bool attention = true;
  std::vector<int> gated_hidden = {8};
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
};

struct EmbeddingConfig {
  int dim = 16;
  std::vector<int> encoder_hidden = {32};
  int epochs = 50;
  double lr = 0.01;
  int batch_size = 32;
  double lambda_e = 0.0;
  bool joint_refine = false;
};

struct MetaSection {
  MetaConfig cfg;
  int iterations = 200;
  int n_support = 10;
  int n_query = 20;
};

struct FineTuneConfig {
  int steps = 0;
  double eta_f = 0.01, eta_c = 0.01, eta_e = 0.0;
  int n_labeled = 20;
};

struct AttackConfig {
  std::string kind = "fgsm";  // fgsm | pgd
  std::vector<double> grid = {0.0, 0.05, 0.1, 0.2};
  int pgd_steps = 10;
  double pgd_step_ratio = 0.25;
  std::vector<double> noise_grid = {0.0, 0.1, 0.3};
};

struct ExperimentConfig {
  int schema_version = 1;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string out_dir = "runs/exp";
  TaskFamilySpec family;
  DomainSpec source_domain;
  DomainSpec target_domain;
  DataConfig data;
  ModelConfig model;
  EmbeddingConfig embedding;
  MetaSection meta;
  AdvConfig adversarial;
  FineTuneConfig fine_tune;
  PipelineToggles ablation;
  AttackConfig attacks;

  void validate() const;
};

// template with the reference hyperparameters (outer lr 0.001, batch 32,
// 50 epochs); the shipped configs/ directory carries ready-made presets
ExperimentConfig default_config();

Json config_to_json(const ExperimentConfig& cfg);
// strict: unknown keys are rejected, messages name the offending key
ExperimentConfig config_from_json(const Json& j);
ExperimentConfig load_config(const std::string& path);

// deterministic hash of the canonical serialized config
std::uint64_t config_hash(const ExperimentConfig& cfg);

PipelineConfig make_pipeline_config(const ExperimentConfig& cfg, std::uint64_t seed);

// stage runners; they throw ConfigError / RunError and write their artifacts
// under cfg.out_dir
void run_generate_data(const ExperimentConfig& cfg, std::uint64_t seed);
void run_pretrain(const ExperimentConfig& cfg, std::uint64_t seed);
void run_meta_train(const ExperimentConfig& cfg, std::uint64_t seed);
void run_adapt(const ExperimentConfig& cfg, std::uint64_t seed);
void run_evaluate(const ExperimentConfig& cfg, std::uint64_t seed);
void run_robustness(const ExperimentConfig& cfg, std::uint64_t seed);

// variant names for the ablation sweep: "full" plus one per enabled toggle
std::vector<std::string> ablation_variants(const PipelineToggles& toggles,
                                           const std::vector<std::string>& restrict_to = {});
PipelineToggles toggles_for_variant(const PipelineToggles& base, const std::string& variant);

// full + single-ablation variants over all seeds; jobs > 1 runs independent
// (variant, seed) pairs concurrently
void run_ablate(const ExperimentConfig& cfg, int jobs = 1,
                const std::vector<std::string>& restrict_to = {});

// aggregates runs/*.json into results.json, summary.csv and manifest.json
void run_report(const ExperimentConfig& cfg);

}  // namespace metadapt
