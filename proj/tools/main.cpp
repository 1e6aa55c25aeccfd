// Experiment harness: deterministic multi-domain runs driven by a JSON
// config. Subcommands cover the stage pipeline (generate-data, pretrain,
// meta-train, adapt, evaluate, robustness), the ablation sweep and report
// emission. Exit codes: 0 success, 1 config/usage error, 2 runtime error.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metadapt/experiment.hpp"
#include "metadapt/version.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
};

metadapt::ExperimentConfig load(const CommonArgs& args) {
  metadapt::ExperimentConfig cfg = metadapt::load_config(args.config_path);
  if (!args.out_override.empty()) cfg.out_dir = args.out_override;
  if (args.has_seed_override) cfg.seeds = {args.seed_override};
  return cfg;
}

std::uint64_t run_seed(const metadapt::ExperimentConfig& cfg) { return cfg.seeds.front(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metadapt: meta-learning + adversarial domain adaptation harness"};
  app.set_version_flag("--version", std::string("metadapt ") + metadapt::kVersion);
  app.require_subcommand(1);

  CommonArgs args;
  int jobs = 1;
  std::vector<std::string> ablate_toggles;

  auto add_common = [&](CLI::App* sub, bool config_required = true) {
    auto* opt = sub->add_option("--config", args.config_path, "experiment config JSON");
    if (config_required) opt->required();
    sub->add_option("--out", args.out_override, "override the output directory");
    sub->add_option("--seed", args.seed_override, "override the config seeds with one seed")
        ->each([&](const std::string&) { args.has_seed_override = true; });
  };

  CLI::App* generate = app.add_subcommand("generate-data", "write the dataset CSVs");
  add_common(generate);
  CLI::App* pretrain = app.add_subcommand(
      "pretrain", "full pipeline: embeddings, meta-training, adversarial alignment");
  add_common(pretrain);
  CLI::App* meta = app.add_subcommand("meta-train", "episodic meta-training stage only");
  add_common(meta);
  CLI::App* adapt = app.add_subcommand("adapt", "fine-tune on a small labeled target set");
  add_common(adapt);
  CLI::App* evaluate = app.add_subcommand("evaluate", "metrics on the source/target test splits");
  add_common(evaluate);
  CLI::App* robustness = app.add_subcommand("robustness", "attack and noise degradation sweeps");
  add_common(robustness);
  CLI::App* ablate = app.add_subcommand("ablate", "full pipeline vs single-component removals");
  add_common(ablate);
  ablate->add_option("--jobs", jobs, "max concurrent (variant, seed) jobs")->check(CLI::PositiveNumber);
  ablate->add_option("--ablate", ablate_toggles,
                     "restrict to these toggles (meta adversarial embeddings dynamic_adjust attention)");
  CLI::App* report = app.add_subcommand("report", "aggregate runs/ into results.json + summary.csv");
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e, std::cout, std::cerr);
    return 1;
  }

  try {
    metadapt::ExperimentConfig cfg = load(args);
    if (generate->parsed()) {
      metadapt::run_generate_data(cfg, run_seed(cfg));
    } else if (pretrain->parsed()) {
      metadapt::run_pretrain(cfg, run_seed(cfg));
    } else if (meta->parsed()) {
      metadapt::run_meta_train(cfg, run_seed(cfg));
    } else if (adapt->parsed()) {
      metadapt::run_adapt(cfg, run_seed(cfg));
    } else if (evaluate->parsed()) {
      metadapt::run_evaluate(cfg, run_seed(cfg));
    } else if (robustness->parsed()) {
      metadapt::run_robustness(cfg, run_seed(cfg));
    } else if (ablate->parsed()) {
      metadapt::run_ablate(cfg, jobs, ablate_toggles);
    } else if (report->parsed()) {
      metadapt::run_report(cfg);
    }
  } catch (const metadapt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
