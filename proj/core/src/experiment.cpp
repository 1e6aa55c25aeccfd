#include "metadapt/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "metadapt/rng.hpp"
#include "metadapt/version.hpp"

namespace metadapt {

namespace fs = std::filesystem;

namespace {

// strict object reader: every key must be consumed, unknown keys are errors
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const Json& raw(const std::string& key) {
    consumed_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  T value(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    consumed_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  Json object(const std::string& key) {
    if (!j_.contains(key)) return Json::object();
    consumed_.insert(key);
    return j_.at(key);
  }

  void done() const {
    for (const auto& [key, v] : j_.items()) {
      if (consumed_.find(key) == consumed_.end()) {
        throw ConfigError(path_ + "." + key + ": unknown key");
      }
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> consumed_;
};

std::string family_name(TaskFamily f) {
  return f == TaskFamily::gaussian_blobs ? "gaussian_blobs" : "two_arcs";
}

TaskFamily family_from_name(const std::string& s, const std::string& path) {
  if (s == "gaussian_blobs") return TaskFamily::gaussian_blobs;
  if (s == "two_arcs") return TaskFamily::two_arcs;
  throw ConfigError(path + ": unknown family '" + s + "'");
}

struct Paths {
  std::string out;

  std::string data_dir() const { return out + "/data"; }
  std::string dataset(const std::string& domain, Split s) const {
    return data_dir() + "/" + domain + "_" + split_name(s) + ".csv";
  }
  std::string state_pretrain() const { return out + "/state_pretrain.json"; }
  std::string state_meta() const { return out + "/state_meta.json"; }
  std::string state_adapt() const { return out + "/state_adapt.json"; }
  std::string train_log() const { return out + "/train_log.csv"; }
  std::string meta_trace() const { return out + "/meta_trace.csv"; }
  std::string evaluation() const { return out + "/evaluation.json"; }
  std::string predictions() const { return out + "/predictions.csv"; }
  std::string robustness() const { return out + "/robustness.csv"; }
  std::string runs_dir() const { return out + "/runs"; }
  std::string run_file(const std::string& variant, std::uint64_t seed) const {
    return runs_dir() + "/" + variant + "_seed" + std::to_string(seed) + ".json";
  }
  std::string ablation_table() const { return out + "/ablation.csv"; }
  std::string results() const { return out + "/results.json"; }
  std::string summary() const { return out + "/summary.csv"; }
  std::string manifest() const { return out + "/manifest.json"; }
};

void write_train_log(const TrainState& st, const std::string& path) {
  std::ostringstream os;
  os << "epoch,L_C,L_D,L_F,disc_acc,src_acc\n";
  for (const auto& row : st.log) {
    os << row.epoch << "," << fmt_g17(row.l_c) << "," << fmt_g17(row.l_d) << ","
       << fmt_g17(row.l_f) << "," << fmt_g17(row.disc_acc) << "," << fmt_g17(row.src_acc) << "\n";
  }
  write_text_atomic(path, os.str());
}

struct RegeneratedData {
  SplitSets source, target;
};

// same derivation as the pipeline, so stages agree on the data without
// passing files around
RegeneratedData regenerate_splits(const ExperimentConfig& cfg, std::uint64_t seed,
                                  const Standardizer* scaler) {
  RegeneratedData d;
  LabeledSet src = generate_domain(cfg.family, cfg.source_domain, cfg.data.n_per_domain,
                                   Rng::derive(seed, 2), "source");
  LabeledSet tgt = generate_domain(cfg.family, cfg.target_domain, cfg.data.n_per_domain,
                                   Rng::derive(seed, 3), "target");
  d.source = split(src, cfg.data.f_train, cfg.data.f_val, cfg.data.f_test, Rng::derive(seed, 4));
  d.target = split(tgt, cfg.data.f_train, cfg.data.f_val, cfg.data.f_test, Rng::derive(seed, 5));
  if (scaler != nullptr && scaler->fitted) {
    for (LabeledSet* s : {&d.source.train, &d.source.val, &d.source.test, &d.target.train,
                          &d.target.val, &d.target.test}) {
      *s = scaler->apply(*s);
    }
  }
  return d;
}

LabeledSet labeled_subset_for_adapt(const ExperimentConfig& cfg, const LabeledSet& tgt_train,
                                    std::uint64_t seed) {
  const int n = std::min(cfg.fine_tune.n_labeled, tgt_train.n());
  std::vector<int> order(static_cast<std::size_t>(tgt_train.n()));
  for (int i = 0; i < tgt_train.n(); ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(Rng::derive(seed, 30));
  rng.shuffle(order);

  const int d = tgt_train.dim(), k = tgt_train.num_classes();
  std::vector<double> xs(static_cast<std::size_t>(n) * d);
  std::vector<double> ys(static_cast<std::size_t>(n) * k);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) {
      xs[static_cast<std::size_t>(r) * d + c] = tgt_train.inputs.at(order[static_cast<std::size_t>(r)], c);
    }
    for (int c = 0; c < k; ++c) {
      ys[static_cast<std::size_t>(r) * k + c] = tgt_train.labels.at(order[static_cast<std::size_t>(r)], c);
    }
  }
  LabeledSet out;
  out.inputs = Tensor::from_data_unchecked({n, d}, std::move(xs));
  out.labels = Tensor::from_data_unchecked({n, k}, std::move(ys));
  out.domain_id = tgt_train.domain_id;
  out.split = Split::train;
  return out;
}

TrainState load_state_or_throw(const std::string& path) {
  if (!file_exists(path)) throw RunError("missing model artifact: " + path);
  try {
    return load_state(path);
  } catch (const std::exception& e) {
    throw RunError(std::string("cannot load model artifact: ") + e.what());
  }
}

std::string preferred_state_path(const Paths& p) {
  if (file_exists(p.state_adapt())) return p.state_adapt();
  return p.state_pretrain();
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    if (schema_version != 1) throw ConfigError("schema_version: must be 1");
    if (seeds.empty()) throw ConfigError("seeds: need at least one seed");
    if (out_dir.empty()) throw ConfigError("out_dir: must not be empty");
    family.validate();
    source_domain.validate(family.input_dim);
    target_domain.validate(family.input_dim);
    if (data.n_per_domain < 10) throw ConfigError("data.n_per_domain: must be >= 10");
    if (model.feature_dim < 1) throw ConfigError("model.feature_dim: must be >= 1");
    if (embedding.dim < 1) throw ConfigError("embedding.dim: must be >= 1");
    if (embedding.epochs < 1) throw ConfigError("embedding.epochs: must be >= 1");
    if (embedding.lambda_e < 0) throw ConfigError("embedding.lambda_e: must be >= 0");
    meta.cfg.validate();
    if (meta.iterations < 0) throw ConfigError("meta.iterations: must be >= 0");
    if (meta.n_support < 1 || meta.n_query < 1) {
      throw ConfigError("meta.n_support/n_query: must be >= 1");
    }
    adversarial.validate();
    if (fine_tune.steps < 0) throw ConfigError("fine_tune.steps: must be >= 0");
    if (fine_tune.n_labeled < 1) throw ConfigError("fine_tune.n_labeled: must be >= 1");
    for (std::size_t i = 1; i < attacks.grid.size(); ++i) {
      if (attacks.grid[i] <= attacks.grid[i - 1]) {
        throw ConfigError("attacks.grid: must be strictly increasing");
      }
    }
    for (std::size_t i = 1; i < attacks.noise_grid.size(); ++i) {
      if (attacks.noise_grid[i] <= attacks.noise_grid[i - 1]) {
        throw ConfigError("attacks.noise_grid: must be strictly increasing");
      }
    }
    if (attacks.kind != "fgsm" && attacks.kind != "pgd") {
      throw ConfigError("attacks.kind: must be 'fgsm' or 'pgd'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["schema_version"] = c.schema_version;
  j["seeds"] = c.seeds;
  j["out_dir"] = c.out_dir;
  j["family"] = {{"family", family_name(c.family.family)},
                 {"num_classes", c.family.num_classes},
                 {"input_dim", c.family.input_dim},
                 {"mean_radius", c.family.mean_radius},
                 {"class_std", c.family.class_std},
                 {"label_flip", c.family.label_flip}};
  auto dom = [](const DomainSpec& d) {
    return Json{{"rotation", d.rotation},
                {"translation", d.translation},
                {"scale", d.scale},
                {"noise", d.noise}};
  };
  j["source_domain"] = dom(c.source_domain);
  j["target_domain"] = dom(c.target_domain);
  j["data"] = {{"n_per_domain", c.data.n_per_domain},
               {"fractions", std::vector<double>{c.data.f_train, c.data.f_val, c.data.f_test}},
               {"standardize", c.data.standardize}};
  j["model"] = {{"extractor_hidden", c.model.extractor_hidden},
                {"feature_dim", c.model.feature_dim},
                {"classifier_hidden", c.model.classifier_hidden},
                {"discriminator_hidden", c.model.discriminator_hidden},
                {"adabn", c.model.adabn},
                {"condbn", c.model.condbn},
                {"gated", c.model.gated},
                {"attention", c.model.attention},
                {"gated_hidden", c.model.gated_hidden},
                {"bn_eps", c.model.bn_eps},
                {"bn_momentum", c.model.bn_momentum}};
  j["embedding"] = {{"dim", c.embedding.dim},
                    {"encoder_hidden", c.embedding.encoder_hidden},
                    {"epochs", c.embedding.epochs},
                    {"lr", c.embedding.lr},
                    {"batch_size", c.embedding.batch_size},
                    {"lambda_e", c.embedding.lambda_e},
                    {"joint_refine", c.embedding.joint_refine}};
  j["meta"] = {{"inner_lr", c.meta.cfg.inner_lr},
               {"outer_lr", c.meta.cfg.outer_lr},
               {"inner_steps", c.meta.cfg.inner_steps},
               {"meta_batch_size", c.meta.cfg.meta_batch_size},
               {"mode", c.meta.cfg.mode == MetaMode::exact ? "exact" : "first_order"},
               {"optimizer", c.meta.cfg.optimizer == MetaOptimizer::sgd ? "sgd" : "adam"},
               {"adam_beta1", c.meta.cfg.adam_beta1},
               {"adam_beta2", c.meta.cfg.adam_beta2},
               {"adam_eps", c.meta.cfg.adam_eps},
               {"iters_per_epoch", c.meta.cfg.iters_per_epoch},
               {"lr_decay", c.meta.cfg.lr_decay},
               {"lr_decay_every_epochs", c.meta.cfg.lr_decay_every_epochs},
               {"iterations", c.meta.iterations},
               {"n_support", c.meta.n_support},
               {"n_query", c.meta.n_query}};
  j["adversarial"] = {{"eta_d", c.adversarial.eta_d},
                      {"eta_f", c.adversarial.eta_f},
                      {"eta_c", c.adversarial.eta_c},
                      {"lambda_adv", c.adversarial.lambda_adv},
                      {"d_steps_per_f_step", c.adversarial.d_steps_per_f_step},
                      {"epochs", c.adversarial.epochs},
                      {"batch_size", c.adversarial.batch_size}};
  j["fine_tune"] = {{"steps", c.fine_tune.steps},
                    {"eta_f", c.fine_tune.eta_f},
                    {"eta_c", c.fine_tune.eta_c},
                    {"eta_e", c.fine_tune.eta_e},
                    {"n_labeled", c.fine_tune.n_labeled}};
  j["ablation"] = {{"meta", c.ablation.meta},
                   {"adversarial", c.ablation.adversarial},
                   {"embeddings", c.ablation.embeddings},
                   {"dynamic_adjust", c.ablation.dynamic_adjust},
                   {"attention", c.ablation.attention}};
  j["attacks"] = {{"kind", c.attacks.kind},
                  {"grid", c.attacks.grid},
                  {"pgd_steps", c.attacks.pgd_steps},
                  {"pgd_step_ratio", c.attacks.pgd_step_ratio},
                  {"noise_grid", c.attacks.noise_grid}};
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  ObjectReader root(j, "config");
  c.schema_version = root.value("schema_version", 1);
  c.seeds = root.value("seeds", c.seeds);
  c.out_dir = root.value("out_dir", c.out_dir);

  {
    ObjectReader r(root.object("family"), "family");
    c.family.family = family_from_name(r.value<std::string>("family", "gaussian_blobs"), "family.family");
    c.family.num_classes = r.value("num_classes", c.family.num_classes);
    c.family.input_dim = r.value("input_dim", c.family.input_dim);
    c.family.mean_radius = r.value("mean_radius", c.family.mean_radius);
    c.family.class_std = r.value("class_std", c.family.class_std);
    c.family.label_flip = r.value("label_flip", c.family.label_flip);
    r.done();
  }
  auto read_domain = [&](const char* key, DomainSpec& d) {
    ObjectReader r(root.object(key), key);
    d.rotation = r.value("rotation", d.rotation);
    d.translation = r.value("translation", d.translation);
    d.scale = r.value("scale", d.scale);
    d.noise = r.value("noise", d.noise);
    r.done();
  };
  read_domain("source_domain", c.source_domain);
  read_domain("target_domain", c.target_domain);
  {
    ObjectReader r(root.object("data"), "data");
    c.data.n_per_domain = r.value("n_per_domain", c.data.n_per_domain);
    if (r.has("fractions")) {
      auto f = r.value("fractions", std::vector<double>{});
      if (f.size() != 3) throw ConfigError("data.fractions: need exactly three values");
      c.data.f_train = f[0];
      c.data.f_val = f[1];
      c.data.f_test = f[2];
    }
    c.data.standardize = r.value("standardize", c.data.standardize);
    r.done();
  }
  {
    ObjectReader r(root.object("model"), "model");
    c.model.extractor_hidden = r.value("extractor_hidden", c.model.extractor_hidden);
    c.model.feature_dim = r.value("feature_dim", c.model.feature_dim);
    c.model.classifier_hidden = r.value("classifier_hidden", c.model.classifier_hidden);
    c.model.discriminator_hidden = r.value("discriminator_hidden", c.model.discriminator_hidden);
    c.model.adabn = r.value("adabn", c.model.adabn);
    c.model.condbn = r.value("condbn", c.model.condbn);
    c.model.gated = r.value("gated", c.model.gated);
    c.model.attention = r.value("attention", c.model.attention);
    c.model.gated_hidden = r.value("gated_hidden", c.model.gated_hidden);
    c.model.bn_eps = r.value("bn_eps", c.model.bn_eps);
    c.model.bn_momentum = r.value("bn_momentum", c.model.bn_momentum);
    r.done();
  }
  {
    ObjectReader r(root.object("embedding"), "embedding");
    c.embedding.dim = r.value("dim", c.embedding.dim);
    c.embedding.encoder_hidden = r.value("encoder_hidden", c.embedding.encoder_hidden);
    c.embedding.epochs = r.value("epochs", c.embedding.epochs);
    c.embedding.lr = r.value("lr", c.embedding.lr);
    c.embedding.batch_size = r.value("batch_size", c.embedding.batch_size);
    c.embedding.lambda_e = r.value("lambda_e", c.embedding.lambda_e);
    c.embedding.joint_refine = r.value("joint_refine", c.embedding.joint_refine);
    r.done();
  }
  {
    ObjectReader r(root.object("meta"), "meta");
    c.meta.cfg.inner_lr = r.value("inner_lr", c.meta.cfg.inner_lr);
    c.meta.cfg.outer_lr = r.value("outer_lr", c.meta.cfg.outer_lr);
    c.meta.cfg.inner_steps = r.value("inner_steps", c.meta.cfg.inner_steps);
    c.meta.cfg.meta_batch_size = r.value("meta_batch_size", c.meta.cfg.meta_batch_size);
    const std::string mode = r.value<std::string>("mode", "first_order");
    if (mode != "first_order" && mode != "exact") {
      throw ConfigError("meta.mode: must be 'first_order' or 'exact'");
    }
    c.meta.cfg.mode = mode == "exact" ? MetaMode::exact : MetaMode::first_order;
    const std::string opt = r.value<std::string>("optimizer", "adam");
    if (opt != "sgd" && opt != "adam") throw ConfigError("meta.optimizer: must be 'sgd' or 'adam'");
    c.meta.cfg.optimizer = opt == "sgd" ? MetaOptimizer::sgd : MetaOptimizer::adam;
    c.meta.cfg.adam_beta1 = r.value("adam_beta1", c.meta.cfg.adam_beta1);
    c.meta.cfg.adam_beta2 = r.value("adam_beta2", c.meta.cfg.adam_beta2);
    c.meta.cfg.adam_eps = r.value("adam_eps", c.meta.cfg.adam_eps);
    c.meta.cfg.iters_per_epoch = r.value("iters_per_epoch", c.meta.cfg.iters_per_epoch);
    c.meta.cfg.lr_decay = r.value("lr_decay", c.meta.cfg.lr_decay);
    c.meta.cfg.lr_decay_every_epochs =
        r.value("lr_decay_every_epochs", c.meta.cfg.lr_decay_every_epochs);
    c.meta.iterations = r.value("iterations", c.meta.iterations);
    c.meta.n_support = r.value("n_support", c.meta.n_support);
    c.meta.n_query = r.value("n_query", c.meta.n_query);
    r.done();
  }
  {
    ObjectReader r(root.object("adversarial"), "adversarial");
    c.adversarial.eta_d = r.value("eta_d", c.adversarial.eta_d);
    c.adversarial.eta_f = r.value("eta_f", c.adversarial.eta_f);
    c.adversarial.eta_c = r.value("eta_c", c.adversarial.eta_c);
    c.adversarial.lambda_adv = r.value("lambda_adv", c.adversarial.lambda_adv);
    c.adversarial.d_steps_per_f_step = r.value("d_steps_per_f_step", c.adversarial.d_steps_per_f_step);
    c.adversarial.epochs = r.value("epochs", c.adversarial.epochs);
    c.adversarial.batch_size = r.value("batch_size", c.adversarial.batch_size);
    r.done();
  }
  {
    ObjectReader r(root.object("fine_tune"), "fine_tune");
    c.fine_tune.steps = r.value("steps", c.fine_tune.steps);
    c.fine_tune.eta_f = r.value("eta_f", c.fine_tune.eta_f);
    c.fine_tune.eta_c = r.value("eta_c", c.fine_tune.eta_c);
    c.fine_tune.eta_e = r.value("eta_e", c.fine_tune.eta_e);
    c.fine_tune.n_labeled = r.value("n_labeled", c.fine_tune.n_labeled);
    r.done();
  }
  {
    ObjectReader r(root.object("ablation"), "ablation");
    c.ablation.meta = r.value("meta", c.ablation.meta);
    c.ablation.adversarial = r.value("adversarial", c.ablation.adversarial);
    c.ablation.embeddings = r.value("embeddings", c.ablation.embeddings);
    c.ablation.dynamic_adjust = r.value("dynamic_adjust", c.ablation.dynamic_adjust);
    c.ablation.attention = r.value("attention", c.ablation.attention);
    r.done();
  }
  {
    ObjectReader r(root.object("attacks"), "attacks");
    c.attacks.kind = r.value("kind", c.attacks.kind);
    c.attacks.grid = r.value("grid", c.attacks.grid);
    c.attacks.pgd_steps = r.value("pgd_steps", c.attacks.pgd_steps);
    c.attacks.pgd_step_ratio = r.value("pgd_step_ratio", c.attacks.pgd_step_ratio);
    c.attacks.noise_grid = r.value("noise_grid", c.attacks.noise_grid);
    r.done();
  }
  root.done();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  if (!file_exists(path)) throw ConfigError("config file not found: " + path);
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  return fnv1a64(config_to_json(cfg).dump());
}

PipelineConfig make_pipeline_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PipelineConfig p;

  p.arch.extractor.mlp.layer_widths.push_back(cfg.family.input_dim);
  for (int w : cfg.model.extractor_hidden) p.arch.extractor.mlp.layer_widths.push_back(w);
  p.arch.extractor.mlp.layer_widths.push_back(cfg.model.feature_dim);
  p.arch.extractor.adabn = cfg.model.adabn;
  p.arch.extractor.condbn = cfg.model.condbn;
  p.arch.extractor.gated = cfg.model.gated;
  p.arch.extractor.attention = cfg.model.attention;
  p.arch.extractor.embed_dim = cfg.embedding.dim;
  p.arch.extractor.gated_hidden = cfg.model.gated_hidden;
  p.arch.extractor.bn_eps = cfg.model.bn_eps;
  p.arch.extractor.bn_momentum = cfg.model.bn_momentum;

  p.arch.classifier.layer_widths.push_back(cfg.model.feature_dim);
  for (int w : cfg.model.classifier_hidden) p.arch.classifier.layer_widths.push_back(w);
  p.arch.classifier.layer_widths.push_back(cfg.family.num_classes);
  p.arch.classifier.head = OutputHead::softmax;

  p.arch.discriminator.layer_widths.push_back(cfg.model.feature_dim);
  for (int w : cfg.model.discriminator_hidden) p.arch.discriminator.layer_widths.push_back(w);
  p.arch.discriminator.layer_widths.push_back(1);
  p.arch.discriminator.head = OutputHead::sigmoid;

  p.arch.autoencoder.encoder.layer_widths.push_back(cfg.family.input_dim);
  for (int w : cfg.embedding.encoder_hidden) p.arch.autoencoder.encoder.layer_widths.push_back(w);
  p.arch.autoencoder.encoder.layer_widths.push_back(cfg.embedding.dim);
  p.arch.autoencoder.decoder.layer_widths.push_back(cfg.embedding.dim);
  for (auto it = cfg.embedding.encoder_hidden.rbegin(); it != cfg.embedding.encoder_hidden.rend();
       ++it) {
    p.arch.autoencoder.decoder.layer_widths.push_back(*it);
  }
  p.arch.autoencoder.decoder.layer_widths.push_back(cfg.family.input_dim);

  p.family = cfg.family;
  p.source = cfg.source_domain;
  p.target = cfg.target_domain;
  p.n_per_domain = cfg.data.n_per_domain;
  p.f_train = cfg.data.f_train;
  p.f_val = cfg.data.f_val;
  p.f_test = cfg.data.f_test;
  p.standardize = cfg.data.standardize;
  p.embed.epochs = cfg.embedding.epochs;
  p.embed.lr = cfg.embedding.lr;
  p.embed.batch_size = cfg.embedding.batch_size;
  p.embed.lambda_e = cfg.embedding.lambda_e;
  p.embed.joint_refine = cfg.embedding.joint_refine;
  p.meta.cfg = cfg.meta.cfg;
  p.meta.iterations = cfg.meta.iterations;
  p.meta.n_support = cfg.meta.n_support;
  p.meta.n_query = cfg.meta.n_query;
  p.adv = cfg.adversarial;
  p.toggles = cfg.ablation;
  p.seed = seed;
  return p;
}

void run_generate_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Paths paths{cfg.out_dir};
  ensure_dir(paths.data_dir());
  RegeneratedData d = regenerate_splits(cfg, seed, nullptr);
  write_labeled_csv(d.source.train, paths.dataset("source", Split::train));
  write_labeled_csv(d.source.val, paths.dataset("source", Split::val));
  write_labeled_csv(d.source.test, paths.dataset("source", Split::test));
  write_labeled_csv(d.target.train, paths.dataset("target", Split::train));
  write_labeled_csv(d.target.val, paths.dataset("target", Split::val));
  write_labeled_csv(d.target.test, paths.dataset("target", Split::test));
}

namespace {

void write_meta_trace(const std::vector<std::array<double, 3>>& rows, const std::string& path) {
  std::ostringstream os;
  os << "iteration,meta_loss,wall_s\n";
  for (const auto& r : rows) {
    os << static_cast<long long>(r[0]) << "," << fmt_g17(r[1]) << "," << fmt_g17(r[2]) << "\n";
  }
  write_text_atomic(path, os.str());
}

PipelineResult run_pipeline_with_trace(const ExperimentConfig& cfg, std::uint64_t seed,
                                       const PipelineToggles& toggles, const Paths& paths,
                                       bool write_artifacts) {
  PipelineConfig pc = make_pipeline_config(cfg, seed);
  pc.toggles = toggles;
  std::vector<std::array<double, 3>> trace_rows;
  const auto t0 = std::chrono::steady_clock::now();
  PipelineResult result = pretrain(pc, [&](int it, double loss) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace_rows.push_back({static_cast<double>(it), loss, wall});
  });
  if (write_artifacts) {
    ensure_dir(paths.out);
    write_train_log(result.state, paths.train_log());
    write_meta_trace(trace_rows, paths.meta_trace());
  }
  return result;
}

}  // namespace

void run_pretrain(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Paths paths{cfg.out_dir};
  ensure_dir(paths.out);
  PipelineResult result = run_pipeline_with_trace(cfg, seed, cfg.ablation, paths, true);
  save_state(result.state, paths.state_pretrain());
}

void run_meta_train(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Paths paths{cfg.out_dir};
  ensure_dir(paths.out);
  ExperimentConfig meta_only = cfg;
  meta_only.adversarial.epochs = 0;  // meta stage in isolation
  PipelineToggles t = cfg.ablation;
  t.meta = true;
  PipelineResult result = run_pipeline_with_trace(meta_only, seed, t, paths, true);
  save_state(result.state, paths.state_meta());
}

void run_adapt(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Paths paths{cfg.out_dir};
  TrainState st = load_state_or_throw(paths.state_pretrain());
  RegeneratedData d = regenerate_splits(cfg, seed, &st.scaler);
  LabeledSet labeled = labeled_subset_for_adapt(cfg, d.target.train, seed);
  TrainState adapted = fine_tune(st, labeled, cfg.fine_tune.steps, cfg.fine_tune.eta_f,
                                 cfg.fine_tune.eta_c, cfg.fine_tune.eta_e, cfg.embedding.lambda_e);
  save_state(adapted, paths.state_adapt());
}

namespace {

void write_predictions_csv(const TrainState& st, const LabeledSet& test, const std::string& path) {
  Tensor probs = predict_probs(st, test.inputs, test.domain_id);
  std::vector<int> preds = argmax_rows(probs);
  std::vector<int> truth = test.label_indices();
  std::ostringstream os;
  os << "index,truth,pred";
  for (int k = 0; k < test.num_classes(); ++k) os << ",p" << k;
  os << "\n";
  for (int r = 0; r < test.n(); ++r) {
    os << r << "," << truth[static_cast<std::size_t>(r)] << "," << preds[static_cast<std::size_t>(r)];
    for (int k = 0; k < test.num_classes(); ++k) os << "," << fmt_g17(probs.at(r, k));
    os << "\n";
  }
  write_text_atomic(path, os.str());
}

}  // namespace

void run_evaluate(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Paths paths{cfg.out_dir};
  const std::string model_path = preferred_state_path(paths);
  TrainState st = load_state_or_throw(model_path);
  RegeneratedData d = regenerate_splits(cfg, seed, &st.scaler);

  MetricsReport src = evaluate(st, d.source.test);
  MetricsReport tgt = evaluate(st, d.target.test);

  Json j;
  j["model"] = model_path;
  j["source"] = metrics_to_json(src);
  j["target"] = metrics_to_json(tgt);
  write_text_atomic(paths.evaluation(), j.dump(2) + "\n");
  write_predictions_csv(st, d.target.test, paths.predictions());
}

void run_robustness(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Paths paths{cfg.out_dir};
  const std::string model_path = preferred_state_path(paths);
  TrainState st = load_state_or_throw(model_path);
  RegeneratedData d = regenerate_splits(cfg, seed, &st.scaler);

  std::ostringstream os;
  os << "kind,level,accuracy,precision,recall,f1,auc_roc,n_samples\n";
  auto append = [&](const std::string& kind, const std::vector<std::pair<double, MetricsReport>>& rows) {
    for (const auto& [level, m] : rows) {
      os << kind << "," << fmt_g17(level) << "," << fmt_g17(m.accuracy) << ","
         << fmt_g17(m.precision) << "," << fmt_g17(m.recall) << "," << fmt_g17(m.f1) << ","
         << fmt_g17(m.auc_roc) << "," << m.n_samples << "\n";
    }
  };
  const PerturbKind attack_kind =
      cfg.attacks.kind == "pgd" ? PerturbKind::pgd : PerturbKind::fgsm;
  if (!cfg.attacks.grid.empty()) {
    append(cfg.attacks.kind, robustness_sweep(st, d.target.test, attack_kind, cfg.attacks.grid,
                                              cfg.attacks.pgd_steps, cfg.attacks.pgd_step_ratio,
                                              Rng::derive(seed, 40)));
  }
  if (!cfg.attacks.noise_grid.empty()) {
    append("noise", robustness_sweep(st, d.target.test, PerturbKind::noise, cfg.attacks.noise_grid,
                                     cfg.attacks.pgd_steps, cfg.attacks.pgd_step_ratio,
                                     Rng::derive(seed, 41)));
  }
  write_text_atomic(paths.robustness(), os.str());
}

std::vector<std::string> ablation_variants(const PipelineToggles& toggles,
                                           const std::vector<std::string>& restrict_to) {
  auto wanted = [&](const std::string& name) {
    if (restrict_to.empty()) return true;
    return std::find(restrict_to.begin(), restrict_to.end(), name) != restrict_to.end();
  };
  std::vector<std::string> variants = {"full"};
  if (toggles.meta && wanted("meta")) variants.push_back("no_meta");
  if (toggles.adversarial && wanted("adversarial")) variants.push_back("no_adversarial");
  if (toggles.embeddings && wanted("embeddings")) variants.push_back("no_embeddings");
  if (toggles.dynamic_adjust && wanted("dynamic_adjust")) variants.push_back("no_dynamic_adjust");
  if (toggles.attention && wanted("attention")) variants.push_back("no_attention");
  return variants;
}

PipelineToggles toggles_for_variant(const PipelineToggles& base, const std::string& variant) {
  PipelineToggles t = base;
  if (variant == "no_meta") t.meta = false;
  if (variant == "no_adversarial") t.adversarial = false;
  if (variant == "no_embeddings") t.embeddings = false;
  if (variant == "no_dynamic_adjust") t.dynamic_adjust = false;
  if (variant == "no_attention") t.attention = false;
  return t;
}

namespace {

Json run_single_variant(const ExperimentConfig& cfg, const std::string& variant,
                        std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineConfig pc = make_pipeline_config(cfg, seed);
  pc.toggles = toggles_for_variant(cfg.ablation, variant);
  PipelineResult result = pretrain(pc);
  TrainState st = std::move(result.state);
  if (cfg.fine_tune.steps > 0) {
    LabeledSet labeled = labeled_subset_for_adapt(cfg, result.target_splits.train, seed);
    st = fine_tune(st, labeled, cfg.fine_tune.steps, cfg.fine_tune.eta_f, cfg.fine_tune.eta_c,
                   cfg.fine_tune.eta_e, cfg.embedding.lambda_e);
  }
  MetricsReport src = evaluate(st, result.source_splits.test);
  MetricsReport tgt = evaluate(st, result.target_splits.test);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Json j;
  j["variant"] = variant;
  j["seed"] = seed;
  j["epochs"] = st.epoch;
  j["wall_s"] = wall;
  j["source"] = metrics_to_json(src);
  j["target"] = metrics_to_json(tgt);
  j["warnings"] = st.warnings;
  return j;
}

struct RunRecord {
  std::string variant;
  std::uint64_t seed = 0;
  Json payload;
};

std::vector<RunRecord> collect_runs(const Paths& paths) {
  std::vector<std::string> files;
  if (fs::exists(paths.runs_dir())) {
    for (const auto& entry : fs::directory_iterator(paths.runs_dir())) {
      if (entry.path().extension() == ".json") files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> runs;
  for (const auto& f : files) {
    Json j = Json::parse(read_text(f));
    RunRecord r;
    r.variant = j.at("variant").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.payload = std::move(j);
    runs.push_back(std::move(r));
  }
  std::sort(runs.begin(), runs.end(), [](const RunRecord& a, const RunRecord& b) {
    return a.variant != b.variant ? a.variant < b.variant : a.seed < b.seed;
  });
  return runs;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

void emit_report(const ExperimentConfig& cfg, const Paths& paths) {
  std::vector<RunRecord> runs = collect_runs(paths);
  if (runs.empty()) throw RunError("no completed runs under " + paths.runs_dir());

  char hash_buf[32];
  std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));

  // results.json: per-seed metrics and per-variant aggregates, no wall times
  Json results;
  results["version"] = kVersion;
  results["config_hash"] = hash_buf;
  Json variants = Json::object();
  std::vector<std::string> variant_order;
  for (const auto& r : runs) {
    if (std::find(variant_order.begin(), variant_order.end(), r.variant) == variant_order.end()) {
      variant_order.push_back(r.variant);
    }
  }
  for (const auto& name : variant_order) {
    Json vruns = Json::array();
    std::vector<double> accs, f1s, aucs;
    for (const auto& r : runs) {
      if (r.variant != name) continue;
      Json entry;
      entry["seed"] = r.seed;
      entry["epochs"] = r.payload.at("epochs");
      entry["source"] = r.payload.at("source");
      entry["target"] = r.payload.at("target");
      vruns.push_back(entry);
      accs.push_back(r.payload.at("target").at("accuracy").get<double>());
      f1s.push_back(r.payload.at("target").at("f1").get<double>());
      aucs.push_back(r.payload.at("target").at("auc_roc").get<double>());
    }
    auto [acc_m, acc_s] = mean_std(accs);
    auto [f1_m, f1_s] = mean_std(f1s);
    auto [auc_m, auc_s] = mean_std(aucs);
    Json v;
    v["runs"] = vruns;
    v["aggregate"] = {{"target_accuracy", {{"mean", acc_m}, {"std", acc_s}}},
                      {"target_f1", {{"mean", f1_m}, {"std", f1_s}}},
                      {"target_auc_roc", {{"mean", auc_m}, {"std", auc_s}}}};
    variants[name] = v;
  }
  results["variants"] = variants;
  write_text_atomic(paths.results(), results.dump(2) + "\n");

  // summary.csv: one row per variant x seed, sorted
  std::ostringstream sum;
  sum << "variant,seed,accuracy,f1,auc_roc,epochs,wall_s\n";
  for (const auto& r : runs) {
    const Json& t = r.payload.at("target");
    sum << r.variant << "," << r.seed << "," << fmt_g17(t.at("accuracy").get<double>()) << ","
        << fmt_g17(t.at("f1").get<double>()) << "," << fmt_g17(t.at("auc_roc").get<double>())
        << "," << r.payload.at("epochs").get<int>() << ","
        << fmt_g17(r.payload.at("wall_s").get<double>()) << "\n";
  }
  write_text_atomic(paths.summary(), sum.str());

  // manifest.json: every emitted file exactly once
  Json manifest;
  manifest["version"] = kVersion;
  manifest["config_hash"] = hash_buf;
  manifest["seeds"] = cfg.seeds;
  Json timings = Json::object();
  for (const auto& name : variant_order) {
    double total = 0.0;
    for (const auto& r : runs) {
      if (r.variant == name) total += r.payload.at("wall_s").get<double>();
    }
    timings[name] = total;
  }
  manifest["stage_timings_s"] = timings;
  Json files = Json::array();
  for (const auto& r : runs) files.push_back(paths.run_file(r.variant, r.seed));
  files.push_back(paths.results());
  files.push_back(paths.summary());
  files.push_back(paths.manifest());
  manifest["files"] = files;
  write_text_atomic(paths.manifest(), manifest.dump(2) + "\n");
}

}  // namespace

void run_ablate(const ExperimentConfig& cfg, int jobs, const std::vector<std::string>& restrict_to) {
  cfg.validate();
  Paths paths{cfg.out_dir};
  ensure_dir(paths.runs_dir());

  const std::vector<std::string> variants = ablation_variants(cfg.ablation, restrict_to);
  struct Task {
    std::string variant;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& v : variants) {
    for (std::uint64_t s : cfg.seeds) tasks.push_back({v, s});
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mu;
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size() || failed.load()) return;
      try {
        Json j = run_single_variant(cfg, tasks[i].variant, tasks[i].seed);
        write_text_atomic(paths.run_file(tasks[i].variant, tasks[i].seed), j.dump(2) + "\n");
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mu);
        failed.store(true);
        if (failure.empty()) failure = e.what();
      }
    }
  };

  const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) throw RunError("ablation run failed: " + failure);

  // comparison table: one row per variant
  std::vector<RunRecord> runs = collect_runs(paths);
  std::ostringstream os;
  os << "variant,n_seeds,target_accuracy_mean,target_accuracy_std\n";
  for (const auto& v : variants) {
    std::vector<double> accs;
    for (const auto& r : runs) {
      if (r.variant == v) accs.push_back(r.payload.at("target").at("accuracy").get<double>());
    }
    auto [m, s] = mean_std(accs);
    os << v << "," << accs.size() << "," << fmt_g17(m) << "," << fmt_g17(s) << "\n";
  }
  write_text_atomic(paths.ablation_table(), os.str());

  emit_report(cfg, paths);
}

void run_report(const ExperimentConfig& cfg) {
  cfg.validate();
  Paths paths{cfg.out_dir};
  emit_report(cfg, paths);
}

}  // namespace metadapt
