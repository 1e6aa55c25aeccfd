#include "metadapt/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metadapt/attacks.hpp"
#include "metadapt/autodiff.hpp"
#include "metadapt/objectives.hpp"
#include "metadapt/ops.hpp"
#include "metadapt/optim.hpp"
#include "metadapt/rng.hpp"

namespace metadapt {

namespace {

LabeledSet take_rows(const LabeledSet& set, const std::vector<int>& order, int start, int stop) {
  const int d = set.dim(), k = set.num_classes();
  const int m = stop - start;
  std::vector<double> xs(static_cast<std::size_t>(m) * d);
  std::vector<double> ys(static_cast<std::size_t>(m) * k);
  for (int r = 0; r < m; ++r) {
    const int src_row = order[static_cast<std::size_t>(start + r)];
    for (int c = 0; c < d; ++c) xs[static_cast<std::size_t>(r) * d + c] = set.inputs.at(src_row, c);
    for (int c = 0; c < k; ++c) ys[static_cast<std::size_t>(r) * k + c] = set.labels.at(src_row, c);
  }
  LabeledSet out;
  out.inputs = Tensor::from_data_unchecked({m, d}, std::move(xs));
  out.labels = Tensor::from_data_unchecked({m, k}, std::move(ys));
  out.domain_id = set.domain_id;
  out.split = set.split;
  return out;
}

double batch_accuracy(const Tensor& probs, const LabeledSet& batch) {
  std::vector<int> preds = argmax_rows(probs);
  std::vector<int> truth = batch.label_indices();
  int correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == truth[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

constexpr double kLdHealthyLo = 0.2;
constexpr double kLdHealthyHi = 2.5;
constexpr int kLdExcursionEpochs = 5;

}  // namespace

void ModelArch::validate() const {
  extractor.validate();
  classifier.validate();
  discriminator.validate();
  autoencoder.validate();
  const int feat = extractor.mlp.output_width();
  if (classifier.input_width() != feat) {
    throw std::invalid_argument("ModelArch: classifier input must match feature width");
  }
  if (discriminator.input_width() != feat) {
    throw std::invalid_argument("ModelArch: discriminator input must match feature width");
  }
  if (discriminator.output_width() != 1) {
    throw std::invalid_argument("ModelArch: discriminator must have a single output");
  }
  if (extractor.uses_embedding() && autoencoder.code_dim() != extractor.embed_dim) {
    throw std::invalid_argument("ModelArch: autoencoder code width must match embed_dim");
  }
}

void AdvConfig::validate() const {
  if (eta_d < 0 || eta_f < 0 || eta_c < 0) {
    throw std::invalid_argument("AdvConfig: step sizes must be non-negative");
  }
  if (lambda_adv < 0) throw std::invalid_argument("AdvConfig: lambda_adv must be non-negative");
  if (d_steps_per_f_step < 1) throw std::invalid_argument("AdvConfig: d_steps_per_f_step must be >= 1");
  if (epochs < 0) throw std::invalid_argument("AdvConfig: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("AdvConfig: batch_size must be >= 1");
}

TrainState make_initial_state(const ModelArch& arch, std::uint64_t seed) {
  arch.validate();
  TrainState st;
  st.arch = arch;
  st.f = init_extractor(arch.extractor, Rng::derive(seed, 11));
  st.c = init_params(arch.classifier, Rng::derive(seed, 12));
  st.d = init_params(arch.discriminator, Rng::derive(seed, 13));
  st.e = init_autoencoder(arch.autoencoder, Rng::derive(seed, 14));
  return st;
}

Tensor state_embedding_row(const TrainState& st, const std::string& domain) {
  if (st.embeddings.empty()) return Tensor::zeros({1, st.arch.extractor.embed_dim});
  return st.embeddings.at(domain).row();
}

Tensor predict_probs(const TrainState& st, const Tensor& x, const std::string& domain) {
  Tensor e = state_embedding_row(st, domain);
  // eval mode only reads the stats table
  auto& stats = const_cast<StatsTable&>(st.bn_stats);
  Tensor h = conditioned_extractor_forward(st.arch.extractor, st.f, x, e, stats, domain,
                                           BnMode::eval);
  return forward_classifier(st.arch.classifier, st.c, h);
}

void adversarial_epoch(TrainState& st, const LabeledSet& src, const LabeledSet& tgt,
                       const AdvConfig& cfg, std::uint64_t epoch_seed, bool train_discriminator) {
  cfg.validate();
  if (src.dim() != tgt.dim()) {
    throw std::invalid_argument("adversarial_epoch: source and target widths differ");
  }

  Rng rng(epoch_seed);
  std::vector<int> src_order(static_cast<std::size_t>(src.n()));
  std::vector<int> tgt_order(static_cast<std::size_t>(tgt.n()));
  for (int i = 0; i < src.n(); ++i) src_order[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < tgt.n(); ++i) tgt_order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(src_order);
  rng.shuffle(tgt_order);

  const int nb = std::min(src.n(), tgt.n()) / cfg.batch_size;
  const int pairs = std::max(nb, 1);
  const Tensor e_src = state_embedding_row(st, src.domain_id);
  const Tensor e_tgt = state_embedding_row(st, tgt.domain_id);

  double sum_lc = 0, sum_ld = 0, sum_lf = 0, sum_dacc = 0, sum_sacc = 0;

  for (int b = 0; b < pairs; ++b) {
    const int s0 = b * cfg.batch_size;
    const int s1 = std::min(s0 + cfg.batch_size, std::min(src.n(), tgt.n()));
    LabeledSet sb = take_rows(src, src_order, s0, s1);
    LabeledSet tb = take_rows(tgt, tgt_order, s0, s1);

    // (a) discriminator steps, extractor frozen
    double batch_ld = 0.0, batch_dacc = 0.0;
    for (int dstep = 0; dstep < cfg.d_steps_per_f_step; ++dstep) {
      Tensor h_s = conditioned_extractor_forward(st.arch.extractor, st.f, sb.inputs, e_src,
                                                 st.bn_stats, src.domain_id, BnMode::train);
      Tensor h_t = conditioned_extractor_forward(st.arch.extractor, st.f, tb.inputs, e_tgt,
                                                 st.bn_stats, tgt.domain_id, BnMode::train);
      Tape tape;
      ParamSet d_tracked = attach(tape, st.d);
      Tensor d_s = forward_discriminator(st.arch.discriminator, d_tracked, h_s);
      Tensor d_t = forward_discriminator(st.arch.discriminator, d_tracked, h_t);
      LossValue l_d = discriminator_loss(d_s, d_t);
      if (!std::isfinite(l_d.scalar())) {
        throw std::runtime_error("adversarial_epoch: non-finite discriminator loss");
      }
      batch_ld = l_d.scalar();
      int hits = 0;
      for (int r = 0; r < d_s.rows(); ++r) hits += d_s.at(r, 0) >= 0.5 ? 1 : 0;
      for (int r = 0; r < d_t.rows(); ++r) hits += d_t.at(r, 0) < 0.5 ? 1 : 0;
      batch_dacc = static_cast<double>(hits) / static_cast<double>(d_s.rows() + d_t.rows());
      if (train_discriminator && cfg.eta_d != 0.0) {
        ParamSet grads = backward(l_d.value, d_tracked);
        st.d = sgd_step(st.d, grads, cfg.eta_d);
      }
    }

    // (b) one joint extractor/classifier step, discriminator frozen
    Tape tape;
    ParamSet f_tracked = attach(tape, st.f);
    ParamSet c_tracked = attach(tape, st.c);
    Tensor h_s = conditioned_extractor_forward(st.arch.extractor, f_tracked, sb.inputs, e_src,
                                               st.bn_stats, src.domain_id, BnMode::train);
    Tensor h_t = conditioned_extractor_forward(st.arch.extractor, f_tracked, tb.inputs, e_tgt,
                                               st.bn_stats, tgt.domain_id, BnMode::train);
    Tensor probs = forward_classifier(st.arch.classifier, c_tracked, h_s);
    LossValue l_c = cross_entropy(probs, sb.labels);
    Tensor d_s = forward_discriminator(st.arch.discriminator, st.d, h_s);
    Tensor d_t = forward_discriminator(st.arch.discriminator, st.d, h_t);
    LossValue l_f = adversarial_feature_loss(d_s, d_t);
    LossValue total = total_loss(l_c, l_f, cfg.lambda_adv);
    if (!std::isfinite(total.scalar())) {
      throw std::runtime_error("adversarial_epoch: non-finite training loss");
    }
    const ParamSet* sets[2] = {&f_tracked, &c_tracked};
    std::vector<ParamSet> grads = backward_multi(total.value, sets);
    if (cfg.eta_f != 0.0) st.f = sgd_step(st.f, grads[0], cfg.eta_f);
    if (cfg.eta_c != 0.0) st.c = sgd_step(st.c, grads[1], cfg.eta_c);

    sum_lc += l_c.scalar();
    sum_ld += batch_ld;
    sum_lf += l_f.scalar();
    sum_dacc += batch_dacc;
    sum_sacc += batch_accuracy(probs, sb);
  }

  EpochLogRow row;
  row.epoch = st.epoch;
  row.l_c = sum_lc / pairs;
  row.l_d = sum_ld / pairs;
  row.l_f = sum_lf / pairs;
  row.disc_acc = sum_dacc / pairs;
  row.src_acc = sum_sacc / pairs;
  st.log.push_back(row);
  st.epoch += 1;

  if (row.l_d < kLdHealthyLo || row.l_d > kLdHealthyHi) {
    st.ld_excursion_run += 1;
    if (st.ld_excursion_run == kLdExcursionEpochs) {
      st.warnings.push_back("discriminator loss outside [0.2, 2.5] for " +
                            std::to_string(kLdExcursionEpochs) + " consecutive epochs at epoch " +
                            std::to_string(st.epoch - 1));
    }
  } else {
    st.ld_excursion_run = 0;
  }
}

ExtractorArch effective_extractor(const ExtractorArch& base, const PipelineToggles& t) {
  ExtractorArch arch = base;
  if (!t.dynamic_adjust) {
    arch.adabn = false;
    arch.condbn = false;
    arch.gated = false;
  }
  if (!t.attention) arch.attention = false;
  return arch;
}

namespace {

// merged parameter view for the meta stage: extractor under "F.",
// classifier under "C."
ParamSet merge_fc(const ParamSet& f, const ParamSet& c) {
  ParamSet merged;
  for (const auto& [k, v] : f) merged.insert("F." + k, v);
  for (const auto& [k, v] : c) merged.insert("C." + k, v);
  return merged;
}

void unmerge_fc(const ParamSet& merged, ParamSet& f, ParamSet& c) {
  for (const auto& [k, v] : merged) {
    if (k.rfind("F.", 0) == 0) {
      f.set(k.substr(2), v.detached());
    } else {
      c.set(k.substr(2), v.detached());
    }
  }
}

}  // namespace

PipelineResult pretrain(const PipelineConfig& cfg,
                        const std::function<void(int, double)>& on_meta_iter) {
  ModelArch arch = cfg.arch;
  arch.extractor = effective_extractor(cfg.arch.extractor, cfg.toggles);
  arch.validate();
  cfg.adv.validate();

  PipelineResult out;
  out.state = make_initial_state(arch, Rng::derive(cfg.seed, 1));
  TrainState& st = out.state;

  // data
  LabeledSet src_all = generate_domain(cfg.family, cfg.source, cfg.n_per_domain,
                                       Rng::derive(cfg.seed, 2), cfg.source_id);
  LabeledSet tgt_all = generate_domain(cfg.family, cfg.target, cfg.n_per_domain,
                                       Rng::derive(cfg.seed, 3), cfg.target_id);
  out.source_splits = split(src_all, cfg.f_train, cfg.f_val, cfg.f_test, Rng::derive(cfg.seed, 4));
  out.target_splits = split(tgt_all, cfg.f_train, cfg.f_val, cfg.f_test, Rng::derive(cfg.seed, 5));
  if (cfg.standardize) {
    st.scaler.fit(out.source_splits.train.inputs);
    out.source_splits.train = st.scaler.apply(out.source_splits.train);
    out.source_splits.val = st.scaler.apply(out.source_splits.val);
    out.source_splits.test = st.scaler.apply(out.source_splits.test);
    out.target_splits.train = st.scaler.apply(out.target_splits.train);
    out.target_splits.val = st.scaler.apply(out.target_splits.val);
    out.target_splits.test = st.scaler.apply(out.target_splits.test);
  }
  const LabeledSet& src_train = out.source_splits.train;
  const LabeledSet& tgt_train = out.target_splits.train;

  // stage 1: domain embeddings
  if (cfg.toggles.embeddings) {
    const int n_rows = src_train.n() + tgt_train.n();
    std::vector<double> all;
    all.reserve(static_cast<std::size_t>(n_rows) * src_train.dim());
    for (const LabeledSet* s : {&src_train, &tgt_train}) {
      const auto& d = s->inputs.data();
      all.insert(all.end(), d.begin(), d.end());
    }
    Tensor pooled = Tensor::from_data_unchecked({n_rows, src_train.dim()}, std::move(all));
    train_autoencoder(arch.autoencoder, st.e, pooled, cfg.embed.epochs, cfg.embed.lr,
                      Rng::derive(cfg.seed, 6), cfg.embed.batch_size);
    if (cfg.embed.joint_refine && cfg.embed.lambda_e > 0.0) {
      // second phase: tie embeddings to the task through the frozen networks
      const Tensor xs = src_train.inputs;
      const Tensor ys = src_train.labels;
      StatsTable scratch;
      EmbeddingTaskHook hook = [&](const Tensor& e_row) {
        Tensor h = conditioned_extractor_forward(arch.extractor, st.f, xs, e_row, scratch,
                                                 cfg.source_id, BnMode::train);
        Tensor probs = forward_classifier(arch.classifier, st.c, h);
        return cross_entropy(probs, ys).value;
      };
      train_autoencoder(arch.autoencoder, st.e, xs, cfg.embed.epochs, cfg.embed.lr,
                        Rng::derive(cfg.seed, 7), cfg.embed.batch_size, hook, cfg.embed.lambda_e);
      st.embeddings.provenance = EmbeddingProvenance::joint;
    }
    st.embeddings.dim = arch.extractor.embed_dim;
    st.embeddings.put(domain_embedding(arch.autoencoder, st.e, src_train.inputs, cfg.source_id));
    st.embeddings.put(domain_embedding(arch.autoencoder, st.e, tgt_train.inputs, cfg.target_id));
  }

  // stage 2: episodic meta-training of extractor + classifier
  if (cfg.toggles.meta && cfg.meta.iterations > 0) {
    const Tensor e_src = state_embedding_row(st, cfg.source_id);
    StatsTable scratch;  // episode tasks are not a persistent domain
    TaskLoss loss = [&](const ParamSet& merged, const EpisodeBatch& batch) {
      ParamSet fview, cview;
      for (const auto& [k, v] : merged) {
        if (k.rfind("F.", 0) == 0) {
          fview.insert(k.substr(2), v);
        } else {
          cview.insert(k.substr(2), v);
        }
      }
      Tensor h = conditioned_extractor_forward(arch.extractor, fview, batch.x, e_src, scratch,
                                               "episode", BnMode::train);
      Tensor probs = forward_classifier(arch.classifier, cview, h);
      return cross_entropy(probs, batch.y).value;
    };
    // episodes live in the same input space as the standardized splits
    TaskSampler sampler(
        [&](std::uint64_t ep_seed) {
          Episode ep = sample_episode(cfg.family, ep_seed, cfg.meta.n_support, cfg.meta.n_query);
          if (cfg.standardize) {
            ep.support.x = st.scaler.apply(ep.support.x);
            ep.query.x = st.scaler.apply(ep.query.x);
          }
          return ep;
        },
        Rng::derive(cfg.seed, 8));
    ParamSet merged = merge_fc(st.f, st.c);
    merged = meta_train(merged, sampler, loss, cfg.meta.cfg, cfg.meta.iterations,
                        &out.meta_trace, on_meta_iter);
    unmerge_fc(merged, st.f, st.c);
  }

  // stage 3: adversarial alignment (supervised-only when the toggle is off)
  AdvConfig adv = cfg.adv;
  if (!cfg.toggles.adversarial) adv.lambda_adv = 0.0;
  for (int epoch = 0; epoch < adv.epochs; ++epoch) {
    adversarial_epoch(st, src_train, tgt_train, adv,
                      Rng::derive(cfg.seed, 100 + static_cast<std::uint64_t>(epoch)),
                      cfg.toggles.adversarial);
  }

  return out;
}

TrainState fine_tune(const TrainState& st, const LabeledSet& tgt_labeled, int steps, double eta_f,
                     double eta_c, double eta_e, double lambda_e) {
  if (tgt_labeled.n() < 1) throw std::invalid_argument("fine_tune: empty target set");
  TrainState out = st;
  const std::string& domain = tgt_labeled.domain_id;

  for (int step = 0; step < steps; ++step) {
    Tensor e_row = state_embedding_row(out, domain);
    Tape tape;
    ParamSet f_tracked = attach(tape, out.f);
    ParamSet c_tracked = attach(tape, out.c);
    Tensor h = conditioned_extractor_forward(out.arch.extractor, f_tracked, tgt_labeled.inputs,
                                             e_row, out.bn_stats, domain, BnMode::train);
    Tensor probs = forward_classifier(out.arch.classifier, c_tracked, h);
    LossValue l_task = cross_entropy(probs, tgt_labeled.labels);
    if (!std::isfinite(l_task.scalar())) {
      throw std::runtime_error("fine_tune: non-finite task loss at step " + std::to_string(step));
    }
    out.fine_tune_loss.push_back(l_task.scalar());
    const ParamSet* sets[2] = {&f_tracked, &c_tracked};
    std::vector<ParamSet> grads = backward_multi(l_task.value, sets);
    if (eta_f != 0.0) out.f = sgd_step(out.f, grads[0], eta_f);
    if (eta_c != 0.0) out.c = sgd_step(out.c, grads[1], eta_c);

    if (eta_e != 0.0 && !out.embeddings.empty() && out.arch.extractor.uses_embedding()) {
      // embedding refresh: the reconstruction term does not depend on the
      // aggregated embedding, so the gradient is lambda_e * d(L_task)/d(E_D)
      Tape etape;
      ParamSet eparam;
      eparam.insert("e", leaf(etape, state_embedding_row(out, domain)));
      Tensor he = conditioned_extractor_forward(out.arch.extractor, out.f, tgt_labeled.inputs,
                                                eparam.at("e"), out.bn_stats, domain,
                                                BnMode::train);
      Tensor eprobs = forward_classifier(out.arch.classifier, out.c, he);
      Tensor task = cross_entropy(eprobs, tgt_labeled.labels).value;
      ParamSet egrad = backward(scale(task, lambda_e), eparam);
      DomainEmbedding updated = out.embeddings.at(domain);
      const auto& g = egrad.at("e").data();
      for (std::size_t i = 0; i < updated.values.size(); ++i) updated.values[i] -= eta_e * g[i];
      out.embeddings.put(std::move(updated));
    }
  }
  return out;
}

MetricsReport evaluate(const TrainState& st, const LabeledSet& test) {
  if (test.n() < 1) throw std::invalid_argument("evaluate: empty test set");
  Tensor probs = predict_probs(st, test.inputs, test.domain_id);
  std::vector<int> preds = argmax_rows(probs);
  std::vector<int> truth = test.label_indices();
  ConfusionCounts counts = confusion(preds, truth, test.num_classes());
  return metrics(counts, probs, truth);
}

double probe_discriminator_accuracy(const Tensor& h_src, const Tensor& h_tgt, std::uint64_t seed,
                                    int epochs, double lr) {
  if (h_src.cols() != h_tgt.cols()) throw_shape_error("probe_discriminator_accuracy", h_src, h_tgt);
  const int d = h_src.cols();
  const int n = h_src.rows() + h_tgt.rows();

  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(n) * d);
  xs.insert(xs.end(), h_src.data().begin(), h_src.data().end());
  xs.insert(xs.end(), h_tgt.data().begin(), h_tgt.data().end());
  std::vector<char> is_src(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < h_src.rows(); ++i) is_src[static_cast<std::size_t>(i)] = 1;

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const int n_train = (n * 7) / 10;

  auto build = [&](int start, int stop) {
    const int m = stop - start;
    std::vector<double> bx(static_cast<std::size_t>(m) * d);
    std::vector<double> by(static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r) {
      const int src_row = order[static_cast<std::size_t>(start + r)];
      for (int c = 0; c < d; ++c) {
        bx[static_cast<std::size_t>(r) * d + c] = xs[static_cast<std::size_t>(src_row) * d + c];
      }
      by[static_cast<std::size_t>(r)] = is_src[static_cast<std::size_t>(src_row)] ? 1.0 : 0.0;
    }
    return std::pair<Tensor, Tensor>(Tensor::from_data_unchecked({m, d}, std::move(bx)),
                                     Tensor::from_data_unchecked({m, 1}, std::move(by)));
  };
  auto [x_train, y_train] = build(0, n_train);
  auto [x_test, y_test] = build(n_train, n);

  MlpSpec spec;
  spec.layer_widths = {d, 16, 16, 1};
  spec.head = OutputHead::sigmoid;
  ParamSet params = init_params(spec, Rng::derive(seed, 1));
  AdamState adam;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Tape tape;
    ParamSet tracked = attach(tape, params);
    Tensor p = clamp(mlp_forward(spec, tracked, x_train), 1e-12, 1.0 - 1e-12);
    // binary cross-entropy on the source-vs-target label
    Tensor loss = neg(mean_all(add(mul(y_train, log(p)),
                                   mul(add_scalar(neg(y_train), 1.0),
                                       log(add_scalar(neg(p), 1.0))))));
    ParamSet grads = backward(loss, tracked);
    params = adam.step(params, grads, lr);
  }

  Tensor p = mlp_forward(spec, params, x_test);
  int hits = 0;
  for (int r = 0; r < p.rows(); ++r) {
    const bool pred_src = p.at(r, 0) >= 0.5;
    const bool truth_src = y_test.at(r, 0) == 1.0;
    hits += pred_src == truth_src ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(p.rows());
}

std::vector<std::pair<double, MetricsReport>> robustness_sweep(
    const TrainState& st, const LabeledSet& test, PerturbKind kind,
    const std::vector<double>& grid, int pgd_steps, double pgd_step_ratio,
    std::uint64_t noise_seed) {
  auto eval_at = [&](double level) {
    if (level == 0.0) return evaluate(st, test);
    LabeledSet perturbed = test;
    if (kind == PerturbKind::noise) {
      perturbed = inject_noise(test, level, 0.0, noise_seed);
    } else {
      InputLoss loss = [&](const Tensor& x_tracked) {
        Tensor e = state_embedding_row(st, test.domain_id);
        auto& stats = const_cast<StatsTable&>(st.bn_stats);
        Tensor h = conditioned_extractor_forward(st.arch.extractor, st.f, x_tracked, e, stats,
                                                 test.domain_id, BnMode::eval);
        Tensor probs = forward_classifier(st.arch.classifier, st.c, h);
        return cross_entropy(probs, test.labels).value;
      };
      if (kind == PerturbKind::fgsm) {
        perturbed.inputs = fgsm(loss, test.inputs, level);
      } else {
        AttackSpec spec;
        spec.kind = AttackSpec::Kind::pgd;
        spec.epsilon = level;
        spec.pgd_steps = pgd_steps;
        spec.pgd_step_size = level * pgd_step_ratio;
        perturbed.inputs = pgd(loss, test.inputs, spec);
      }
    }
    return evaluate(st, perturbed);
  };
  return robustness_curve(eval_at, grid);
}

}  // namespace metadapt
