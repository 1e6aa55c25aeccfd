#include "metadapt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "metadapt/rng.hpp"

namespace metadapt {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> class_mean(const TaskFamilySpec& fam, int k) {
  // class centers on a circle in the first two coordinates
  std::vector<double> m(static_cast<std::size_t>(fam.input_dim), 0.0);
  const double angle = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(fam.num_classes);
  m[0] = fam.mean_radius * std::cos(angle);
  if (fam.input_dim > 1) m[1] = fam.mean_radius * std::sin(angle);
  return m;
}

// arc center point for two_arcs at parameter t in [0, pi]
std::vector<double> arc_point(const TaskFamilySpec& fam, int k, double t) {
  std::vector<double> p(static_cast<std::size_t>(fam.input_dim), 0.0);
  const double r = fam.mean_radius;
  if (k == 0) {
    p[0] = r * std::cos(t);
    p[1] = r * std::sin(t);
  } else {
    p[0] = r * (1.0 - std::cos(t));
    p[1] = r * (0.5 - std::sin(t));
  }
  return p;
}

void apply_transform(const DomainSpec& dom, std::vector<double>& x) {
  if (x.size() >= 2) {
    const double c = std::cos(dom.rotation), s = std::sin(dom.rotation);
    const double x0 = x[0], x1 = x[1];
    x[0] = c * x0 - s * x1;
    x[1] = s * x0 + c * x1;
  }
  for (auto& v : x) v *= dom.scale;
  for (std::size_t i = 0; i < dom.translation.size() && i < x.size(); ++i) {
    x[i] += dom.translation[i];
  }
}

int flip_label(int label, int num_classes, Rng& rng) {
  int other = rng.uniform_int(num_classes - 1);
  if (other >= label) ++other;
  return other;
}

Tensor one_hot(const std::vector<int>& labels, int num_classes) {
  const int n = static_cast<int>(labels.size());
  std::vector<double> d(static_cast<std::size_t>(n) * num_classes, 0.0);
  for (int i = 0; i < n; ++i) {
    d[static_cast<std::size_t>(i) * num_classes + labels[static_cast<std::size_t>(i)]] = 1.0;
  }
  return Tensor::from_data_unchecked({n, num_classes}, std::move(d));
}

LabeledSet subset(const LabeledSet& set, const std::vector<int>& idx, Split tag) {
  const int d = set.dim(), k = set.num_classes();
  std::vector<double> xs(idx.size() * static_cast<std::size_t>(d));
  std::vector<double> ys(idx.size() * static_cast<std::size_t>(k));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (int c = 0; c < d; ++c) xs[r * static_cast<std::size_t>(d) + c] = set.inputs.at(idx[r], c);
    for (int c = 0; c < k; ++c) ys[r * static_cast<std::size_t>(k) + c] = set.labels.at(idx[r], c);
  }
  LabeledSet out;
  out.inputs = Tensor::from_data_unchecked({static_cast<int>(idx.size()), d}, std::move(xs));
  out.labels = Tensor::from_data_unchecked({static_cast<int>(idx.size()), k}, std::move(ys));
  out.domain_id = set.domain_id;
  out.split = tag;
  return out;
}

}  // namespace

void DomainSpec::validate(int input_dim) const {
  if (scale <= 0.0) throw std::invalid_argument("DomainSpec: scale must be positive");
  if (noise < 0.0) throw std::invalid_argument("DomainSpec: noise must be non-negative");
  if (!translation.empty() && static_cast<int>(translation.size()) != input_dim) {
    throw std::invalid_argument("DomainSpec: translation length must match input_dim");
  }
}

void TaskFamilySpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("TaskFamilySpec: num_classes must be >= 2");
  if (input_dim < 2) throw std::invalid_argument("TaskFamilySpec: input_dim must be >= 2");
  if (mean_radius <= 0.0) throw std::invalid_argument("TaskFamilySpec: mean_radius must be positive");
  if (class_std < 0.0) throw std::invalid_argument("TaskFamilySpec: class_std must be non-negative");
  if (label_flip < 0.0 || label_flip >= 0.5) {
    throw std::invalid_argument("TaskFamilySpec: label_flip must be in [0, 0.5)");
  }
  if (family == TaskFamily::two_arcs && num_classes != 2) {
    throw std::invalid_argument("TaskFamilySpec: two_arcs supports exactly 2 classes");
  }
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::vector<int> LabeledSet::label_indices() const {
  std::vector<int> out(static_cast<std::size_t>(n()));
  for (int r = 0; r < n(); ++r) {
    for (int c = 0; c < num_classes(); ++c) {
      if (labels.at(r, c) == 1.0) {
        out[static_cast<std::size_t>(r)] = c;
        break;
      }
    }
  }
  return out;
}

LabeledSet generate_domain(const TaskFamilySpec& fam, const DomainSpec& dom, int n,
                           std::uint64_t seed, const std::string& domain_id) {
  fam.validate();
  dom.validate(fam.input_dim);
  if (n < fam.num_classes) {
    throw std::invalid_argument("generate_domain: need at least num_classes samples");
  }

  Rng rng(seed);
  const int d = fam.input_dim;
  std::vector<double> xs(static_cast<std::size_t>(n) * d);
  std::vector<int> labels(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    const int k = rng.uniform_int(fam.num_classes);
    std::vector<double> x;
    if (fam.family == TaskFamily::gaussian_blobs) {
      x = class_mean(fam, k);
      for (int c = 0; c < d; ++c) x[static_cast<std::size_t>(c)] += rng.normal(0.0, fam.class_std);
    } else {
      const double t = rng.uniform(0.0, kPi);
      x = arc_point(fam, k, t);
      for (int c = 0; c < d; ++c) x[static_cast<std::size_t>(c)] += rng.normal(0.0, fam.class_std);
    }
    apply_transform(dom, x);
    if (dom.noise > 0.0) {
      for (int c = 0; c < d; ++c) x[static_cast<std::size_t>(c)] += rng.normal(0.0, dom.noise);
    }
    int label = k;
    if (fam.label_flip > 0.0 && rng.uniform() < fam.label_flip) {
      label = flip_label(label, fam.num_classes, rng);
    }
    for (int c = 0; c < d; ++c) xs[static_cast<std::size_t>(i) * d + c] = x[static_cast<std::size_t>(c)];
    labels[static_cast<std::size_t>(i)] = label;
  }

  LabeledSet out;
  out.inputs = Tensor::from_data_unchecked({n, d}, std::move(xs));
  out.labels = one_hot(labels, fam.num_classes);
  out.domain_id = domain_id;
  out.split = Split::train;
  return out;
}

BayesEstimate bayes_accuracy(const TaskFamilySpec& fam, const DomainSpec& dom, int n_mc,
                             std::uint64_t seed) {
  fam.validate();
  dom.validate(fam.input_dim);
  if (n_mc < 1) throw std::invalid_argument("bayes_accuracy: n_mc must be >= 1");

  Rng rng(seed);
  const int d = fam.input_dim;
  long long correct = 0;

  if (fam.family == TaskFamily::gaussian_blobs) {
    // transformed class means; covariance stays isotropic under the affine
    // map, so the Bayes rule is nearest transformed mean
    std::vector<std::vector<double>> means;
    for (int k = 0; k < fam.num_classes; ++k) {
      std::vector<double> m = class_mean(fam, k);
      apply_transform(dom, m);
      means.push_back(std::move(m));
    }
    for (int i = 0; i < n_mc; ++i) {
      const int k = rng.uniform_int(fam.num_classes);
      std::vector<double> x = class_mean(fam, k);
      for (int c = 0; c < d; ++c) x[static_cast<std::size_t>(c)] += rng.normal(0.0, fam.class_std);
      apply_transform(dom, x);
      if (dom.noise > 0.0) {
        for (int c = 0; c < d; ++c) x[static_cast<std::size_t>(c)] += rng.normal(0.0, dom.noise);
      }
      int best = 0;
      double best_d2 = 0.0;
      for (int j = 0; j < fam.num_classes; ++j) {
        double d2 = 0.0;
        for (int c = 0; c < d; ++c) {
          const double diff = x[static_cast<std::size_t>(c)] - means[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
          d2 += diff * diff;
        }
        if (j == 0 || d2 < best_d2) {
          best_d2 = d2;
          best = j;
        }
      }
      if (best == k) ++correct;
    }
  } else {
    // nearest-manifold approximation over densely sampled arc points
    constexpr int kArcSamples = 256;
    std::vector<std::vector<double>> arc0, arc1;
    for (int s = 0; s < kArcSamples; ++s) {
      const double t = kPi * static_cast<double>(s) / (kArcSamples - 1);
      std::vector<double> p0 = arc_point(fam, 0, t);
      std::vector<double> p1 = arc_point(fam, 1, t);
      apply_transform(dom, p0);
      apply_transform(dom, p1);
      arc0.push_back(std::move(p0));
      arc1.push_back(std::move(p1));
    }
    auto min_dist2 = [d](const std::vector<std::vector<double>>& arc, const std::vector<double>& x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : arc) {
        double d2 = 0.0;
        for (int c = 0; c < d; ++c) {
          const double diff = x[static_cast<std::size_t>(c)] - p[static_cast<std::size_t>(c)];
          d2 += diff * diff;
        }
        best = std::min(best, d2);
      }
      return best;
    };
    for (int i = 0; i < n_mc; ++i) {
      const int k = rng.uniform_int(2);
      const double t = rng.uniform(0.0, kPi);
      std::vector<double> x = arc_point(fam, k, t);
      for (int c = 0; c < d; ++c) x[static_cast<std::size_t>(c)] += rng.normal(0.0, fam.class_std);
      apply_transform(dom, x);
      if (dom.noise > 0.0) {
        for (int c = 0; c < d; ++c) x[static_cast<std::size_t>(c)] += rng.normal(0.0, dom.noise);
      }
      const int pred = min_dist2(arc0, x) <= min_dist2(arc1, x) ? 0 : 1;
      if (pred == k) ++correct;
    }
  }

  BayesEstimate est;
  est.accuracy = static_cast<double>(correct) / static_cast<double>(n_mc);
  est.std_error = std::sqrt(est.accuracy * (1.0 - est.accuracy) / static_cast<double>(n_mc));
  return est;
}

SplitSets split(const LabeledSet& set, double f_train, double f_val, double f_test,
                std::uint64_t seed) {
  if (f_train <= 0.0 || f_val <= 0.0 || f_test <= 0.0) {
    throw std::invalid_argument("split: fractions must be positive");
  }
  if (std::abs(f_train + f_val + f_test - 1.0) > 1e-9) {
    throw std::invalid_argument("split: fractions must sum to 1");
  }
  const int n = set.n();
  const int n_val = static_cast<int>(std::floor(f_val * n));
  const int n_test = static_cast<int>(std::floor(f_test * n));
  const int n_train = n - n_val - n_test;
  if (n_train <= 0 || n_val <= 0 || n_test <= 0) {
    throw std::invalid_argument("split: too few rows for the requested fractions");
  }

  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(idx);

  SplitSets out;
  out.train = subset(set, {idx.begin(), idx.begin() + n_train}, Split::train);
  out.val = subset(set, {idx.begin() + n_train, idx.begin() + n_train + n_val}, Split::val);
  out.test = subset(set, {idx.begin() + n_train + n_val, idx.end()}, Split::test);
  return out;
}

Episode sample_episode(const TaskFamilySpec& fam, std::uint64_t seed, int n_support, int n_query) {
  fam.validate();
  if (n_support < 1 || n_query < 1) {
    throw std::invalid_argument("sample_episode: counts must be >= 1");
  }
  Rng rng(seed);
  DomainSpec task_dom;
  task_dom.rotation = rng.uniform(0.0, 2.0 * kPi);  // fresh task = rotated geometry

  LabeledSet all = generate_domain(fam, task_dom, n_support + n_query, rng.next_u64(), "task");
  std::vector<int> sup_idx, qry_idx;
  for (int i = 0; i < n_support; ++i) sup_idx.push_back(i);
  for (int i = n_support; i < n_support + n_query; ++i) qry_idx.push_back(i);

  Episode ep;
  LabeledSet sup = subset(all, sup_idx, Split::train);
  LabeledSet qry = subset(all, qry_idx, Split::val);
  ep.support = {sup.inputs, sup.labels};
  ep.query = {qry.inputs, qry.labels};
  ep.domain_id = "task";
  return ep;
}

TaskSampler make_task_sampler(const TaskFamilySpec& fam, int n_support, int n_query,
                              std::uint64_t seed) {
  fam.validate();
  return TaskSampler(
      [fam, n_support, n_query](std::uint64_t episode_seed) {
        return sample_episode(fam, episode_seed, n_support, n_query);
      },
      seed);
}

LabeledSet inject_noise(const LabeledSet& set, double sigma_x, double rho_y, std::uint64_t seed) {
  if (sigma_x < 0.0) throw std::invalid_argument("inject_noise: sigma_x must be non-negative");
  if (rho_y < 0.0 || rho_y >= 0.5) {
    throw std::invalid_argument("inject_noise: rho_y must be in [0, 0.5)");
  }
  if (sigma_x == 0.0 && rho_y == 0.0) return set;

  Rng rng(seed);
  const int n = set.n(), d = set.dim(), k = set.num_classes();
  std::vector<double> xs(set.inputs.data());
  std::vector<int> labels = set.label_indices();
  for (int i = 0; i < n; ++i) {
    if (sigma_x > 0.0) {
      for (int c = 0; c < d; ++c) xs[static_cast<std::size_t>(i) * d + c] += rng.normal(0.0, sigma_x);
    }
    if (rho_y > 0.0 && rng.uniform() < rho_y) {
      labels[static_cast<std::size_t>(i)] = flip_label(labels[static_cast<std::size_t>(i)], k, rng);
    }
  }
  LabeledSet out;
  out.inputs = Tensor::from_data_unchecked({n, d}, std::move(xs));
  out.labels = one_hot(labels, k);
  out.domain_id = set.domain_id;
  out.split = set.split;
  return out;
}

void Standardizer::fit(const Tensor& x) {
  const int n = x.rows(), d = x.cols();
  mean.assign(static_cast<std::size_t>(d), 0.0);
  stddev.assign(static_cast<std::size_t>(d), 1.0);
  for (int c = 0; c < d; ++c) {
    double s = 0.0;
    for (int r = 0; r < n; ++r) s += x.at(r, c);
    mean[static_cast<std::size_t>(c)] = s / n;
    double v = 0.0;
    for (int r = 0; r < n; ++r) {
      const double diff = x.at(r, c) - mean[static_cast<std::size_t>(c)];
      v += diff * diff;
    }
    const double sd = std::sqrt(v / n);
    stddev[static_cast<std::size_t>(c)] = sd > 1e-12 ? sd : 1.0;
  }
  fitted = true;
}

Tensor Standardizer::apply(const Tensor& x) const {
  if (!fitted) throw std::runtime_error("Standardizer: apply before fit");
  const int n = x.rows(), d = x.cols();
  if (static_cast<std::size_t>(d) != mean.size()) {
    throw std::invalid_argument("Standardizer: width mismatch");
  }
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) {
      out[static_cast<std::size_t>(r) * d + c] =
          (x.at(r, c) - mean[static_cast<std::size_t>(c)]) / stddev[static_cast<std::size_t>(c)];
    }
  }
  return Tensor::from_data_unchecked({n, d}, std::move(out));
}

LabeledSet Standardizer::apply(const LabeledSet& set) const {
  LabeledSet out = set;
  out.inputs = apply(set.inputs);
  return out;
}

}  // namespace metadapt
