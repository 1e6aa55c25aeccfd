#include "metadapt/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace metadapt {

namespace fs = std::filesystem;

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp.string());
    out << content;
  }
  fs::rename(tmp, target);
}

void ensure_dir(const std::string& path) { fs::create_directories(path); }

bool file_exists(const std::string& path) { return fs::exists(path); }

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_labeled_csv(const LabeledSet& set, const std::string& path) {
  std::ostringstream os;
  for (int c = 0; c < set.dim(); ++c) os << "x" << c << ",";
  os << "label,domain,split\n";
  const std::vector<int> labels = set.label_indices();
  for (int r = 0; r < set.n(); ++r) {
    for (int c = 0; c < set.dim(); ++c) os << fmt_g17(set.inputs.at(r, c)) << ",";
    os << labels[static_cast<std::size_t>(r)] << "," << set.domain_id << ","
       << split_name(set.split) << "\n";
  }
  write_text_atomic(path, os.str());
}

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

LabeledSet read_labeled_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV: " + path);
  const auto header = split_line(line, ',');
  if (header.size() < 4 || header[header.size() - 3] != "label") {
    throw std::runtime_error("unexpected CSV header in " + path);
  }
  const int d = static_cast<int>(header.size()) - 3;

  std::vector<double> xs;
  std::vector<int> labels;
  std::string domain = "domain";
  std::string split_tag = "train";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line, ',');
    if (static_cast<int>(f.size()) != d + 3) {
      throw std::runtime_error("bad CSV row in " + path + ": " + line);
    }
    for (int c = 0; c < d; ++c) xs.push_back(std::stod(f[static_cast<std::size_t>(c)]));
    labels.push_back(std::stoi(f[static_cast<std::size_t>(d)]));
    domain = f[static_cast<std::size_t>(d) + 1];
    split_tag = f[static_cast<std::size_t>(d) + 2];
  }
  const int n = static_cast<int>(labels.size());
  if (n == 0) throw std::runtime_error("CSV has no data rows: " + path);
  int k = 0;
  for (int v : labels) k = std::max(k, v + 1);
  k = std::max(k, 2);

  std::vector<double> ys(static_cast<std::size_t>(n) * k, 0.0);
  for (int r = 0; r < n; ++r) ys[static_cast<std::size_t>(r) * k + labels[static_cast<std::size_t>(r)]] = 1.0;

  LabeledSet out;
  out.inputs = Tensor::from_data_unchecked({n, d}, std::move(xs));
  out.labels = Tensor::from_data_unchecked({n, k}, std::move(ys));
  out.domain_id = domain;
  out.split = split_tag == "val" ? Split::val : (split_tag == "test" ? Split::test : Split::train);
  return out;
}

Json metrics_to_json(const MetricsReport& r) {
  Json j;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["auc_roc"] = r.auc_roc;
  j["n_samples"] = r.n_samples;
  j["degenerate_flags"] = r.degenerate_flags;
  Json per_class = Json::array();
  for (const auto& cm : r.per_class) {
    Json c;
    c["precision"] = cm.precision;
    c["recall"] = cm.recall;
    c["f1"] = cm.f1;
    c["auc"] = cm.auc;
    c["auc_defined"] = cm.auc_defined;
    per_class.push_back(c);
  }
  j["per_class"] = per_class;
  return j;
}

Json params_to_json(const ParamSet& p) {
  Json j = Json::array();
  for (const auto& [name, t] : p) {
    Json e;
    e["name"] = name;
    e["shape"] = std::vector<int>{t.rows(), t.cols()};
    e["data"] = t.data();
    j.push_back(e);
  }
  return j;
}

ParamSet params_from_json(const Json& j) {
  ParamSet p;
  for (const auto& e : j) {
    const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    std::vector<double> data = e.at("data").get<std::vector<double>>();
    p.insert(e.at("name").get<std::string>(), Tensor::from_data_unchecked(shape, std::move(data)));
  }
  return p;
}

namespace {

Json mlp_to_json(const MlpSpec& s) {
  Json j;
  j["layer_widths"] = s.layer_widths;
  j["head"] = s.head == OutputHead::linear ? "linear"
              : s.head == OutputHead::softmax ? "softmax"
                                              : "sigmoid";
  return j;
}

MlpSpec mlp_from_json(const Json& j) {
  MlpSpec s;
  s.layer_widths = j.at("layer_widths").get<std::vector<int>>();
  const std::string head = j.at("head").get<std::string>();
  s.head = head == "softmax" ? OutputHead::softmax
           : head == "sigmoid" ? OutputHead::sigmoid
                               : OutputHead::linear;
  return s;
}

Json arch_to_json(const ModelArch& a) {
  Json j;
  j["extractor"] = {{"mlp", mlp_to_json(a.extractor.mlp)},
                    {"adabn", a.extractor.adabn},
                    {"condbn", a.extractor.condbn},
                    {"gated", a.extractor.gated},
                    {"attention", a.extractor.attention},
                    {"embed_dim", a.extractor.embed_dim},
                    {"gated_hidden", a.extractor.gated_hidden},
                    {"bn_eps", a.extractor.bn_eps},
                    {"bn_momentum", a.extractor.bn_momentum}};
  j["classifier"] = mlp_to_json(a.classifier);
  j["discriminator"] = mlp_to_json(a.discriminator);
  j["autoencoder"] = {{"encoder", mlp_to_json(a.autoencoder.encoder)},
                      {"decoder", mlp_to_json(a.autoencoder.decoder)}};
  return j;
}

ModelArch arch_from_json(const Json& j) {
  ModelArch a;
  const Json& e = j.at("extractor");
  a.extractor.mlp = mlp_from_json(e.at("mlp"));
  a.extractor.adabn = e.at("adabn").get<bool>();
  a.extractor.condbn = e.at("condbn").get<bool>();
  a.extractor.gated = e.at("gated").get<bool>();
  a.extractor.attention = e.at("attention").get<bool>();
  a.extractor.embed_dim = e.at("embed_dim").get<int>();
  a.extractor.gated_hidden = e.at("gated_hidden").get<std::vector<int>>();
  a.extractor.bn_eps = e.at("bn_eps").get<double>();
  a.extractor.bn_momentum = e.at("bn_momentum").get<double>();
  a.classifier = mlp_from_json(j.at("classifier"));
  a.discriminator = mlp_from_json(j.at("discriminator"));
  a.autoencoder.encoder = mlp_from_json(j.at("autoencoder").at("encoder"));
  a.autoencoder.decoder = mlp_from_json(j.at("autoencoder").at("decoder"));
  return a;
}

}  // namespace

Json state_to_json(const TrainState& st) {
  Json j;
  j["arch"] = arch_to_json(st.arch);
  j["f"] = params_to_json(st.f);
  j["c"] = params_to_json(st.c);
  j["d"] = params_to_json(st.d);
  j["e"] = params_to_json(st.e);

  Json emb;
  emb["dim"] = st.embeddings.dim;
  emb["provenance"] = st.embeddings.provenance == EmbeddingProvenance::joint ? "joint"
                      : st.embeddings.provenance == EmbeddingProvenance::supervised
                          ? "supervised"
                          : "autoencoder";
  Json entries = Json::object();
  for (const auto& [id, e] : st.embeddings.entries) entries[id] = e.values;
  emb["entries"] = entries;
  j["embeddings"] = emb;

  Json stats = Json::object();
  for (const auto& [key, s] : st.bn_stats) {
    stats[key] = {{"mean", s.mean}, {"var", s.var}, {"init", s.init}};
  }
  j["bn_stats"] = stats;

  j["scaler"] = {{"fitted", st.scaler.fitted}, {"mean", st.scaler.mean}, {"stddev", st.scaler.stddev}};
  j["epoch"] = st.epoch;

  Json log = Json::array();
  for (const auto& row : st.log) {
    log.push_back({{"epoch", row.epoch},
                   {"L_C", row.l_c},
                   {"L_D", row.l_d},
                   {"L_F", row.l_f},
                   {"disc_acc", row.disc_acc},
                   {"src_acc", row.src_acc}});
  }
  j["log"] = log;
  j["fine_tune_loss"] = st.fine_tune_loss;
  j["warnings"] = st.warnings;
  j["ld_excursion_run"] = st.ld_excursion_run;
  return j;
}

TrainState state_from_json(const Json& j) {
  TrainState st;
  st.arch = arch_from_json(j.at("arch"));
  st.f = params_from_json(j.at("f"));
  st.c = params_from_json(j.at("c"));
  st.d = params_from_json(j.at("d"));
  st.e = params_from_json(j.at("e"));

  const Json& emb = j.at("embeddings");
  st.embeddings.dim = emb.at("dim").get<int>();
  const std::string prov = emb.at("provenance").get<std::string>();
  st.embeddings.provenance = prov == "joint" ? EmbeddingProvenance::joint
                             : prov == "supervised" ? EmbeddingProvenance::supervised
                                                    : EmbeddingProvenance::autoencoder;
  for (const auto& [id, values] : emb.at("entries").items()) {
    DomainEmbedding e;
    e.domain_id = id;
    e.values = values.get<std::vector<double>>();
    st.embeddings.entries[id] = std::move(e);
  }

  for (const auto& [key, s] : j.at("bn_stats").items()) {
    BnRunning r;
    r.mean = s.at("mean").get<std::vector<double>>();
    r.var = s.at("var").get<std::vector<double>>();
    r.init = s.at("init").get<bool>();
    st.bn_stats[key] = std::move(r);
  }

  st.scaler.fitted = j.at("scaler").at("fitted").get<bool>();
  st.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
  st.scaler.stddev = j.at("scaler").at("stddev").get<std::vector<double>>();
  st.epoch = j.at("epoch").get<int>();

  for (const auto& row : j.at("log")) {
    EpochLogRow r;
    r.epoch = row.at("epoch").get<int>();
    r.l_c = row.at("L_C").get<double>();
    r.l_d = row.at("L_D").get<double>();
    r.l_f = row.at("L_F").get<double>();
    r.disc_acc = row.at("disc_acc").get<double>();
    r.src_acc = row.at("src_acc").get<double>();
    st.log.push_back(r);
  }
  st.fine_tune_loss = j.at("fine_tune_loss").get<std::vector<double>>();
  st.warnings = j.at("warnings").get<std::vector<std::string>>();
  st.ld_excursion_run = j.at("ld_excursion_run").get<int>();
  return st;
}

void save_state(const TrainState& st, const std::string& path) {
  write_text_atomic(path, state_to_json(st).dump(2) + "\n");
}

TrainState load_state(const std::string& path) {
  if (!file_exists(path)) throw std::runtime_error("missing model artifact: " + path);
  return state_from_json(Json::parse(read_text(path)));
}

}  // namespace metadapt
