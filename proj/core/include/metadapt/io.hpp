#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "metadapt/adversarial.hpp"
#include "metadapt/metrics.hpp"
#include "metadapt/synth.hpp"

namespace metadapt {

using Json = nlohmann::ordered_json;

// 17 significant digits: doubles round-trip bit-exactly through text
std::string fmt_g17(double v);

std::string read_text(const std::string& path);
// write-temp-then-rename, so concurrent jobs never expose partial files
void write_text_atomic(const std::string& path, const std::string& content);

void ensure_dir(const std::string& path);
bool file_exists(const std::string& path);

std::uint64_t fnv1a64(const std::string& s);

// dataset CSV: header x0,...,x{d-1},label,domain,split
void write_labeled_csv(const LabeledSet& set, const std::string& path);
LabeledSet read_labeled_csv(const std::string& path);

// field names fixed: accuracy, precision, recall, f1, auc_roc, n_samples,
// degenerate_flags (plus the per-class breakdown)
Json metrics_to_json(const MetricsReport& r);

Json params_to_json(const ParamSet& p);
ParamSet params_from_json(const Json& j);

Json state_to_json(const TrainState& st);
TrainState state_from_json(const Json& j);

void save_state(const TrainState& st, const std::string& path);
TrainState load_state(const std::string& path);

}  // namespace metadapt
