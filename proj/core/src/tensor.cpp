#include "metadapt/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace metadapt {

namespace {

std::int64_t shape_numel(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw std::invalid_argument("tensor rank must be 1 or 2");
  }
  std::int64_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extents must be positive");
    n *= e;
  }
  return n;
}

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "[" << t.rows() << "x" << t.cols() << "]";
  return os.str();
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
  auto n = shape_numel(shape);
  return from_data_unchecked(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  auto n = shape_numel(shape);
  if (!std::isfinite(value)) throw std::invalid_argument("tensor fill value must be finite");
  return from_data_unchecked(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  Tensor t = from_data_unchecked(std::move(shape), std::move(data));
  if (!t.all_finite()) throw std::invalid_argument("tensor data contains NaN/Inf");
  return t;
}

Tensor Tensor::from_data_unchecked(std::vector<int> shape, std::vector<double> data) {
  auto n = shape_numel(shape);
  if (static_cast<std::size_t>(n) != data.size()) {
    throw std::invalid_argument("tensor shape does not match data length");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<const std::vector<double>>(std::move(data));
  return t;
}

Tensor Tensor::scalar(double v) { return from_data({1, 1}, {v}); }

Tensor Tensor::row(std::vector<double> v) {
  int n = static_cast<int>(v.size());
  return from_data({1, n}, std::move(v));
}

Tensor Tensor::column(std::vector<double> v) {
  int n = static_cast<int>(v.size());
  return from_data({n, 1}, std::move(v));
}

int Tensor::rows() const {
  if (!defined()) return 0;
  return shape_.size() == 1 ? 1 : shape_[0];
}

int Tensor::cols() const {
  if (!defined()) return 0;
  return shape_.size() == 1 ? shape_[0] : shape_[1];
}

std::int64_t Tensor::numel() const {
  return defined() ? static_cast<std::int64_t>(data_->size()) : 0;
}

double Tensor::at(int r, int c) const {
  return (*data_)[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(c)];
}

double Tensor::value() const {
  if (numel() != 1) throw std::invalid_argument("value() requires a single-element tensor");
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::matmul: return "matmul";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::neg: return "neg";
    case OpKind::sqrt: return "sqrt";
    case OpKind::clamp: return "clamp";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::sum: return "sum";
    case OpKind::sum_rows: return "sum_rows";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::transpose: return "transpose";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::slice_cols: return "slice_cols";
  }
  return "?";
}

int Tape::record(TapeNode node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor tracked_view(Tape& tape, int node, const Tensor& value) {
  Tensor t = value;
  t.tape_ = &tape;
  t.node_ = node;
  return t;
}

Tensor leaf(Tape& tape, const Tensor& value) {
  TapeNode n;
  n.kind = OpKind::leaf;
  int id = tape.record(std::move(n));
  return tracked_view(tape, id, value.detached());
}

void ParamSet::insert(std::string name, Tensor t) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  entries_.emplace_back(std::move(name), std::move(t));
}

void ParamSet::set(std::string_view name, Tensor t) {
  for (auto& [k, v] : entries_) {
    if (k == name) {
      v = std::move(t);
      return;
    }
  }
  throw std::invalid_argument("unknown parameter name: " + std::string(name));
}

const Tensor& ParamSet::at(std::string_view name) const {
  for (const auto& [k, v] : entries_) {
    if (k == name) return v;
  }
  throw std::invalid_argument("unknown parameter name: " + std::string(name));
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& [k, v] : entries_) {
    if (k == name) return true;
  }
  return false;
}

std::int64_t ParamSet::total_params() const {
  std::int64_t n = 0;
  for (const auto& [k, v] : entries_) n += v.numel();
  return n;
}

ParamSet ParamSet::detached() const {
  ParamSet out;
  for (const auto& [k, v] : entries_) out.insert(k, v.detached());
  return out;
}

ParamSet attach(Tape& tape, const ParamSet& params) {
  ParamSet out;
  for (const auto& [k, v] : params) out.insert(k, leaf(tape, v));
  return out;
}

bool bit_equal(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& [ka, ta] = a.entries()[i];
    const auto& [kb, tb] = b.entries()[i];
    if (ka != kb || ta.shape() != tb.shape()) return false;
    const auto& da = ta.data();
    const auto& db = tb.data();
    for (std::size_t j = 0; j < da.size(); ++j) {
      // bitwise comparison, distinguishes -0.0 and NaN payloads
      if (std::memcmp(&da[j], &db[j], sizeof(double)) != 0) return false;
    }
  }
  return true;
}

void throw_shape_error(std::string_view op, const Tensor& a, const Tensor& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << shape_str(a) << " and " << shape_str(b);
  throw std::invalid_argument(os.str());
}

}  // namespace metadapt
