#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace metadapt {

class Tape;

// Dense 64-bit float tensor with value semantics. Data buffers are shared
// and immutable; every operation produces a fresh tensor. A tensor may carry
// a (tape, node) handle, in which case it participates in reverse-mode
// differentiation on that tape.
//
// Rank is 1 or 2; rank-1 tensors act as 1xN rows wherever a matrix is
// expected.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  // validates finiteness of every element
  static Tensor from_data(std::vector<int> shape, std::vector<double> data);
  // skips the finiteness check (internal/advanced use)
  static Tensor from_data_unchecked(std::vector<int> shape, std::vector<double> data);
  static Tensor scalar(double v);                 // shape {1,1}
  static Tensor row(std::vector<double> v);       // shape {1,n}
  static Tensor column(std::vector<double> v);    // shape {n,1}

  bool defined() const { return data_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  int rows() const;
  int cols() const;
  std::int64_t numel() const;
  const std::vector<double>& data() const { return *data_; }
  double at(int r, int c) const;
  double value() const;  // requires numel() == 1
  bool is_scalar() const { return defined() && numel() == 1; }

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  // same buffer, no tape handle
  Tensor detached() const;

  bool same_extent(const Tensor& o) const { return rows() == o.rows() && cols() == o.cols(); }
  bool all_finite() const;

 private:
  std::vector<int> shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;

  friend class Tape;
  friend Tensor tracked_view(Tape& tape, int node, const Tensor& value);
};

enum class OpKind : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  div,
  matmul,
  relu,
  sigmoid,
  exp,
  log,
  neg,
  sqrt,
  clamp,
  scale,       // x * c0
  add_scalar,  // x + c0
  sum,         // all elements -> 1x1
  sum_rows,    // m x n -> 1 x n (collapse the batch dimension)
  softmax_rows,
  transpose,
  concat_cols,
  slice_cols,  // columns [c0, c1)
};

const char* op_name(OpKind k);

struct TapeNode {
  OpKind kind = OpKind::leaf;
  int inputs[2] = {-1, -1};
  int n_inputs = 0;
  // tensors the backward rule needs; by convention inputs first, then the
  // output for kinds whose derivative is expressed through it
  std::vector<Tensor> saved;
  double c0 = 0.0;
  double c1 = 0.0;
};

// Append-only operation record. Node inputs always reference earlier nodes,
// so the tape is topologically ordered by construction. One tape belongs to
// one thread; short-lived tapes per training step are the intended pattern.
class Tape {
 public:
  int record(TapeNode node);
  const TapeNode& at(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  TapeNode& at_mutable(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  std::deque<TapeNode> nodes_;  // deque: stable references across appends
};

// wraps a value as a tracked view of an existing node
Tensor tracked_view(Tape& tape, int node, const Tensor& value);

// records `value` as a leaf and returns the tracked tensor
Tensor leaf(Tape& tape, const Tensor& value);

// Named collection of learnable tensors. Iteration follows insertion order,
// so parameter traversal is deterministic.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void insert(std::string name, Tensor t);
  void set(std::string_view name, Tensor t);  // replace existing
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::int64_t total_params() const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  ParamSet detached() const;

 private:
  std::vector<Entry> entries_;
};

// records every parameter as a leaf on the tape
ParamSet attach(Tape& tape, const ParamSet& params);

// true when every tensor in both sets is bitwise identical
bool bit_equal(const ParamSet& a, const ParamSet& b);

[[noreturn]] void throw_shape_error(std::string_view op, const Tensor& a, const Tensor& b);

}  // namespace metadapt
