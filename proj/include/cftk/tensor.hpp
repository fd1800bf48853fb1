#pragma once

// Dense 64-bit tensors with opt-in reverse-mode differentiation.
//
// A Tensor is an immutable value (shape + shared data). When it is attached
// to a Tape it additionally carries the id of the node that produced it, and
// every op applied to it is appended to that tape. Untracked tensors never
// touch a tape and are safe to share between threads.

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cftk {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class Tape;

class Tensor {
 public:
  static constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

  Tensor();  // scalar 0
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  // Leading dimension for rank 2; 1 for rank <= 1.
  std::size_t rows() const;
  // Trailing dimension; 1 for scalars.
  std::size_t cols() const;

  std::span<const double> data() const { return {data_->data(), data_->size()}; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t r, std::size_t c) const { return (*data_)[r * cols() + c]; }
  double item() const;
  std::vector<double> to_vector() const { return *data_; }

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t node() const { return node_; }
  // Same values, no tape attachment.
  Tensor detach() const;

  // Bitwise equality of shape and data.
  bool same_values(const Tensor& other) const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::size_t node_ = kNoNode;
};

enum class OpKind {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kScale,
  kAddScalar,
  kMatMul,
  kSum,
  kMean,
  kRowSum,
  kSquare,
  kExp,
  kLog,
  kSigmoid,
  kSoftplus,
  kLogSoftmax,
  kBroadcast,
  kTranspose,
  kConcatCols,
  kSliceCols,
  kSelectRows,
  kPairwiseSqDist,
  kRbfKernelMean,
};

const char* op_name(OpKind kind);

struct TapeNode {
  OpKind kind;
  std::vector<std::size_t> parents;
  Tensor value;                    // forward output (untracked copy)
  double scalar = 0.0;             // kScale / kAddScalar factor
  std::vector<std::size_t> index;  // slice bounds or selected rows
};

// Append-only computation record. Parents always precede their children.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a trainable input; gradients are reported for it.
  Tensor leaf(const Tensor& value);
  // Registers a non-trainable input.
  Tensor constant(const Tensor& value);

  std::size_t size() const { return nodes_.size(); }
  const TapeNode& node(std::size_t id) const { return nodes_.at(id); }

  // Recomputes every node from the recorded leaves and constants.
  std::vector<Tensor> replay() const;

  // Internal: used by the op functions.
  Tensor record(OpKind kind, std::vector<std::size_t> parents, Tensor value,
                double scalar = 0.0, std::vector<std::size_t> index = {});
  std::size_t attach(const Tensor& t);

 private:
  std::vector<TapeNode> nodes_;
};

// Gradients of a scalar root with respect to every node on the tape.
class Gradients {
 public:
  Gradients(const Tape& tape, std::vector<std::vector<double>> grads);
  // Zero tensor shaped like `t` when `t` did not influence the root.
  Tensor wrt(const Tensor& t) const;
  Tensor wrt(std::size_t node) const;

 private:
  const Tape* tape_;
  std::vector<std::vector<double>> grads_;
};

Gradients backward(const Tape& tape, const Tensor& root);

// ---- forward ops -------------------------------------------------------
// Binary elementwise ops broadcast with trailing-dimension alignment.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// (n, m) -> (n, 1)
Tensor row_sum(const Tensor& a);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
// Row-wise log-softmax of a rank-2 tensor.
Tensor log_softmax(const Tensor& a);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor transpose(const Tensor& a);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows);
// (n, d) x (m, d) -> (n, m) squared Euclidean distances.
Tensor pairwise_sqdist(const Tensor& a, const Tensor& b);
// mean over (i, j) of exp(-gamma * |a_i - b_j|^2); rows are points.
Tensor rbf_kernel_mean(const Tensor& a, const Tensor& b, double gamma);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }

}  // namespace cftk
