#include "cftk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

#include "cftk/error.hpp"

namespace cftk {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Tensor ------------------------------------------------------------

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor shape " + to_string(shape_) + " has a zero extent");
  }
  if (data.size() != shape_size(shape_)) {
    throw DimensionError("tensor shape " + to_string(shape_) + " needs " +
                         std::to_string(shape_size(shape_)) + " values, got " +
                         std::to_string(data.size()));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }
Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}
Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}
Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}
Tensor Tensor::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return matrix(n, n, std::move(v));
}

std::size_t Tensor::rows() const { return rank() == 2 ? shape_[0] : 1; }
std::size_t Tensor::cols() const { return rank() == 0 ? 1 : shape_.back(); }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = kNoNode;
  return t;
}

bool Tensor::same_values(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return std::equal(data_->begin(), data_->end(), other.data_->begin(),
                    [](double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; });
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kNeg: return "neg";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kRowSum: return "row_sum";
    case OpKind::kSquare: return "square";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kBroadcast: return "broadcast";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kSelectRows: return "select_rows";
    case OpKind::kPairwiseSqDist: return "pairwise_sqdist";
    case OpKind::kRbfKernelMean: return "rbf_kernel_mean";
  }
  return "?";
}

namespace {

// ---- broadcasting helpers ----------------------------------------------

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast shapes " + to_string(a) +
                           " and " + to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// For each flat index of `out`, the flat index of the broadcast source `in`.
std::vector<std::size_t> source_index(const Shape& out, const Shape& in) {
  const std::size_t n = shape_size(out);
  std::vector<std::size_t> map(n);
  if (in == out) {
    std::iota(map.begin(), map.end(), std::size_t{0});
    return map;
  }
  const std::size_t rank = out.size();
  const std::size_t offset = rank - in.size();
  std::vector<std::size_t> in_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = rank; i-- > offset;) {
    const std::size_t d = in[i - offset];
    in_stride[i] = d == 1 ? 0 : stride;
    stride *= d;
  }
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += idx[i] * in_stride[i];
    map[flat] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out[i]) break;
      idx[i] = 0;
    }
  }
  return map;
}

void require_finite(const std::vector<double>& v, OpKind kind) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by ") + op_name(kind));
    }
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " needs a rank-2 tensor, got shape " +
                         to_string(t.shape()));
  }
}

double stable_softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F>
Tensor binary(const Tensor& a, const Tensor& b, OpKind kind, F f) {
  const Shape out = broadcast_shape(a.shape(), b.shape(), op_name(kind));
  const std::size_t n = shape_size(out);
  std::vector<double> v(n);
  const auto da = a.data();
  const auto db = b.data();
  if (a.shape() == out && b.shape() == out) {
    for (std::size_t i = 0; i < n; ++i) v[i] = f(da[i], db[i]);
  } else if (a.shape() == out && b.size() == 1) {
    const double y = db[0];
    for (std::size_t i = 0; i < n; ++i) v[i] = f(da[i], y);
  } else if (a.shape() == out && out.size() == 2 && b.size() == out[1] && b.rank() >= 1 &&
             b.shape().back() == out[1]) {
    // Row vector broadcast over a matrix.
    const std::size_t m = out[1];
    for (std::size_t i = 0; i < n; ++i) v[i] = f(da[i], db[i % m]);
  } else {
    const auto ia = source_index(out, a.shape());
    const auto ib = source_index(out, b.shape());
    for (std::size_t i = 0; i < n; ++i) v[i] = f(da[ia[i]], db[ib[i]]);
  }
  require_finite(v, kind);
  return Tensor(out, std::move(v));
}

template <typename F>
Tensor unary(const Tensor& a, OpKind kind, F f) {
  std::vector<double> v(a.size());
  const auto d = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(d[i]);
  require_finite(v, kind);
  return Tensor(a.shape(), std::move(v));
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ for shapes " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
  }
  std::vector<double> v(n * m, 0.0);
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = v.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = da[i * k + p];
      const double* brow = db.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += x * brow[j];
    }
  }
  require_finite(v, OpKind::kMatMul);
  return Tensor({n, m}, std::move(v));
}

// g (n x m) times b^T where b is (k x m): result (n x k).
std::vector<double> matmul_nt(std::span<const double> g, std::span<const double> b, std::size_t n,
                              std::size_t m, std::size_t k) {
  std::vector<double> r(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * b[p * m + j];
      r[i * k + p] = s;
    }
  return r;
}

// a^T (a is n x k) times g (n x m): result (k x m).
std::vector<double> matmul_tn(std::span<const double> a, std::span<const double> g, std::size_t n,
                              std::size_t k, std::size_t m) {
  std::vector<double> r(k * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = a[i * k + p];
      double* row = r.data() + p * m;
      const double* grow = g.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += x * grow[j];
    }
  return r;
}

Tensor transpose_values(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  std::vector<double> v(n * m);
  const auto d = a.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) v[j * n + i] = d[i * m + j];
  return Tensor({m, n}, std::move(v));
}

// Evaluates one node kind on concrete input values.
Tensor evaluate(OpKind kind, const std::vector<Tensor>& in, double scalar,
                const std::vector<std::size_t>& index, const Shape& target) {
  switch (kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      return in.at(0);
    case OpKind::kAdd:
      return binary(in[0], in[1], kind, [](double x, double y) { return x + y; });
    case OpKind::kSub:
      return binary(in[0], in[1], kind, [](double x, double y) { return x - y; });
    case OpKind::kMul:
      return binary(in[0], in[1], kind, [](double x, double y) { return x * y; });
    case OpKind::kDiv:
      return binary(in[0], in[1], kind, [](double x, double y) { return x / y; });
    case OpKind::kNeg:
      return unary(in[0], kind, [](double x) { return -x; });
    case OpKind::kScale:
      return unary(in[0], kind, [scalar](double x) { return scalar * x; });
    case OpKind::kAddScalar:
      return unary(in[0], kind, [scalar](double x) { return x + scalar; });
    case OpKind::kMatMul:
      return matmul_values(in[0], in[1]);
    case OpKind::kSum:
    case OpKind::kMean: {
      const auto d = in[0].data();
      double s = 0.0;
      for (double x : d) s += x;
      if (kind == OpKind::kMean) s /= static_cast<double>(d.size());
      std::vector<double> v{s};
      require_finite(v, kind);
      return Tensor({}, std::move(v));
    }
    case OpKind::kRowSum: {
      const Tensor& a = in[0];
      require_rank2(a, "row_sum");
      const std::size_t n = a.rows(), m = a.cols();
      std::vector<double> v(n, 0.0);
      const auto d = a.data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) v[i] += d[i * m + j];
      require_finite(v, kind);
      return Tensor({n, 1}, std::move(v));
    }
    case OpKind::kSquare:
      return unary(in[0], kind, [](double x) { return x * x; });
    case OpKind::kExp:
      return unary(in[0], kind, [](double x) { return std::exp(x); });
    case OpKind::kLog:
      return unary(in[0], kind, [](double x) { return std::log(x); });
    case OpKind::kSigmoid:
      return unary(in[0], kind, stable_sigmoid);
    case OpKind::kSoftplus:
      return unary(in[0], kind, stable_softplus);
    case OpKind::kLogSoftmax: {
      const Tensor& a = in[0];
      require_rank2(a, "log_softmax");
      const std::size_t n = a.rows(), m = a.cols();
      const auto d = a.data();
      std::vector<double> v(n * m);
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = d.data() + i * m;
        const double mx = *std::max_element(row, row + m);
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += std::exp(row[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < m; ++j) v[i * m + j] = row[j] - lse;
      }
      require_finite(v, kind);
      return Tensor(a.shape(), std::move(v));
    }
    case OpKind::kBroadcast: {
      const Shape out = broadcast_shape(in[0].shape(), target, "broadcast_to");
      if (out != target) {
        throw DimensionError("broadcast_to: cannot broadcast " + to_string(in[0].shape()) +
                             " to " + to_string(target));
      }
      const auto map = source_index(out, in[0].shape());
      std::vector<double> v(map.size());
      const auto d = in[0].data();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = d[map[i]];
      return Tensor(out, std::move(v));
    }
    case OpKind::kTranspose:
      return transpose_values(in[0]);
    case OpKind::kConcatCols: {
      std::size_t n = 0, m = 0;
      for (const auto& p : in) {
        require_rank2(p, "concat_cols");
        if (n == 0) n = p.rows();
        if (p.rows() != n) {
          throw DimensionError("concat_cols: row counts differ (" + to_string(in[0].shape()) +
                               " vs " + to_string(p.shape()) + ")");
        }
        m += p.cols();
      }
      std::vector<double> v(n * m);
      std::size_t off = 0;
      for (const auto& p : in) {
        const auto d = p.data();
        const std::size_t pc = p.cols();
        for (std::size_t i = 0; i < n; ++i)
          std::copy_n(d.data() + i * pc, pc, v.data() + i * m + off);
        off += pc;
      }
      return Tensor({n, m}, std::move(v));
    }
    case OpKind::kSliceCols: {
      const Tensor& a = in[0];
      require_rank2(a, "slice_cols");
      const std::size_t b = index.at(0), e = index.at(1);
      if (b >= e || e > a.cols()) {
        throw DimensionError("slice_cols: range [" + std::to_string(b) + ", " +
                             std::to_string(e) + ") invalid for shape " + to_string(a.shape()));
      }
      const std::size_t n = a.rows(), m = a.cols(), w = e - b;
      std::vector<double> v(n * w);
      const auto d = a.data();
      for (std::size_t i = 0; i < n; ++i) std::copy_n(d.data() + i * m + b, w, v.data() + i * w);
      return Tensor({n, w}, std::move(v));
    }
    case OpKind::kSelectRows: {
      const Tensor& a = in[0];
      require_rank2(a, "select_rows");
      if (index.empty()) throw DimensionError("select_rows: empty row selection");
      const std::size_t m = a.cols();
      std::vector<double> v(index.size() * m);
      const auto d = a.data();
      for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= a.rows()) {
          throw DimensionError("select_rows: row " + std::to_string(index[i]) +
                               " out of range for shape " + to_string(a.shape()));
        }
        std::copy_n(d.data() + index[i] * m, m, v.data() + i * m);
      }
      return Tensor({index.size(), m}, std::move(v));
    }
    case OpKind::kPairwiseSqDist: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      require_rank2(a, "pairwise_sqdist");
      require_rank2(b, "pairwise_sqdist");
      if (a.cols() != b.cols()) {
        throw DimensionError("pairwise_sqdist: feature widths differ for shapes " +
                             to_string(a.shape()) + " and " + to_string(b.shape()));
      }
      const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
      std::vector<double> v(n * m);
      const auto da = a.data();
      const auto db = b.data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          double s = 0.0;
          for (std::size_t k = 0; k < d; ++k) {
            const double diff = da[i * d + k] - db[j * d + k];
            s += diff * diff;
          }
          v[i * m + j] = s;
        }
      require_finite(v, kind);
      return Tensor({n, m}, std::move(v));
    }
    case OpKind::kRbfKernelMean: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      require_rank2(a, "rbf_kernel_mean");
      require_rank2(b, "rbf_kernel_mean");
      if (a.cols() != b.cols()) {
        throw DimensionError("rbf_kernel_mean: feature widths differ for shapes " +
                             to_string(a.shape()) + " and " + to_string(b.shape()));
      }
      const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
      const auto da = a.data();
      const auto db = b.data();
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          double q = 0.0;
          for (std::size_t k = 0; k < d; ++k) {
            const double diff = da[i * d + k] - db[j * d + k];
            q += diff * diff;
          }
          s += std::exp(-scalar * q);
        }
      std::vector<double> v{s / (static_cast<double>(n) * static_cast<double>(m))};
      require_finite(v, kind);
      return Tensor({}, std::move(v));
    }
  }
  throw ContractError("unknown op kind");
}

// Applies `kind` to `inputs`, recording on the shared tape if any is tracked.
Tensor apply(OpKind kind, const std::vector<Tensor>& inputs, double scalar = 0.0,
             std::vector<std::size_t> index = {}, const Shape& target = {}) {
  std::vector<Tensor> values;
  values.reserve(inputs.size());
  Tape* tape = nullptr;
  for (const auto& t : inputs) {
    if (t.tracked()) {
      if (tape && tape != t.tape()) {
        throw ContractError(std::string(op_name(kind)) + ": operands belong to different tapes");
      }
      tape = t.tape();
    }
    values.push_back(t.detach());
  }
  Tensor out = evaluate(kind, values, scalar, index, target);
  if (!tape) return out;
  std::vector<std::size_t> parents;
  parents.reserve(inputs.size());
  for (const auto& t : inputs) parents.push_back(tape->attach(t));
  return tape->record(kind, std::move(parents), std::move(out), scalar, std::move(index));
}

void accumulate(std::vector<double>& dst, const std::vector<double>& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Sums a gradient shaped like `out` down onto the broadcast source shape `in`.
std::vector<double> reduce_to(const std::vector<double>& g, const Shape& out, const Shape& in) {
  if (out == in) return g;
  std::vector<double> r(shape_size(in), 0.0);
  if (r.size() == 1) {
    for (double v : g) r[0] += v;
    return r;
  }
  if (out.size() == 2 && !in.empty() && in.back() == out[1] && r.size() == out[1]) {
    for (std::size_t i = 0; i < g.size(); ++i) r[i % out[1]] += g[i];
    return r;
  }
  const auto map = source_index(out, in);
  for (std::size_t i = 0; i < map.size(); ++i) r[map[i]] += g[i];
  return r;
}

std::vector<double> expand_from(const std::vector<double>& g, const Shape& out, const Shape& in) {
  if (out == in) return g;
  if (g.size() == 1) return std::vector<double>(shape_size(out), g[0]);
  const auto map = source_index(out, in);
  std::vector<double> r(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) r[i] = g[map[i]];
  return r;
}

}  // namespace

// ---- Tape --------------------------------------------------------------

Tensor Tape::leaf(const Tensor& value) { return record(OpKind::kLeaf, {}, value.detach()); }

Tensor Tape::constant(const Tensor& value) { return record(OpKind::kConstant, {}, value.detach()); }

Tensor Tape::record(OpKind kind, std::vector<std::size_t> parents, Tensor value, double scalar,
                    std::vector<std::size_t> index) {
  const std::size_t id = nodes_.size();
  for (auto p : parents) {
    if (p >= id) throw ContractError("tape parent must precede its child");
  }
  nodes_.push_back(TapeNode{kind, std::move(parents), value.detach(), scalar, std::move(index)});
  Tensor out = value.detach();
  out.tape_ = this;
  out.node_ = id;
  return out;
}

std::size_t Tape::attach(const Tensor& t) {
  if (t.tape() == this) return t.node();
  return constant(t).node();
}

std::vector<Tensor> Tape::replay() const {
  std::vector<Tensor> values;
  values.reserve(nodes_.size());
  for (const auto& n : nodes_) {
    if (n.kind == OpKind::kLeaf || n.kind == OpKind::kConstant) {
      values.push_back(n.value);
      continue;
    }
    std::vector<Tensor> in;
    for (auto p : n.parents) in.push_back(values[p]);
    values.push_back(evaluate(n.kind, in, n.scalar, n.index, n.value.shape()));
  }
  return values;
}

// ---- backward ----------------------------------------------------------

Gradients::Gradients(const Tape& tape, std::vector<std::vector<double>> grads)
    : tape_(&tape), grads_(std::move(grads)) {}

Tensor Gradients::wrt(std::size_t node) const {
  const Shape& shape = tape_->node(node).value.shape();
  if (grads_.at(node).empty()) return Tensor::zeros(shape);
  return Tensor(shape, grads_[node]);
}

Tensor Gradients::wrt(const Tensor& t) const {
  if (t.tape() != tape_) throw ContractError("gradient requested for a tensor not on this tape");
  return wrt(t.node());
}

Gradients backward(const Tape& tape, const Tensor& root) {
  if (root.tape() != &tape) throw ContractError("backward: root is not recorded on this tape");
  if (root.size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + to_string(root.shape()));
  }
  std::vector<std::vector<double>> g(tape.size());
  g[root.node()] = {1.0};

  for (std::size_t id = root.node() + 1; id-- > 0;) {
    if (g[id].empty()) continue;
    const TapeNode& n = tape.node(id);
    const std::vector<double>& go = g[id];
    const Shape& out_shape = n.value.shape();
    auto parent_value = [&](std::size_t k) -> const Tensor& { return tape.node(n.parents[k]).value; };
    auto push = [&](std::size_t k, const std::vector<double>& grad) { accumulate(g[n.parents[k]], grad); };

    switch (n.kind) {
      case OpKind::kLeaf:
      case OpKind::kConstant:
        break;
      case OpKind::kAdd:
      case OpKind::kSub: {
        push(0, reduce_to(go, out_shape, parent_value(0).shape()));
        auto gb = reduce_to(go, out_shape, parent_value(1).shape());
        if (n.kind == OpKind::kSub)
          for (auto& x : gb) x = -x;
        push(1, gb);
        break;
      }
      case OpKind::kMul:
      case OpKind::kDiv: {
        const Tensor& a = parent_value(0);
        const Tensor& b = parent_value(1);
        const auto ea = expand_from(a.to_vector(), out_shape, a.shape());
        const auto eb = expand_from(b.to_vector(), out_shape, b.shape());
        std::vector<double> ga(go.size()), gb(go.size());
        for (std::size_t i = 0; i < go.size(); ++i) {
          if (n.kind == OpKind::kMul) {
            ga[i] = go[i] * eb[i];
            gb[i] = go[i] * ea[i];
          } else {
            ga[i] = go[i] / eb[i];
            gb[i] = -go[i] * ea[i] / (eb[i] * eb[i]);
          }
        }
        push(0, reduce_to(ga, out_shape, a.shape()));
        push(1, reduce_to(gb, out_shape, b.shape()));
        break;
      }
      case OpKind::kNeg:
      case OpKind::kScale: {
        const double f = n.kind == OpKind::kNeg ? -1.0 : n.scalar;
        std::vector<double> ga(go.size());
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] = f * go[i];
        push(0, ga);
        break;
      }
      case OpKind::kAddScalar:
        push(0, go);
        break;
      case OpKind::kMatMul: {
        const Tensor& a = parent_value(0);
        const Tensor& b = parent_value(1);
        const std::size_t rows = a.shape()[0], inner = a.shape()[1], cols = b.shape()[1];
        push(0, matmul_nt(go, b.data(), rows, cols, inner));
        push(1, matmul_tn(a.data(), go, rows, inner, cols));
        break;
      }
      case OpKind::kSum:
      case OpKind::kMean: {
        const std::size_t sz = parent_value(0).size();
        const double v = n.kind == OpKind::kMean ? go[0] / static_cast<double>(sz) : go[0];
        push(0, std::vector<double>(sz, v));
        break;
      }
      case OpKind::kRowSum: {
        const Tensor& a = parent_value(0);
        const std::size_t rows = a.rows(), cols = a.cols();
        std::vector<double> ga(rows * cols);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] = go[i];
        push(0, ga);
        break;
      }
      case OpKind::kSquare:
      case OpKind::kExp:
      case OpKind::kLog:
      case OpKind::kSigmoid:
      case OpKind::kSoftplus: {
        const auto a = parent_value(0).data();
        const auto y = n.value.data();
        std::vector<double> ga(go.size());
        for (std::size_t i = 0; i < go.size(); ++i) {
          double d = 0.0;
          switch (n.kind) {
            case OpKind::kSquare: d = 2.0 * a[i]; break;
            case OpKind::kExp: d = y[i]; break;
            case OpKind::kLog: d = 1.0 / a[i]; break;
            case OpKind::kSigmoid: d = y[i] * (1.0 - y[i]); break;
            default: d = stable_sigmoid(a[i]); break;
          }
          ga[i] = go[i] * d;
        }
        push(0, ga);
        break;
      }
      case OpKind::kLogSoftmax: {
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        const auto y = n.value.data();
        std::vector<double> ga(rows * cols);
        for (std::size_t i = 0; i < rows; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < cols; ++j) s += go[i * cols + j];
          for (std::size_t j = 0; j < cols; ++j)
            ga[i * cols + j] = go[i * cols + j] - std::exp(y[i * cols + j]) * s;
        }
        push(0, ga);
        break;
      }
      case OpKind::kBroadcast:
        push(0, reduce_to(go, out_shape, parent_value(0).shape()));
        break;
      case OpKind::kTranspose:
        push(0, transpose_values(Tensor(out_shape, go)).to_vector());
        break;
      case OpKind::kConcatCols: {
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
          const std::size_t pc = parent_value(k).cols();
          std::vector<double> gp(rows * pc);
          for (std::size_t i = 0; i < rows; ++i)
            std::copy_n(go.data() + i * cols + off, pc, gp.data() + i * pc);
          push(k, gp);
          off += pc;
        }
        break;
      }
      case OpKind::kSliceCols: {
        const Tensor& a = parent_value(0);
        const std::size_t rows = a.rows(), cols = a.cols();
        const std::size_t b = n.index[0], w = n.index[1] - n.index[0];
        std::vector<double> ga(rows * cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
          std::copy_n(go.data() + i * w, w, ga.data() + i * cols + b);
        push(0, ga);
        break;
      }
      case OpKind::kSelectRows: {
        const Tensor& a = parent_value(0);
        const std::size_t cols = a.cols();
        std::vector<double> ga(a.size(), 0.0);
        for (std::size_t i = 0; i < n.index.size(); ++i)
          for (std::size_t j = 0; j < cols; ++j) ga[n.index[i] * cols + j] += go[i * cols + j];
        push(0, ga);
        break;
      }
      case OpKind::kPairwiseSqDist: {
        const Tensor& a = parent_value(0);
        const Tensor& b = parent_value(1);
        const std::size_t na = a.rows(), nb = b.rows(), d = a.cols();
        const auto da = a.data();
        const auto db = b.data();
        std::vector<double> ga(na * d, 0.0), gb(nb * d, 0.0);
        for (std::size_t i = 0; i < na; ++i)
          for (std::size_t j = 0; j < nb; ++j) {
            const double w = 2.0 * go[i * nb + j];
            if (w == 0.0) continue;
            for (std::size_t k = 0; k < d; ++k) {
              const double diff = w * (da[i * d + k] - db[j * d + k]);
              ga[i * d + k] += diff;
              gb[j * d + k] -= diff;
            }
          }
        push(0, ga);
        push(1, gb);
        break;
      }
      case OpKind::kRbfKernelMean: {
        const Tensor& a = parent_value(0);
        const Tensor& b = parent_value(1);
        const std::size_t na = a.rows(), nb = b.rows(), d = a.cols();
        const auto da = a.data();
        const auto db = b.data();
        const double c = -2.0 * n.scalar * go[0] / (static_cast<double>(na) * static_cast<double>(nb));
        std::vector<double> ga(na * d, 0.0), gb(nb * d, 0.0), diff(d);
        for (std::size_t i = 0; i < na; ++i)
          for (std::size_t j = 0; j < nb; ++j) {
            double q = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
              diff[k] = da[i * d + k] - db[j * d + k];
              q += diff[k] * diff[k];
            }
            const double w = c * std::exp(-n.scalar * q);
            for (std::size_t k = 0; k < d; ++k) {
              ga[i * d + k] += w * diff[k];
              gb[j * d + k] -= w * diff[k];
            }
          }
        push(0, ga);
        push(1, gb);
        break;
      }
    }
  }
  return Gradients(tape, std::move(g));
}

// ---- public ops --------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return apply(OpKind::kAdd, {a, b}); }
Tensor sub(const Tensor& a, const Tensor& b) { return apply(OpKind::kSub, {a, b}); }
Tensor mul(const Tensor& a, const Tensor& b) { return apply(OpKind::kMul, {a, b}); }
Tensor div(const Tensor& a, const Tensor& b) { return apply(OpKind::kDiv, {a, b}); }
Tensor neg(const Tensor& a) { return apply(OpKind::kNeg, {a}); }
Tensor scale(const Tensor& a, double factor) { return apply(OpKind::kScale, {a}, factor); }
Tensor add_scalar(const Tensor& a, double value) { return apply(OpKind::kAddScalar, {a}, value); }
Tensor matmul(const Tensor& a, const Tensor& b) { return apply(OpKind::kMatMul, {a, b}); }
Tensor sum(const Tensor& a) { return apply(OpKind::kSum, {a}); }
Tensor mean(const Tensor& a) { return apply(OpKind::kMean, {a}); }
Tensor row_sum(const Tensor& a) { return apply(OpKind::kRowSum, {a}); }
Tensor square(const Tensor& a) { return apply(OpKind::kSquare, {a}); }
Tensor exp(const Tensor& a) { return apply(OpKind::kExp, {a}); }
Tensor log(const Tensor& a) { return apply(OpKind::kLog, {a}); }
Tensor sigmoid(const Tensor& a) { return apply(OpKind::kSigmoid, {a}); }
Tensor softplus(const Tensor& a) { return apply(OpKind::kSoftplus, {a}); }
Tensor log_softmax(const Tensor& a) { return apply(OpKind::kLogSoftmax, {a}); }
Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  return apply(OpKind::kBroadcast, {a}, 0.0, {}, shape);
}
Tensor transpose(const Tensor& a) { return apply(OpKind::kTranspose, {a}); }
Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  return apply(OpKind::kConcatCols, parts);
}
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  return apply(OpKind::kSliceCols, {a}, 0.0, {begin, end});
}
Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows) {
  return apply(OpKind::kSelectRows, {a}, 0.0, std::vector<std::size_t>(rows.begin(), rows.end()));
}
Tensor pairwise_sqdist(const Tensor& a, const Tensor& b) {
  return apply(OpKind::kPairwiseSqDist, {a, b});
}
Tensor rbf_kernel_mean(const Tensor& a, const Tensor& b, double gamma) {
  if (!(gamma > 0.0)) throw ContractError("rbf_kernel_mean: gamma must be positive");
  return apply(OpKind::kRbfKernelMean, {a, b}, gamma);
}

}  // namespace cftk
