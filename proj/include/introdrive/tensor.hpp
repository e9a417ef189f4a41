#ifndef INTRODRIVE_TENSOR_HPP
#define INTRODRIVE_TENSOR_HPP

// Dense f64 tensors with reverse-mode differentiation on a linear tape.
//
// Recording model: a Tape is created per forward pass. Persistent parameters
// are registered up front with Tape::watch (keyed by their data buffer, so
// copies sharing the buffer resolve to the same leaf). Ops take a Tape* and
// append a node when recording and at least one input is tracked; with a null
// or paused tape they are plain evaluations. Tensors are immutable once an op
// has written them; only optimizer updates between recordings may call
// mutable_data().
//
// Tape::backward walks nodes in reverse creation order (reverse topological
// by construction) exactly once. A second backward on the same tape is
// rejected with ContractError; re-record instead. Gradients accumulate in f64
// regardless of any narrower checkpoint storage.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <random>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "introdrive/common.hpp"

namespace introdrive {

class Tape;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return Tensor(std::move(shape), {});
  }
  static Tensor full(Shape shape, double value) {
    Tensor t(std::move(shape), {});
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
  }
  static Tensor from(Shape shape, std::vector<double> values) {
    if (numel(shape) != static_cast<std::int64_t>(values.size()))
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(std::move(values));
    return t;
  }
  static Tensor scalar(double v) { return from({1}, {v}); }

  const Shape& shape() const { return shape_; }
  int dim(std::size_t axis) const { return shape_.at(axis); }
  std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }
  bool empty() const { return !data_ || data_->empty(); }

  const double* data() const { return data_->data(); }
  const std::vector<double>& values() const { return *data_; }

  /// Writable view for optimizer updates and buffer fills between recordings.
  double* mutable_data() { return data_->data(); }

  double item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
    return (*data_)[0];
  }

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool v) {
    requires_grad_ = v;
    return *this;
  }

  bool has_nonfinite() const {
    for (double v : *data_)
      if (!std::isfinite(v)) return true;
    return false;
  }

  /// Same underlying buffer, new shape; element count must be preserved.
  Tensor reshaped(Shape shape) const {
    if (numel(shape) != size())
      throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                       " changes element count");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  /// Deep copy with its own buffer.
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    t.requires_grad_ = requires_grad_;
    return t;
  }

  const void* buffer_id() const { return data_.get(); }

 private:
  friend class Tape;

  Tensor(Shape shape, int) : shape_(std::move(shape)) {
    data_ = std::make_shared<std::vector<double>>(numel(shape_), 0.0);
  }
  Tensor(Shape shape, std::initializer_list<int>) : Tensor(std::move(shape), 0) {}

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  int node_ = -1;
  bool requires_grad_ = false;
};

class Tape {
 public:
  Tape() = default;

  /// Register a persistent parameter as a leaf node. Copies of the tensor
  /// that share its buffer are tracked too. The tensor must outlive the tape.
  void watch(const Tensor& t) {
    if (t.node_ >= 0) return;
    auto it = leaves_.find(t.buffer_id());
    if (it != leaves_.end()) return;
    int id = add_node(t.shape_, {});
    leaves_.emplace(t.buffer_id(), id);
  }

  bool recording() const { return recording_; }
  void set_recording(bool v) { recording_ = v; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Node id of a tensor on this tape, or -1 when untracked.
  int node_of(const Tensor& t) const {
    if (t.node_ >= 0) return t.node_;
    auto it = leaves_.find(t.buffer_id());
    return it == leaves_.end() ? -1 : it->second;
  }

  /// Reverse pass from a scalar loss. Single use per recording.
  void backward(const Tensor& loss) {
    if (consumed_)
      throw ContractError("tape already consumed by backward(); record a new tape");
    if (loss.size() != 1) throw ShapeError("backward() requires a scalar loss");
    int root = node_of(loss);
    if (root < 0) throw ContractError("loss tensor is not tracked on this tape");
    consumed_ = true;
    recording_ = false;
    grad_buf(root)[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      if (grads_[i] && nodes_[i].down) nodes_[i].down(*this, i);
    }
  }

  bool consumed() const { return consumed_; }

  bool has_grad(const Tensor& t) const {
    int id = node_of(t);
    return id >= 0 && grads_[id] != nullptr;
  }

  /// Gradient of the last backward() w.r.t. a tracked tensor (zeros if the
  /// loss did not depend on it).
  std::vector<double> grad(const Tensor& t) const {
    int id = node_of(t);
    if (id < 0) throw ContractError("grad() of an untracked tensor");
    if (!grads_[id]) return std::vector<double>(t.size(), 0.0);
    return *grads_[id];
  }

  // --- op-author interface ---

  int add_node(Shape shape, std::function<void(Tape&, int)> down) {
    nodes_.push_back(Node{std::move(shape), std::move(down)});
    grads_.push_back(nullptr);
    return static_cast<int>(nodes_.size()) - 1;
  }

  void attach(Tensor& t, std::function<void(Tape&, int)> down) {
    if (consumed_) throw ContractError("cannot record ops on a consumed tape");
    t.node_ = add_node(t.shape_, std::move(down));
  }

  double* grad_buf(int node) {
    if (!grads_[node])
      grads_[node] = std::make_unique<std::vector<double>>(numel(nodes_[node].shape), 0.0);
    return grads_[node]->data();
  }

  const std::vector<double>& grad_ref(int node) const { return *grads_[node]; }
  bool grad_present(int node) const { return grads_[node] != nullptr; }

 private:
  struct Node {
    Shape shape;
    std::function<void(Tape&, int)> down;
  };

  std::vector<Node> nodes_;
  std::vector<std::unique_ptr<std::vector<double>>> grads_;
  std::unordered_map<const void*, int> leaves_;
  bool recording_ = true;
  bool consumed_ = false;
};

namespace detail {

inline int tracked_node(Tape* tape, const Tensor& t) {
  return tape ? tape->node_of(t) : -1;
}

inline bool should_record(Tape* tape, std::initializer_list<int> parents) {
  if (!tape || !tape->recording()) return false;
  for (int p : parents)
    if (p >= 0) return true;
  return false;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

inline Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Tensor r = Tensor::from(a.shape(), std::move(out));
  int pa = detail::tracked_node(tape, a), pb = detail::tracked_node(tape, b);
  if (detail::should_record(tape, {pa, pb})) {
    tape->attach(r, [pa, pb](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      if (pa >= 0) {
        double* ga = t.grad_buf(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (pb >= 0) {
        double* gb = t.grad_buf(pb);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return r;
}

inline Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  Tensor r = Tensor::from(a.shape(), std::move(out));
  int pa = detail::tracked_node(tape, a), pb = detail::tracked_node(tape, b);
  if (detail::should_record(tape, {pa, pb})) {
    tape->attach(r, [pa, pb](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      if (pa >= 0) {
        double* ga = t.grad_buf(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (pb >= 0) {
        double* gb = t.grad_buf(pb);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return r;
}

inline Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor r = Tensor::from(a.shape(), std::move(out));
  int pa = detail::tracked_node(tape, a), pb = detail::tracked_node(tape, b);
  if (detail::should_record(tape, {pa, pb})) {
    tape->attach(r, [pa, pb, a, b](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      if (pa >= 0) {
        double* ga = t.grad_buf(pa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
      }
      if (pb >= 0) {
        double* gb = t.grad_buf(pb);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
      }
    });
  }
  return r;
}

inline Tensor scale(Tape* tape, const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * s;
  Tensor r = Tensor::from(a.shape(), std::move(out));
  int pa = detail::tracked_node(tape, a);
  if (detail::should_record(tape, {pa})) {
    tape->attach(r, [pa, s](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double* ga = t.grad_buf(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
  }
  return r;
}

inline Tensor neg(Tape* tape, const Tensor& a) { return scale(tape, a, -1.0); }

inline Tensor square(Tape* tape, const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * a.data()[i];
  Tensor r = Tensor::from(a.shape(), std::move(out));
  int pa = detail::tracked_node(tape, a);
  if (detail::should_record(tape, {pa})) {
    tape->attach(r, [pa, a](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double* ga = t.grad_buf(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * a.data()[i] * g[i];
    });
  }
  return r;
}

inline Tensor relu(Tape* tape, const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  Tensor r = Tensor::from(a.shape(), std::move(out));
  int pa = detail::tracked_node(tape, a);
  if (detail::should_record(tape, {pa})) {
    tape->attach(r, [pa, a](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double* ga = t.grad_buf(pa);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a.data()[i] > 0.0) ga[i] += g[i];
    });
  }
  return r;
}

inline Tensor sigmoid(Tape* tape, const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.data()[i]));
  Tensor r = Tensor::from(a.shape(), std::move(out));
  int pa = detail::tracked_node(tape, a);
  if (detail::should_record(tape, {pa})) {
    tape->attach(r, [pa, r](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double* ga = t.grad_buf(pa);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double y = r.data()[i];
        ga[i] += g[i] * y * (1.0 - y);
      }
    });
  }
  return r;
}

inline Tensor tanh_op(Tape* tape, const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a.data()[i]);
  Tensor r = Tensor::from(a.shape(), std::move(out));
  int pa = detail::tracked_node(tape, a);
  if (detail::should_record(tape, {pa})) {
    tape->attach(r, [pa, r](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double* ga = t.grad_buf(pa);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double y = r.data()[i];
        ga[i] += g[i] * (1.0 - y * y);
      }
    });
  }
  return r;
}

// ---------------------------------------------------------------------------
// Structure ops
// ---------------------------------------------------------------------------

inline Tensor reshape(Tape* tape, const Tensor& a, Shape shape) {
  Tensor r = a.reshaped(shape);
  int pa = detail::tracked_node(tape, a);
  if (detail::should_record(tape, {pa})) {
    // fresh node so the reshaped tensor has its own grad buffer of the new shape
    Tensor copy = Tensor::from(std::move(shape), std::vector<double>(a.values()));
    tape->attach(copy, [pa](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double* ga = t.grad_buf(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return copy;
  }
  return r;
}

inline Tensor concat(Tape* tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  std::int64_t n = 0;
  for (const auto& p : parts) n += p.size();
  std::vector<double> out;
  out.reserve(n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor r = Tensor::from({static_cast<int>(n)}, std::move(out));

  std::vector<int> ids(parts.size());
  bool any = false;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    ids[i] = detail::tracked_node(tape, parts[i]);
    any = any || ids[i] >= 0;
  }
  if (tape && tape->recording() && any) {
    std::vector<std::int64_t> sizes(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) sizes[i] = parts[i].size();
    tape->attach(r, [ids, sizes](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      std::int64_t off = 0;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= 0) {
          double* gp = t.grad_buf(ids[i]);
          for (std::int64_t j = 0; j < sizes[i]; ++j) gp[j] += g[off + j];
        }
        off += sizes[i];
      }
    });
  }
  return r;
}

inline Tensor slice(Tape* tape, const Tensor& a, std::int64_t start, std::int64_t len) {
  if (start < 0 || start + len > a.size())
    throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") out of range for size " + std::to_string(a.size()));
  std::vector<double> out(a.data() + start, a.data() + start + len);
  Tensor r = Tensor::from({static_cast<int>(len)}, std::move(out));
  int pa = detail::tracked_node(tape, a);
  if (detail::should_record(tape, {pa})) {
    tape->attach(r, [pa, start, len](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double* ga = t.grad_buf(pa);
      for (std::int64_t i = 0; i < len; ++i) ga[start + i] += g[i];
    });
  }
  return r;
}

/// Stack equal-length vectors as the rows of a matrix.
inline Tensor concat_rows(Tape* tape, const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("concat_rows of zero tensors");
  const std::int64_t w = rows[0].size();
  for (const auto& r : rows)
    if (r.size() != w) throw ShapeError("concat_rows: ragged row lengths");
  Tensor flat = concat(tape, rows);
  return reshape(tape, flat, {static_cast<int>(rows.size()), static_cast<int>(w)});
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw ShapeError("matmul expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner axis mismatch " + std::to_string(k) + " vs " +
                     std::to_string(k2));
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  {
    detail::ConstMatMap A(a.data(), m, k), B(b.data(), k, n);
    detail::MatMap C(out.data(), m, n);
    C.noalias() = A * B;
  }
  Tensor r = Tensor::from({m, n}, std::move(out));
  int pa = detail::tracked_node(tape, a), pb = detail::tracked_node(tape, b);
  if (detail::should_record(tape, {pa, pb})) {
    tape->attach(r, [pa, pb, a, b, m, k, n](Tape& t, int self) {
      detail::ConstMatMap G(t.grad_ref(self).data(), m, n);
      if (pa >= 0) {
        detail::ConstMatMap B(b.data(), k, n);
        detail::MatMap GA(t.grad_buf(pa), m, k);
        GA.noalias() += G * B.transpose();
      }
      if (pb >= 0) {
        detail::ConstMatMap A(a.data(), m, k);
        detail::MatMap GB(t.grad_buf(pb), k, n);
        GB.noalias() += A.transpose() * G;
      }
    });
  }
  return r;
}

/// M(n×m) + row vector v(m) broadcast over rows.
inline Tensor add_rowvec(Tape* tape, const Tensor& m, const Tensor& v) {
  if (m.shape().size() != 2 || v.size() != m.dim(1))
    throw ShapeError("add_rowvec: " + shape_str(m.shape()) + " + " + shape_str(v.shape()));
  const int rows = m.dim(0), cols = m.dim(1);
  std::vector<double> out(m.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(r) * cols + c] = m.data()[static_cast<std::size_t>(r) * cols + c] + v.data()[c];
  Tensor res = Tensor::from(m.shape(), std::move(out));
  int pm = detail::tracked_node(tape, m), pv = detail::tracked_node(tape, v);
  if (detail::should_record(tape, {pm, pv})) {
    tape->attach(res, [pm, pv, rows, cols](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      if (pm >= 0) {
        double* gm = t.grad_buf(pm);
        for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      }
      if (pv >= 0) {
        double* gv = t.grad_buf(pv);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) gv[c] += g[static_cast<std::size_t>(r) * cols + c];
      }
    });
  }
  return res;
}

/// v(n) + scalar tensor broadcast.
inline Tensor add_scalar_bcast(Tape* tape, const Tensor& v, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("add_scalar_bcast: second argument must be scalar");
  std::vector<double> out(v.size());
  const double sv = s.item();
  for (std::int64_t i = 0; i < v.size(); ++i) out[i] = v.data()[i] + sv;
  Tensor r = Tensor::from(v.shape(), std::move(out));
  int pv = detail::tracked_node(tape, v), ps = detail::tracked_node(tape, s);
  if (detail::should_record(tape, {pv, ps})) {
    tape->attach(r, [pv, ps](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      if (pv >= 0) {
        double* gv = t.grad_buf(pv);
        for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
      }
      if (ps >= 0) {
        double* gs = t.grad_buf(ps);
        for (std::size_t i = 0; i < g.size(); ++i) gs[0] += g[i];
      }
    });
  }
  return r;
}

inline Tensor transpose2d(Tape* tape, const Tensor& a) {
  if (a.shape().size() != 2)
    throw ShapeError("transpose2d expects rank-2, got " + shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = a.data()[static_cast<std::size_t>(i) * n + j];
  Tensor r = Tensor::from({n, m}, std::move(out));
  int pa = detail::tracked_node(tape, a);
  if (detail::should_record(tape, {pa})) {
    tape->attach(r, [pa, m, n](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double* ga = t.grad_buf(pa);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          ga[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
    });
  }
  return r;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(Tape* tape, const Tensor& a) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a.data()[i];
  Tensor r = Tensor::scalar(s);
  int pa = detail::tracked_node(tape, a);
  if (detail::should_record(tape, {pa})) {
    tape->attach(r, [pa, n = a.size()](Tape& t, int self) {
      const double g = t.grad_ref(self)[0];
      double* ga = t.grad_buf(pa);
      for (std::int64_t i = 0; i < n; ++i) ga[i] += g;
    });
  }
  return r;
}

inline Tensor mean(Tape* tape, const Tensor& a) {
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.size()));
}

/// Scalar element pick (used for NLL target selection).
inline Tensor pick(Tape* tape, const Tensor& a, std::int64_t index) {
  if (index < 0 || index >= a.size())
    throw ShapeError("pick index " + std::to_string(index) + " out of range");
  Tensor r = Tensor::scalar(a.data()[index]);
  int pa = detail::tracked_node(tape, a);
  if (detail::should_record(tape, {pa})) {
    tape->attach(r, [pa, index](Tape& t, int self) {
      t.grad_buf(pa)[index] += t.grad_ref(self)[0];
    });
  }
  return r;
}

// ---------------------------------------------------------------------------
// Softmax family
// ---------------------------------------------------------------------------

/// Max-shifted softmax over all elements (treated as one distribution).
inline Tensor softmax(Tape* tape, const Tensor& z) {
  if (z.size() < 1) throw ShapeError("softmax of empty tensor");
  double mx = z.data()[0];
  for (std::int64_t i = 1; i < z.size(); ++i) mx = std::max(mx, z.data()[i]);
  std::vector<double> out(z.size());
  double total = 0.0;
  for (std::int64_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z.data()[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  Tensor r = Tensor::from(z.shape(), std::move(out));
  int pz = detail::tracked_node(tape, z);
  if (detail::should_record(tape, {pz})) {
    tape->attach(r, [pz, r](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * r.data()[i];
      double* gz = t.grad_buf(pz);
      for (std::size_t i = 0; i < g.size(); ++i) gz[i] += r.data()[i] * (g[i] - dot);
    });
  }
  return r;
}

inline Tensor log_softmax(Tape* tape, const Tensor& z) {
  if (z.size() < 1) throw ShapeError("log_softmax of empty tensor");
  double mx = z.data()[0];
  for (std::int64_t i = 1; i < z.size(); ++i) mx = std::max(mx, z.data()[i]);
  double total = 0.0;
  for (std::int64_t i = 0; i < z.size(); ++i) total += std::exp(z.data()[i] - mx);
  const double lse = mx + std::log(total);
  std::vector<double> out(z.size());
  for (std::int64_t i = 0; i < z.size(); ++i) out[i] = z.data()[i] - lse;
  Tensor r = Tensor::from(z.shape(), std::move(out));
  int pz = detail::tracked_node(tape, z);
  if (detail::should_record(tape, {pz})) {
    tape->attach(r, [pz, r](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double gsum = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) gsum += g[i];
      double* gz = t.grad_buf(pz);
      for (std::size_t i = 0; i < g.size(); ++i) gz[i] += g[i] - std::exp(r.data()[i]) * gsum;
    });
  }
  return r;
}

/// Shannon entropy -sum(p ln p) in nats with 0*ln(0) := 0. Assumes p is a
/// softmax output; see attention_entropy() for the validating front door.
inline Tensor entropy_op(Tape* tape, const Tensor& p) {
  double h = 0.0;
  for (std::int64_t i = 0; i < p.size(); ++i) {
    const double v = p.data()[i];
    if (v > 0.0) h -= v * std::log(v);
  }
  Tensor r = Tensor::scalar(h);
  int pp = detail::tracked_node(tape, p);
  if (detail::should_record(tape, {pp})) {
    tape->attach(r, [pp, p](Tape& t, int self) {
      const double g = t.grad_ref(self)[0];
      double* gp = t.grad_buf(pp);
      for (std::int64_t i = 0; i < p.size(); ++i) {
        const double v = p.data()[i];
        if (v > 0.0) gp[i] += g * (-(std::log(v) + 1.0));
      }
    });
  }
  return r;
}

/// KL(p || q) where p is a fixed reference distribution and the gradient
/// flows only into q. Logs are floored at kKlEps to survive an underflowing
/// q entry (softmax outputs stored in 32-bit checkpoints can round to 0).
inline constexpr double kKlEps = 1e-12;

inline Tensor kl_const_p(Tape* tape, const std::vector<double>& p, const Tensor& q) {
  if (static_cast<std::int64_t>(p.size()) != q.size())
    throw ShapeError("kl_const_p: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) d += p[i] * (std::log(std::max(p[i], kKlEps)) - std::log(std::max(q.data()[i], kKlEps)));
  }
  Tensor r = Tensor::scalar(d);
  int pq = detail::tracked_node(tape, q);
  if (detail::should_record(tape, {pq})) {
    tape->attach(r, [pq, p, q](Tape& t, int self) {
      const double g = t.grad_ref(self)[0];
      double* gq = t.grad_buf(pq);
      for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0 && q.data()[i] > kKlEps) gq[i] -= g * p[i] / q.data()[i];
    });
  }
  return r;
}

/// Embedding row lookup; backward scatters into the selected row.
inline Tensor embed_row(Tape* tape, const Tensor& table, int row) {
  if (table.shape().size() != 2) throw ShapeError("embed_row expects a 2-D table");
  const int v = table.dim(0), e = table.dim(1);
  if (row < 0 || row >= v)
    throw ContractError("embed_row: id " + std::to_string(row) + " outside vocabulary of " +
                        std::to_string(v));
  std::vector<double> out(table.data() + static_cast<std::size_t>(row) * e,
                          table.data() + static_cast<std::size_t>(row + 1) * e);
  Tensor r = Tensor::from({e}, std::move(out));
  int pt = detail::tracked_node(tape, table);
  if (detail::should_record(tape, {pt})) {
    tape->attach(r, [pt, row, e](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double* gt = t.grad_buf(pt);
      for (int i = 0; i < e; ++i) gt[static_cast<std::size_t>(row) * e + i] += g[i];
    });
  }
  return r;
}

/// Inverted dropout; identity when not training. The mask is drawn from the
/// supplied RNG so runs stay reproducible.
template <typename Rng>
inline Tensor dropout(Tape* tape, const Tensor& a, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must be in [0,1)");
  if (!training || rate == 0.0) return a;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto mask = std::make_shared<std::vector<double>>(a.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> out(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) {
    (*mask)[i] = uni(rng) < rate ? 0.0 : keep_scale;
    out[i] = a.data()[i] * (*mask)[i];
  }
  Tensor r = Tensor::from(a.shape(), std::move(out));
  int pa = detail::tracked_node(tape, a);
  if (detail::should_record(tape, {pa})) {
    tape->attach(r, [pa, mask](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      double* ga = t.grad_buf(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*mask)[i];
    });
  }
  return r;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation with zero padding, per deep-learning
// convention; no kernel flip)
// ---------------------------------------------------------------------------

namespace detail {

inline void im2col(const double* img, int c, int h, int w, int kh, int kw, int sh, int sw,
                   int ph, int pw, int oh, int ow, double* col) {
  // col is (c*kh*kw) x (oh*ow), row-major
  const std::int64_t ncols = static_cast<std::int64_t>(oh) * ow;
  std::int64_t row = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++row) {
        double* dst = col + row * ncols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * sh - ph + ky;
          if (iy < 0 || iy >= h) {
            std::memset(dst + static_cast<std::int64_t>(oy) * ow, 0, sizeof(double) * ow);
            continue;
          }
          const double* src = img + (static_cast<std::int64_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * sw - pw + kx;
            dst[static_cast<std::int64_t>(oy) * ow + ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

inline void col2im_add(const double* col, int c, int h, int w, int kh, int kw, int sh, int sw,
                       int ph, int pw, int oh, int ow, double* img) {
  const std::int64_t ncols = static_cast<std::int64_t>(oh) * ow;
  std::int64_t row = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++row) {
        const double* src = col + row * ncols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * sh - ph + ky;
          if (iy < 0 || iy >= h) continue;
          double* dst = img + (static_cast<std::int64_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * sw - pw + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[static_cast<std::int64_t>(oy) * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// conv2d(input[C,H,W], kernel[F,C,kh,kw]) -> [F,H',W'] with
/// H' = floor((H + 2*ph - kh)/sh) + 1 and likewise for W'.
inline Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& kernel, int stride_h,
                     int stride_w, int pad_h, int pad_w) {
  if (input.shape().size() != 3)
    throw ShapeError("conv2d input must be [C,H,W], got " + shape_str(input.shape()));
  if (kernel.shape().size() != 4)
    throw ShapeError("conv2d kernel must be [F,C,kh,kw], got " + shape_str(kernel.shape()));
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int f = kernel.dim(0), kc = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kc != c)
    throw ShapeError("conv2d: channel axis mismatch, input has " + std::to_string(c) +
                     " channels but kernel expects " + std::to_string(kc));
  if (kh > h + 2 * pad_h)
    throw ShapeError("conv2d: kernel height " + std::to_string(kh) +
                     " exceeds padded input height " + std::to_string(h + 2 * pad_h));
  if (kw > w + 2 * pad_w)
    throw ShapeError("conv2d: kernel width " + std::to_string(kw) +
                     " exceeds padded input width " + std::to_string(w + 2 * pad_w));
  if (stride_h < 1 || stride_w < 1) throw ContractError("conv2d: stride must be >= 1");
  const int oh = (h + 2 * pad_h - kh) / stride_h + 1;
  const int ow = (w + 2 * pad_w - kw) / stride_w + 1;
  const std::int64_t k_rows = static_cast<std::int64_t>(c) * kh * kw;
  const std::int64_t ncols = static_cast<std::int64_t>(oh) * ow;

  std::vector<double> col(k_rows * ncols);
  detail::im2col(input.data(), c, h, w, kh, kw, stride_h, stride_w, pad_h, pad_w, oh, ow,
                 col.data());
  std::vector<double> out(static_cast<std::size_t>(f) * ncols);
  {
    detail::ConstMatMap K(kernel.data(), f, k_rows);
    detail::ConstMatMap C(col.data(), k_rows, ncols);
    detail::MatMap O(out.data(), f, ncols);
    O.noalias() = K * C;
  }
  Tensor r = Tensor::from({f, oh, ow}, std::move(out));
  int pi = detail::tracked_node(tape, input), pk = detail::tracked_node(tape, kernel);
  if (detail::should_record(tape, {pi, pk})) {
    // the col matrix is recomputed in backward rather than captured: it is by
    // far the largest intermediate
    tape->attach(r, [pi, pk, input, kernel, c, h, w, f, kh, kw, stride_h, stride_w, pad_h, pad_w,
                     oh, ow, k_rows, ncols](Tape& t, int self) {
      detail::ConstMatMap G(t.grad_ref(self).data(), f, ncols);
      if (pk >= 0) {
        std::vector<double> col(k_rows * ncols);
        detail::im2col(input.data(), c, h, w, kh, kw, stride_h, stride_w, pad_h, pad_w, oh, ow,
                       col.data());
        detail::ConstMatMap C(col.data(), k_rows, ncols);
        detail::MatMap GK(t.grad_buf(pk), f, k_rows);
        GK.noalias() += G * C.transpose();
      }
      if (pi >= 0) {
        std::vector<double> gcol(k_rows * ncols);
        detail::ConstMatMap K(kernel.data(), f, k_rows);
        detail::MatMap GC(gcol.data(), k_rows, ncols);
        GC.noalias() = K.transpose() * G;
        detail::col2im_add(gcol.data(), c, h, w, kh, kw, stride_h, stride_w, pad_h, pad_w, oh, ow,
                           t.grad_buf(pi));
      }
    });
  }
  return r;
}

/// Per-channel bias add on a [C,H,W] map.
inline Tensor add_channel_bias(Tape* tape, const Tensor& x, const Tensor& bias) {
  if (x.shape().size() != 3 || bias.size() != x.dim(0))
    throw ShapeError("add_channel_bias: " + shape_str(x.shape()) + " + " +
                     shape_str(bias.shape()));
  const int c = x.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(1)) * x.dim(2);
  std::vector<double> out(x.size());
  for (int ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < plane; ++i)
      out[ch * plane + i] = x.data()[ch * plane + i] + bias.data()[ch];
  Tensor r = Tensor::from(x.shape(), std::move(out));
  int px = detail::tracked_node(tape, x), pb = detail::tracked_node(tape, bias);
  if (detail::should_record(tape, {px, pb})) {
    tape->attach(r, [px, pb, c, plane](Tape& t, int self) {
      const auto& g = t.grad_ref(self);
      if (px >= 0) {
        double* gx = t.grad_buf(px);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (pb >= 0) {
        double* gb = t.grad_buf(pb);
        for (int ch = 0; ch < c; ++ch)
          for (std::int64_t i = 0; i < plane; ++i) gb[ch] += g[ch * plane + i];
      }
    });
  }
  return r;
}

}  // namespace introdrive

#endif
