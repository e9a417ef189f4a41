#ifndef INTRODRIVE_LAYERS_HPP
#define INTRODRIVE_LAYERS_HPP

// Parameter registry and the primitive trainable layers. Layers hold tensors
// that share buffers with their ParamStore entries, so optimizer updates are
// visible everywhere and Tape::watch resolves every copy to one leaf.

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "introdrive/tensor.hpp"

namespace introdrive {

class ParamStore {
 public:
  Tensor& create(const std::string& name, Shape shape) {
    for (auto& [n, t] : items_)
      if (n == name) throw ConfigError("duplicate parameter name: " + name);
    Tensor t = Tensor::zeros(std::move(shape));
    t.set_requires_grad(true);
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  Tensor& get(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return t;
    throw ConfigError("unknown parameter: " + name);
  }
  const Tensor& get(const std::string& name) const {
    return const_cast<ParamStore*>(this)->get(name);
  }

  bool has(const std::string& name) const {
    for (auto& [n, t] : items_)
      if (n == name) return true;
    return false;
  }

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

  std::size_t count() const { return items_.size(); }

  std::int64_t total_size() const {
    std::int64_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
  }

  void watch_all(Tape& tape) const {
    for (const auto& [_, t] : items_) tape.watch(t);
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

/// Xavier (Glorot) uniform fill: U(-a, a) with a = sqrt(6/(fan_in+fan_out)).
inline void xavier_fill(Tensor& t, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> uni(-limit, limit);
  double* d = t.mutable_data();
  for (std::int64_t i = 0; i < t.size(); ++i) d[i] = uni(rng);
}

/// He uniform fill, U(-a, a) with a = sqrt(6/fan_in). Used for the ReLU conv
/// stack: plain Xavier there attenuates activations ~15x over five layers,
/// which starves the visual pathway at small step budgets.
inline void he_fill(Tensor& t, int fan_in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> uni(-limit, limit);
  double* d = t.mutable_data();
  for (std::int64_t i = 0; i < t.size(); ++i) d[i] = uni(rng);
}

/// y = x.W + b with W stored (in x out); accepts a 1-D vector or a matrix of
/// row vectors.
class Affine {
 public:
  Affine() = default;
  Affine(ParamStore& ps, const std::string& name, int in, int out, std::mt19937_64& rng)
      : in_(in), out_(out) {
    w_ = ps.create(name + ".w", {in, out});
    b_ = ps.create(name + ".b", {out});
    xavier_fill(w_, in, out, rng);
  }

  Tensor operator()(Tape* tape, const Tensor& x) const {
    if (x.shape().size() == 1) {
      if (x.size() != in_)
        throw ShapeError("affine: input length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(in_));
      Tensor row = reshape(tape, x, {1, in_});
      Tensor y = add_rowvec(tape, matmul(tape, row, w_), b_);
      return reshape(tape, y, {out_});
    }
    if (x.shape().size() != 2 || x.dim(1) != in_)
      throw ShapeError("affine: input " + shape_str(x.shape()) + ", expected [*," +
                       std::to_string(in_) + "]");
    return add_rowvec(tape, matmul(tape, x, w_), b_);
  }

  int in() const { return in_; }
  int out() const { return out_; }
  Tensor& weight() { return w_; }
  Tensor& bias() { return b_; }

 private:
  int in_ = 0, out_ = 0;
  Tensor w_, b_;
};

/// LSTM cell: one affine map A : R^(M+d) -> R^(4M) over [h_prev; y], gate
/// blocks in the fixed order (i, f, o, g). Forget-gate bias starts at +1.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParamStore& ps, const std::string& name, int input_dim, int hidden, std::mt19937_64& rng)
      : input_dim_(input_dim), hidden_(hidden),
        gates_(ps, name + ".gates", hidden + input_dim, 4 * hidden, rng) {
    double* b = gates_.bias().mutable_data();
    for (int i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
  }

  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  const Affine& gates() const { return gates_; }
  Affine& gates() { return gates_; }

 private:
  int input_dim_ = 0, hidden_ = 0;
  Affine gates_;
};

struct LstmState {
  Tensor h, c;
};

/// One recurrence step: c = f*c_prev + i*g, h = o*tanh(c).
inline LstmState lstm_step(Tape* tape, const LstmCell& cell, const Tensor& y,
                           const Tensor& h_prev, const Tensor& c_prev) {
  const int m = cell.hidden();
  if (y.size() != cell.input_dim())
    throw ShapeError("lstm_step: input length " + std::to_string(y.size()) + ", cell expects " +
                     std::to_string(cell.input_dim()));
  if (h_prev.size() != m || c_prev.size() != m)
    throw ShapeError("lstm_step: state length mismatch with hidden size " + std::to_string(m));
  Tensor pre = cell.gates()(tape, concat(tape, {h_prev, y}));
  Tensor i = sigmoid(tape, slice(tape, pre, 0, m));
  Tensor f = sigmoid(tape, slice(tape, pre, m, m));
  Tensor o = sigmoid(tape, slice(tape, pre, 2 * m, m));
  Tensor g = tanh_op(tape, slice(tape, pre, 3 * m, m));
  Tensor c = add(tape, mul(tape, f, c_prev), mul(tape, i, g));
  Tensor h = mul(tape, o, tanh_op(tape, c));
  return {h, c};
}

/// ReLU MLP head: hidden dims applied in order, linear final layer.
class MlpHead {
 public:
  MlpHead() = default;
  MlpHead(ParamStore& ps, const std::string& name, int in, const std::vector<int>& hidden_dims,
          int out, std::mt19937_64& rng) {
    int cur = in;
    int idx = 0;
    for (int hdim : hidden_dims) {
      layers_.emplace_back(ps, name + ".fc" + std::to_string(idx++), cur, hdim, rng);
      cur = hdim;
    }
    layers_.emplace_back(ps, name + ".fc" + std::to_string(idx), cur, out, rng);
  }

  Tensor operator()(Tape* tape, const Tensor& x) const {
    Tensor cur = x;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) cur = relu(tape, layers_[i](tape, cur));
    return layers_.back()(tape, cur);
  }

 private:
  std::vector<Affine> layers_;
};

}  // namespace introdrive

#endif
