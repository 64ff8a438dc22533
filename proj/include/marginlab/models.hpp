#pragma once

// Model zoo: a homogeneous linear scorer for binary problems and a
// one-hidden-layer ReLU network for multiclass ones. The network exposes an
// explicit backward pass that accepts upstream gradients at the logits and,
// optionally, extra gradient injected at the hidden features; it can also
// return the gradient with respect to the inputs, which attack and margin
// code rely on. Checkpoints are a small binary container, little-endian f64.

#include "marginlab/ndops.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <variant>

namespace marginlab {

/// f(x) = w . x, no intercept. Sign of the score is the predicted label;
/// a score of exactly zero predicts +1.
struct LinearModel {
  Vector w;

  explicit LinearModel(Index dim = 0) : w(Vector::Zero(dim)) {}
  explicit LinearModel(Vector weights) : w(std::move(weights)) {}

  Index dim() const { return w.size(); }

  double score(const Vector& x) const { return w.dot(x); }
  Vector scores(const Matrix& X) const { return X * w; }
  double predict(const Vector& x) const { return score(x) >= 0.0 ? 1.0 : -1.0; }
};

/// Multiclass linear scorer: logits = W x, prediction by argmax with ties
/// broken toward the lowest class index.
struct MulticlassLinearModel {
  Matrix W;  // c x d

  MulticlassLinearModel() = default;
  MulticlassLinearModel(Index c, Index d) : W(Matrix::Zero(c, d)) {}

  Index dim() const { return W.cols(); }
  Index classes() const { return W.rows(); }

  Vector logits(const Vector& x) const { return W * x; }

  int predict(const Vector& x) const {
    const Vector z = W * x;
    int best = 0;
    for (Index k = 1; k < z.size(); ++k) {
      if (z[k] > z[best]) best = static_cast<int>(k);
    }
    return best;
  }
};

/// Parameter gradients for MlpModel, same shapes as the parameters.
struct MlpGrads {
  Matrix dW1;
  Vector db1;
  Matrix dW2;
  Vector db2;

  void setZero(Index d, Index h, Index c) {
    dW1 = Matrix::Zero(h, d);
    db1 = Vector::Zero(h);
    dW2 = Matrix::Zero(c, h);
    db2 = Vector::Zero(c);
  }
};

/// Cached activations from one forward pass (row per example).
struct MlpForward {
  Matrix Z1;      // pre-activation, n x h
  Matrix H;       // relu(Z1), n x h
  Matrix logits;  // H * W2^T + b2, n x c
};

/// logits(x) = W2 relu(W1 x + b1) + b2. With use_bias=false both bias
/// vectors stay pinned at zero through init and training.
struct MlpModel {
  Matrix W1;  // h x d
  Vector b1;  // h
  Matrix W2;  // c x h
  Vector b2;  // c
  bool use_bias = true;

  MlpModel() = default;
  MlpModel(Index d, Index h, Index c, bool bias = true)
      : W1(Matrix::Zero(h, d)),
        b1(Vector::Zero(h)),
        W2(Matrix::Zero(c, h)),
        b2(Vector::Zero(c)),
        use_bias(bias) {}

  Index dim() const { return W1.cols(); }
  Index hidden() const { return W1.rows(); }
  Index classes() const { return W2.rows(); }

  /// Weights start uniform in (-a, a) with a = 1/sqrt(fan_in), which keeps
  /// the untrained per-layer spectral norms near 1; biases start at zero.
  void init(RngStream& rng) {
    const double a1 = 1.0 / std::sqrt(static_cast<double>(dim()));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden()));
    for (Index i = 0; i < W1.rows(); ++i)
      for (Index j = 0; j < W1.cols(); ++j) W1(i, j) = rng.uniform(-a1, a1);
    for (Index i = 0; i < W2.rows(); ++i)
      for (Index j = 0; j < W2.cols(); ++j) W2(i, j) = rng.uniform(-a2, a2);
    b1.setZero();
    b2.setZero();
  }

  MlpForward forward(const Matrix& X) const {
    MlpForward f;
    f.Z1.noalias() = X * W1.transpose();
    if (use_bias) f.Z1.rowwise() += b1.transpose();
    f.H = f.Z1.cwiseMax(0.0);
    f.logits.noalias() = f.H * W2.transpose();
    if (use_bias) f.logits.rowwise() += b2.transpose();
    return f;
  }

  Matrix features(const Matrix& X) const {
    Matrix Z = X * W1.transpose();
    if (use_bias) Z.rowwise() += b1.transpose();
    return Z.cwiseMax(0.0);
  }

  /// Accumulates parameter gradients for upstream gradient d_logits plus an
  /// optional extra gradient injected at H (pass an empty matrix to skip).
  /// The ReLU uses subgradient 0 at the kink. If dX is non-null it receives
  /// the input gradient. Gradients are sums over the batch rows.
  void backward(const Matrix& X, const MlpForward& f, const Matrix& d_logits,
                const Matrix& d_hidden_extra, MlpGrads& g,
                Matrix* dX = nullptr) const {
    g.dW2.noalias() += d_logits.transpose() * f.H;
    if (use_bias) g.db2 += d_logits.colwise().sum().transpose();
    Matrix d_hidden = d_logits * W2;
    if (d_hidden_extra.size() != 0) d_hidden += d_hidden_extra;
    Matrix dz =
        (f.Z1.array() > 0.0).cast<double>() * d_hidden.array();
    g.dW1.noalias() += dz.transpose() * X;
    if (use_bias) g.db1 += dz.colwise().sum().transpose();
    if (dX != nullptr) dX->noalias() = dz * W1;
  }

  /// Argmax predictions, ties toward the lowest class index.
  IntVector predictions(const Matrix& X) const {
    const Matrix logits = forward(X).logits;
    IntVector out(X.rows());
    for (Index i = 0; i < X.rows(); ++i) {
      int best = 0;
      for (Index k = 1; k < logits.cols(); ++k) {
        if (logits(i, k) > logits(i, best)) best = static_cast<int>(k);
      }
      out[i] = best;
    }
    return out;
  }

  /// Input gradient only (no parameter gradients), for attacks and margin
  /// estimates where the weights are frozen.
  Matrix input_gradient(const MlpForward& f, const Matrix& d_logits) const {
    const Matrix d_hidden = d_logits * W2;
    const Matrix dz =
        (f.Z1.array() > 0.0).cast<double>() * d_hidden.array();
    return dz * W1;
  }
};

using AnyModel = std::variant<LinearModel, MulticlassLinearModel, MlpModel>;

/// Final-layer rows scaled to unit norm, with the original norms returned.
/// Zero rows are left as-is and report norm 0.
inline Matrix unit_rows(const Matrix& W, Vector* norms = nullptr) {
  Matrix out = W;
  if (norms != nullptr) norms->resize(W.rows());
  for (Index i = 0; i < W.rows(); ++i) {
    const double n = W.row(i).norm();
    if (norms != nullptr) (*norms)[i] = n;
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

namespace detail {

constexpr char kCheckpointMagic[8] = {'M', 'L', 'M', 'O', 'D', 'E', 'L', '1'};

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return v;
}

inline void write_tensor(std::ostream& out, const Matrix& m) {
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  }
}

inline Matrix read_tensor(std::istream& in, const std::string& path) {
  const auto rows = read_u32(in, path);
  const auto cols = read_u32(in, path);
  Matrix m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < cols; ++j) {
      double v = 0;
      in.read(reinterpret_cast<char*>(&v), 8);
      if (!in) throw std::runtime_error("truncated checkpoint: " + path);
      m(i, j) = v;
    }
  }
  return m;
}

}  // namespace detail

inline void save_model(const std::string& path, const AnyModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(detail::kCheckpointMagic, 8);
  if (const auto* lin = std::get_if<LinearModel>(&model)) {
    detail::write_u32(out, 0);  // kind
    detail::write_u32(out, 0);  // flags
    detail::write_u32(out, 1);  // tensor count
    detail::write_tensor(out, lin->w);
  } else if (const auto* mlin = std::get_if<MulticlassLinearModel>(&model)) {
    detail::write_u32(out, 2);
    detail::write_u32(out, 0);
    detail::write_u32(out, 1);
    detail::write_tensor(out, mlin->W);
  } else {
    const auto& mlp = std::get<MlpModel>(model);
    detail::write_u32(out, 1);
    detail::write_u32(out, mlp.use_bias ? 1u : 0u);
    detail::write_u32(out, 4);
    detail::write_tensor(out, mlp.W1);
    detail::write_tensor(out, mlp.b1);
    detail::write_tensor(out, mlp.W2);
    detail::write_tensor(out, mlp.b2);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline AnyModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, 7) != 0) {
    throw std::runtime_error("not a model checkpoint: " + path);
  }
  if (magic[7] != detail::kCheckpointMagic[7]) {
    throw std::runtime_error("unsupported checkpoint version in " + path);
  }
  const auto kind = detail::read_u32(in, path);
  const auto flags = detail::read_u32(in, path);
  const auto count = detail::read_u32(in, path);
  if (kind == 0) {
    if (count != 1) throw std::runtime_error("bad tensor count: " + path);
    LinearModel lin;
    lin.w = detail::read_tensor(in, path).col(0);
    return lin;
  }
  if (kind == 1) {
    if (count != 4) throw std::runtime_error("bad tensor count: " + path);
    MlpModel mlp;
    mlp.W1 = detail::read_tensor(in, path);
    mlp.b1 = detail::read_tensor(in, path).col(0);
    mlp.W2 = detail::read_tensor(in, path);
    mlp.b2 = detail::read_tensor(in, path).col(0);
    mlp.use_bias = (flags & 1u) != 0;
    return mlp;
  }
  if (kind == 2) {
    if (count != 1) throw std::runtime_error("bad tensor count: " + path);
    MulticlassLinearModel mlin;
    mlin.W = detail::read_tensor(in, path);
    return mlin;
  }
  throw std::runtime_error("unknown model kind in " + path);
}

}  // namespace marginlab
