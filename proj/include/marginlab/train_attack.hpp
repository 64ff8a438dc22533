#pragma once

// Optimization and attack loops. Trainers run minibatch SGD with classical
// Nesterov momentum (gradient evaluated at the lookahead point); data terms
// are averaged over the batch while the orthogonality penalty is applied
// once per step. Setting adv_epsilon > 0 turns either trainer into
// adversarial training: each batch is replaced by its PGD perturbation
// before the gradient step, and adv_epsilon = 0 reduces exactly to standard
// training. The hard-margin SVM solver at the bottom provides the reference
// direction that separable training runs drift toward.

#include "marginlab/models.hpp"
#include "marginlab/ndops.hpp"
#include "marginlab/objectives.hpp"

#include <functional>
#include <numeric>
#include <vector>

namespace marginlab {

struct PgdParams {
  double epsilon = 1.0;  // l2 ball radius around each clean input
  double step = 0.01;    // ascent step length
  int iters = 1000;
  bool clip = true;      // keep iterates inside [clip_lo, clip_hi]^d
  double clip_lo = 0.0;
  double clip_hi = 1.0;
  bool random_start = false;  // start from a uniform ball draw instead of x0
  std::uint64_t seed = 0;     // only used by random_start
  LossKind loss = LossKind::logistic;  // binary attacks only
};

namespace detail {

/// Alternating projection onto B(x0, eps) intersect the box, two passes,
/// ending on the box so pixel bounds always hold exactly.
inline void project_rows(Matrix& X, const Matrix& X0, const PgdParams& p) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Index i = 0; i < X.rows(); ++i) {
      Vector delta = (X.row(i) - X0.row(i)).transpose();
      const double n = delta.norm();
      if (n > p.epsilon) delta *= p.epsilon / n;
      X.row(i) = X0.row(i) + delta.transpose();
    }
    if (p.clip) {
      X = X.cwiseMax(p.clip_lo).cwiseMin(p.clip_hi);
    }
  }
}

inline void ascend_rows(Matrix& X, const Matrix& grad, double step) {
  for (Index i = 0; i < X.rows(); ++i) {
    const double n = grad.row(i).norm();
    if (n > 0.0) X.row(i) += (step / n) * grad.row(i);
  }
}

/// Per-row uniform ball draws, substreamed by row so results do not depend
/// on batch composition.
inline Matrix random_start_rows(const Matrix& X0, const PgdParams& p) {
  Matrix X(X0.rows(), X0.cols());
  for (Index i = 0; i < X0.rows(); ++i) {
    RngStream rng(p.seed, static_cast<std::uint64_t>(i));
    X.row(i) =
        sample_ball(rng, X0.row(i).transpose(), p.epsilon).transpose();
  }
  project_rows(X, X0, p);
  return X;
}

}  // namespace detail

/// Projected gradient ascent on the pointwise base loss phi(y * w . x).
/// Deterministic: starts at the clean input, no random restarts. A zero
/// gradient leaves the iterate in place.
inline Matrix pgd_attack(const LinearModel& model, const Matrix& X0,
                         const Vector& y, const PgdParams& p) {
  if (!(p.epsilon >= 0.0)) throw std::invalid_argument("pgd_attack: epsilon >= 0");
  if (p.iters < 0 || !(p.step > 0.0)) throw std::invalid_argument("pgd_attack: bad step/iters");
  if (X0.rows() != y.size()) throw std::invalid_argument("pgd_attack: X rows != y size");
  if (p.epsilon == 0.0 || p.iters == 0) return X0;
  Matrix X = p.random_start ? detail::random_start_rows(X0, p) : X0;
  for (int it = 0; it < p.iters; ++it) {
    const Vector t = (X * model.w).cwiseProduct(y);
    Matrix grad(X.rows(), X.cols());
    for (Index i = 0; i < X.rows(); ++i) {
      grad.row(i) = (phi_slope(p.loss, t[i]) * y[i]) * model.w.transpose();
    }
    detail::ascend_rows(X, grad, p.step);
    detail::project_rows(X, X0, p);
  }
  return X;
}

/// Projected gradient ascent on cross entropy for the network.
inline Matrix pgd_attack(const MlpModel& model, const Matrix& X0,
                         const IntVector& y, const PgdParams& p) {
  if (!(p.epsilon >= 0.0)) throw std::invalid_argument("pgd_attack: epsilon >= 0");
  if (p.iters < 0 || !(p.step > 0.0)) throw std::invalid_argument("pgd_attack: bad step/iters");
  if (X0.rows() != y.size()) throw std::invalid_argument("pgd_attack: X rows != y size");
  if (p.epsilon == 0.0 || p.iters == 0) return X0;
  const Index n = X0.rows();
  const Index c = model.classes();
  Matrix X = p.random_start ? detail::random_start_rows(X0, p) : X0;
  for (int it = 0; it < p.iters; ++it) {
    const MlpForward f = model.forward(X);
    Matrix d_logits(n, c);
    for (Index i = 0; i < n; ++i) {
      const double zmax = f.logits.row(i).maxCoeff();
      const Vector e = (f.logits.row(i).array() - zmax).exp();
      d_logits.row(i) = (e / e.sum()).transpose();
      d_logits(i, y[i]) -= 1.0;
    }
    const Matrix grad = model.input_gradient(f, d_logits);
    detail::ascend_rows(X, grad, p.step);
    detail::project_rows(X, X0, p);
  }
  return X;
}

inline double clean_accuracy(const LinearModel& model, const Matrix& X,
                             const Vector& y) {
  if (X.rows() == 0) throw std::invalid_argument("clean_accuracy: empty set");
  const Vector s = model.scores(X);
  Index hits = 0;
  for (Index i = 0; i < s.size(); ++i) {
    const double pred = s[i] >= 0.0 ? 1.0 : -1.0;
    if (pred == y[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(X.rows());
}

inline double clean_accuracy(const MlpModel& model, const Matrix& X,
                             const IntVector& y) {
  if (X.rows() == 0) throw std::invalid_argument("clean_accuracy: empty set");
  const IntVector pred = model.predictions(X);
  Index hits = 0;
  for (Index i = 0; i < pred.size(); ++i) {
    if (pred[i] == y[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(X.rows());
}

/// Fraction of examples that are correctly classified on the clean input
/// AND still correctly classified after the attack. At epsilon = 0 this is
/// exactly the clean accuracy.
inline double robust_accuracy(const LinearModel& model, const Matrix& X,
                              const Vector& y, const PgdParams& p) {
  if (X.rows() == 0) throw std::invalid_argument("robust_accuracy: empty set");
  const Matrix Xadv = pgd_attack(model, X, y, p);
  const Vector s_clean = model.scores(X);
  const Vector s_adv = model.scores(Xadv);
  Index hits = 0;
  for (Index i = 0; i < X.rows(); ++i) {
    const double p0 = s_clean[i] >= 0.0 ? 1.0 : -1.0;
    const double p1 = s_adv[i] >= 0.0 ? 1.0 : -1.0;
    if (p0 == y[i] && p1 == y[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(X.rows());
}

inline double robust_accuracy(const MlpModel& model, const Matrix& X,
                              const IntVector& y, const PgdParams& p) {
  if (X.rows() == 0) throw std::invalid_argument("robust_accuracy: empty set");
  const Matrix Xadv = pgd_attack(model, X, y, p);
  const IntVector p0 = model.predictions(X);
  const IntVector p1 = model.predictions(Xadv);
  Index hits = 0;
  for (Index i = 0; i < X.rows(); ++i) {
    if (p0[i] == y[i] && p1[i] == y[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(X.rows());
}

struct SgdParams {
  double lr = 0.01;
  double momentum = 0.9;
  bool nesterov = true;
  Index batch = 128;
  int epochs = 1;
  std::uint64_t seed = 1;
  bool unit_sphere = false;  // project w back to ||w|| = 1 after each step
  double adv_epsilon = 0.0;  // > 0 enables adversarial training
  int adv_iters = 40;
  double adv_step = 0.01;
  bool adv_clip = true;
};

/// Called after each epoch with the 1-based epoch number.
using LinearCallback = std::function<void(int, const LinearModel&)>;
using MlpCallback = std::function<void(int, const MlpModel&)>;

/// Minibatch SGD on the binary objective, batch-mean gradients. Batches are
/// drawn from a fresh shuffle each epoch; the tail batch keeps its true
/// (smaller) size. Velocity starts at zero on every call.
inline void train_linear(LinearModel& model, const Matrix& X, const Vector& y,
                         const BinaryObjectiveParams& obj, const SgdParams& sgd,
                         const LinearCallback& after_epoch = nullptr) {
  const Index n = X.rows();
  if (n == 0) throw std::invalid_argument("train_linear: empty dataset");
  if (sgd.batch < 1 || !(sgd.lr > 0.0)) throw std::invalid_argument("train_linear: bad batch/lr");
  if (model.dim() != X.cols()) throw std::invalid_argument("train_linear: dim mismatch");
  RngStream rng(sgd.seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Vector velocity = Vector::Zero(model.dim());
  for (int epoch = 1; epoch <= sgd.epochs; ++epoch) {
    rng.shuffle(order);
    for (Index start = 0; start < n; start += sgd.batch) {
      const Index b = std::min(sgd.batch, n - start);
      Matrix Xb(b, X.cols());
      Vector yb(b);
      for (Index r = 0; r < b; ++r) {
        Xb.row(r) = X.row(order[static_cast<std::size_t>(start + r)]);
        yb[r] = y[order[static_cast<std::size_t>(start + r)]];
      }
      if (sgd.adv_epsilon > 0.0) {
        PgdParams atk;
        atk.epsilon = sgd.adv_epsilon;
        atk.step = sgd.adv_step;
        atk.iters = sgd.adv_iters;
        atk.clip = sgd.adv_clip;
        atk.loss = obj.loss;
        Xb = pgd_attack(model, Xb, yb, atk);
      }
      const bool look = sgd.nesterov && sgd.momentum > 0.0;
      LinearModel probe = model;
      if (look) probe.w += sgd.momentum * velocity;
      const BinaryEval eval = binary_objective(probe, Xb, yb, obj);
      if (!std::isfinite(eval.value)) {
        throw std::runtime_error("train_linear: non-finite loss at epoch " +
                                 std::to_string(epoch));
      }
      const Vector g = eval.grad / static_cast<double>(b);
      velocity = sgd.momentum * velocity - sgd.lr * g;
      model.w += velocity;
      if (sgd.unit_sphere) {
        const double n = model.w.norm();
        if (n > 0.0) model.w /= n;
      }
    }
    if (after_epoch) after_epoch(epoch, model);
  }
}

/// Minibatch SGD on the multiclass objective. Data gradients are batch
/// means; the orthogonality gradient is added once per step.
inline void train_mlp(MlpModel& model, const Matrix& X, const IntVector& y,
                      const MulticlassParams& obj, const SgdParams& sgd,
                      const MlpCallback& after_epoch = nullptr) {
  const Index n = X.rows();
  if (n == 0) throw std::invalid_argument("train_mlp: empty dataset");
  if (sgd.batch < 1 || !(sgd.lr > 0.0)) throw std::invalid_argument("train_mlp: bad batch/lr");
  if (model.dim() != X.cols()) throw std::invalid_argument("train_mlp: dim mismatch");
  RngStream rng(sgd.seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  MlpGrads velocity;
  velocity.setZero(model.dim(), model.hidden(), model.classes());
  for (int epoch = 1; epoch <= sgd.epochs; ++epoch) {
    rng.shuffle(order);
    for (Index start = 0; start < n; start += sgd.batch) {
      const Index b = std::min(sgd.batch, n - start);
      Matrix Xb(b, X.cols());
      IntVector yb(b);
      for (Index r = 0; r < b; ++r) {
        Xb.row(r) = X.row(order[static_cast<std::size_t>(start + r)]);
        yb[r] = y[order[static_cast<std::size_t>(start + r)]];
      }
      if (sgd.adv_epsilon > 0.0) {
        PgdParams atk;
        atk.epsilon = sgd.adv_epsilon;
        atk.step = sgd.adv_step;
        atk.iters = sgd.adv_iters;
        atk.clip = sgd.adv_clip;
        Xb = pgd_attack(model, Xb, yb, atk);
      }
      const bool look = sgd.nesterov && sgd.momentum > 0.0;
      MlpModel probe = model;
      if (look) {
        probe.W1 += sgd.momentum * velocity.dW1;
        probe.b1 += sgd.momentum * velocity.db1;
        probe.W2 += sgd.momentum * velocity.dW2;
        probe.b2 += sgd.momentum * velocity.db2;
      }
      const MulticlassEval eval = multiclass_objective(probe, Xb, yb, obj);
      if (!std::isfinite(eval.value())) {
        throw std::runtime_error("train_mlp: non-finite loss at epoch " +
                                 std::to_string(epoch));
      }
      const double inv_b = 1.0 / static_cast<double>(b);
      const double m = sgd.momentum;
      velocity.dW1 = m * velocity.dW1 -
                     sgd.lr * (inv_b * eval.data_grads.dW1 + eval.orth_grads.dW1);
      velocity.db1 = m * velocity.db1 - sgd.lr * inv_b * eval.data_grads.db1;
      velocity.dW2 = m * velocity.dW2 -
                     sgd.lr * (inv_b * eval.data_grads.dW2 + eval.orth_grads.dW2);
      velocity.db2 = m * velocity.db2 - sgd.lr * inv_b * eval.data_grads.db2;
      model.W1 += velocity.dW1;
      model.b1 += velocity.db1;
      model.W2 += velocity.dW2;
      model.b2 += velocity.db2;
      if (!model.use_bias) {
        model.b1.setZero();
        model.b2.setZero();
      }
    }
    if (after_epoch) after_epoch(epoch, model);
  }
}

struct SvmResult {
  Vector w;             // max-margin direction, unit norm
  double margin = 0.0;  // geometric margin: 1 / norm of the raw solution
  int sweeps = 0;
  double violation = 0.0;  // final max KKT violation
};

/// Hard-margin SVM (no intercept) by dual coordinate ascent:
///   alpha_i <- max(0, alpha_i + (1 - y_i w.x_i) / ||x_i||^2),
/// w maintained incrementally, sweep order reshuffled each pass. Stops when
/// the largest KKT violation drops to tol. Throws if the data cannot be
/// separated (dual diverges or the sweep cap is hit first).
inline SvmResult svm_hard_margin(const Matrix& X, const Vector& y,
                                 double tol = 1e-6, int max_sweeps = 100000,
                                 std::uint64_t seed = 11) {
  const Index n = X.rows();
  if (n == 0 || X.rows() != y.size()) throw std::invalid_argument("svm_hard_margin: bad shapes");
  // Row-major copy: the sweeps walk rows, so keep each example contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
      Xr = X;
  Vector sq(n);
  for (Index i = 0; i < n; ++i) {
    sq[i] = Xr.row(i).squaredNorm();
    if (sq[i] == 0.0) {
      throw std::runtime_error("svm_hard_margin: zero example cannot satisfy a homogeneous margin");
    }
    if (y[i] != 1.0 && y[i] != -1.0) {
      throw std::invalid_argument("svm_hard_margin: labels must be +/-1");
    }
  }
  RngStream rng(seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Vector alpha = Vector::Zero(n);
  Vector w = Vector::Zero(X.cols());
  SvmResult out;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    rng.shuffle(order);
    for (const Index i : order) {
      const double grad = 1.0 - y[i] * Xr.row(i).dot(w.transpose());
      const double next = std::max(0.0, alpha[i] + grad / sq[i]);
      const double delta = next - alpha[i];
      if (delta != 0.0) {
        alpha[i] = next;
        w += (delta * y[i]) * Xr.row(i).transpose();
      }
    }
    // At optimum every slack is <= 0 and alpha_i > 0 forces slack = 0.
    const Vector slack = Vector::Ones(n) - (Xr * w).cwiseProduct(y);
    double viol = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double v =
          alpha[i] > 0.0 ? std::abs(slack[i]) : std::max(0.0, slack[i]);
      viol = std::max(viol, v);
    }
    out.sweeps = sweep;
    out.violation = viol;
    if (viol <= tol) {
      const double wn = w.norm();
      if (wn == 0.0) throw std::runtime_error("svm_hard_margin: degenerate zero solution");
      out.margin = 1.0 / wn;
      out.w = w / wn;
      return out;
    }
    if (alpha.maxCoeff() > 1e10) {
      throw std::runtime_error("svm_hard_margin: dual diverging, data not separable");
    }
  }
  throw std::runtime_error("svm_hard_margin: no convergence within sweep cap");
}

}  // namespace marginlab
