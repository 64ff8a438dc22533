#pragma once

// Training objectives. Binary problems use a classification-calibrated base
// loss minus a truncated-margin reward; multiclass networks use cross
// entropy, the same truncated reward applied to a normalized final layer in
// feature space, and an orthogonality penalty on the weight matrices.
// All batch terms are returned as sums over the batch; callers decide the
// normalization. Gradients take the zero element of the subdifferential at
// every kink (relu at 0, hinge at 1, truncation at 0 and tau).

#include "marginlab/models.hpp"
#include "marginlab/ndops.hpp"

#include <string>
#include <utility>
#include <vector>

namespace marginlab {

enum class LossKind { logistic, hinge, exponential };

inline LossKind loss_from_name(const std::string& name) {
  if (name == "logistic") return LossKind::logistic;
  if (name == "hinge") return LossKind::hinge;
  if (name == "exponential") return LossKind::exponential;
  throw std::invalid_argument("unknown loss: " + name);
}

inline const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::logistic: return "logistic";
    case LossKind::hinge: return "hinge";
    case LossKind::exponential: return "exponential";
  }
  throw std::logic_error("loss_name: bad enum");
}

/// Base loss phi(t); decreasing, bounded below, phi'(0) < 0.
inline double phi_value(LossKind kind, double t) {
  switch (kind) {
    case LossKind::logistic:
      // log(1 + exp(-t)) without overflow on either tail.
      return std::log1p(std::exp(-std::abs(t))) + std::max(-t, 0.0);
    case LossKind::hinge:
      return std::max(0.0, 1.0 - t);
    case LossKind::exponential:
      return std::exp(-t);
  }
  throw std::logic_error("phi_value: bad enum");
}

inline double phi_slope(LossKind kind, double t) {
  switch (kind) {
    case LossKind::logistic:
      return t >= 0.0 ? -std::exp(-t) / (1.0 + std::exp(-t))
                      : -1.0 / (1.0 + std::exp(t));
    case LossKind::hinge:
      return t < 1.0 ? -1.0 : 0.0;
    case LossKind::exponential:
      return -std::exp(-t);
  }
  throw std::logic_error("phi_slope: bad enum");
}

/// Two-sided truncation [t]_0^tau = min(max(t, 0), tau).
inline double truncate(double t, double tau) {
  if (tau < 0.0) throw std::invalid_argument("truncate: tau must be >= 0");
  return std::min(std::max(t, 0.0), tau);
}

/// Slope of the truncation: 1 strictly inside (0, tau), else 0.
inline double truncate_slope(double t, double tau) {
  if (tau < 0.0) throw std::invalid_argument("truncate_slope: tau must be >= 0");
  return (t > 0.0 && t < tau) ? 1.0 : 0.0;
}

/// Shifted hinge H_s(t) = max(0, s - t). The truncation is a difference of
/// two of these: H_tau(t) - H_0(t) = tau - [t]_0^tau, which is how the
/// nonconvex reward splits into convex parts.
inline double shifted_hinge(double s, double t) {
  return std::max(0.0, s - t);
}

/// The convex pair (H_tau(t), H_0(t)) whose difference is tau - [t]_0^tau.
inline std::pair<double, double> dc_pair(double t, double tau) {
  if (tau < 0.0) throw std::invalid_argument("dc_pair: tau must be >= 0");
  return {shifted_hinge(tau, t), shifted_hinge(0.0, t)};
}

/// Pointwise binary loss at signed score t: phi(t) - lambda * [t]_0^tau.
/// Bounded below by -lambda * tau.
inline double pointwise_loss(LossKind kind, double lambda, double tau,
                             double t) {
  if (lambda < 0.0) throw std::invalid_argument("pointwise_loss: lambda >= 0");
  return phi_value(kind, t) - lambda * truncate(t, tau);
}

inline double pointwise_slope(LossKind kind, double lambda, double tau,
                              double t) {
  if (lambda < 0.0) throw std::invalid_argument("pointwise_slope: lambda >= 0");
  return phi_slope(kind, t) - lambda * truncate_slope(t, tau);
}

/// Conditional risk of score alpha when P(y = +1 | x) = eta.
inline double conditional_risk(LossKind kind, double lambda, double tau,
                               double eta, double alpha) {
  return eta * pointwise_loss(kind, lambda, tau, alpha) +
         (1.0 - eta) * pointwise_loss(kind, lambda, tau, -alpha);
}

struct BinaryObjectiveParams {
  LossKind loss = LossKind::logistic;
  double lambda = 0.0;
  double tau = 5.0;
};

struct BinaryEval {
  double value = 0.0;
  Vector grad;  // d/dw, summed over the batch
};

/// Sum over the batch of pointwise_loss(y_i * w . x_i) and its w-gradient.
inline BinaryEval binary_objective(const LinearModel& model, const Matrix& X,
                                   const Vector& y,
                                   const BinaryObjectiveParams& p) {
  if (X.rows() != y.size()) {
    throw std::invalid_argument("binary_objective: X rows != y size");
  }
  if (p.lambda < 0.0 || p.tau < 0.0) {
    throw std::invalid_argument("binary_objective: lambda, tau must be >= 0");
  }
  if (p.lambda > 0.0 && p.tau == 0.0) {
    throw std::invalid_argument("binary_objective: tau must be > 0 when lambda > 0");
  }
  BinaryEval out;
  const Vector t = (X * model.w).cwiseProduct(y);
  Vector coef(t.size());
  for (Index i = 0; i < t.size(); ++i) {
    out.value += pointwise_loss(p.loss, p.lambda, p.tau, t[i]);
    coef[i] = pointwise_slope(p.loss, p.lambda, p.tau, t[i]) * y[i];
  }
  out.grad.noalias() = X.transpose() * coef;
  return out;
}

/// ||W W^T - I||_F^2 and, if grad is non-null, its gradient 4 (W W^T - I) W.
inline double orthogonality_penalty(const Matrix& W, Matrix* grad = nullptr) {
  Matrix gram = W * W.transpose();
  gram.diagonal().array() -= 1.0;
  const double value = gram.squaredNorm();
  if (grad != nullptr) grad->noalias() = 4.0 * gram * W;
  return value;
}

struct MulticlassParams {
  double lambda = 0.0;  // truncated-margin reward weight
  double tau = 5.0;     // truncation ceiling
  double beta = 0.0;    // orthogonality penalty weight
};

struct MulticlassEval {
  double data_value = 0.0;  // sum over the batch: CE - lambda * reward
  double orth_value = 0.0;  // beta * penalty, counted once
  MlpGrads data_grads;
  MlpGrads orth_grads;

  double value() const { return data_value + orth_value; }
  MlpGrads total_grads() const {
    MlpGrads g = data_grads;
    g.dW1 += orth_grads.dW1;
    g.dW2 += orth_grads.dW2;
    return g;
  }
};

/// Normalized-final-layer margins: m_i = min_{k != y_i} (u_y - u_k) . h_i
/// where u are the unit rows of W2 and h_i the hidden features. Runners-up
/// (the arg min) break ties toward the lowest class index. Returns margins;
/// fills runner_up if non-null.
inline Vector feature_margins(const Matrix& H, const Matrix& W2,
                              const IntVector& y,
                              IntVector* runner_up = nullptr) {
  const Index n = H.rows();
  const Index c = W2.rows();
  if (c < 2) throw std::invalid_argument("feature_margins: need >= 2 classes");
  const Matrix U = unit_rows(W2);
  const Matrix S = H * U.transpose();  // n x c normalized scores
  Vector m(n);
  if (runner_up != nullptr) runner_up->resize(n);
  for (Index i = 0; i < n; ++i) {
    const int yi = y[i];
    if (yi < 0 || yi >= c) throw std::invalid_argument("feature_margins: label out of range");
    double best = -std::numeric_limits<double>::infinity();
    int best_k = -1;
    for (Index k = 0; k < c; ++k) {
      if (k == yi) continue;
      if (S(i, k) > best) {
        best = S(i, k);
        best_k = static_cast<int>(k);
      }
    }
    m[i] = S(i, yi) - best;
    if (runner_up != nullptr) (*runner_up)[i] = best_k;
  }
  return m;
}

/// Full multiclass objective on one batch:
///   sum_i CE(logits_i, y_i) - lambda * sum_i [m_i]_0^tau
///   + beta * (||W1 W1^T - I||_F^2 + ||W2 W2^T - I||_F^2)
/// The margin reward differentiates through both the feature path and the
/// row normalization of W2; it never touches the biases.
inline MulticlassEval multiclass_objective(const MlpModel& model,
                                           const Matrix& X, const IntVector& y,
                                           const MulticlassParams& p) {
  if (X.rows() != y.size()) {
    throw std::invalid_argument("multiclass_objective: X rows != y size");
  }
  if (p.lambda < 0.0 || p.tau < 0.0 || p.beta < 0.0) {
    throw std::invalid_argument("multiclass_objective: lambda, tau, beta must be >= 0");
  }
  if (p.lambda > 0.0 && p.tau == 0.0) {
    throw std::invalid_argument("multiclass_objective: tau must be > 0 when lambda > 0");
  }
  const Index n = X.rows();
  const Index c = model.classes();
  const MlpForward f = model.forward(X);

  MulticlassEval out;
  out.data_grads.setZero(model.dim(), model.hidden(), c);
  out.orth_grads.setZero(model.dim(), model.hidden(), c);

  // Cross entropy with a row-wise log-sum-exp shift.
  Matrix d_logits(n, c);
  for (Index i = 0; i < n; ++i) {
    const int yi = y[i];
    if (yi < 0 || yi >= c) throw std::invalid_argument("multiclass_objective: label out of range");
    const double zmax = f.logits.row(i).maxCoeff();
    const Vector e = (f.logits.row(i).array() - zmax).exp();
    const double zsum = e.sum();
    out.data_value += std::log(zsum) + zmax - f.logits(i, yi);
    d_logits.row(i) = (e / zsum).transpose();
    d_logits(i, yi) -= 1.0;
  }

  Matrix d_hidden_extra;
  if (p.lambda > 0.0) {
    Vector norms;
    const Matrix U = unit_rows(model.W2, &norms);
    IntVector runner_up;
    const Vector m = feature_margins(f.H, model.W2, y, &runner_up);
    d_hidden_extra = Matrix::Zero(n, model.hidden());
    for (Index i = 0; i < n; ++i) {
      out.data_value -= p.lambda * truncate(m[i], p.tau);
      const double slope = truncate_slope(m[i], p.tau);
      if (slope == 0.0) continue;
      const int yi = y[i];
      const int ki = runner_up[i];
      d_hidden_extra.row(i) =
          -p.lambda * slope * (U.row(yi) - U.row(ki));
      // d m / d W2 row r is (h - u_r (u_r . h)) / ||w_r|| with sign +1 for
      // the true row and -1 for the runner-up; zero-norm rows contribute 0.
      const Vector h = f.H.row(i).transpose();
      if (norms[yi] > 0.0) {
        const double proj = U.row(yi).dot(h);
        out.data_grads.dW2.row(yi) -=
            (p.lambda * slope / norms[yi]) *
            (h.transpose() - proj * U.row(yi));
      }
      if (norms[ki] > 0.0) {
        const double proj = U.row(ki).dot(h);
        out.data_grads.dW2.row(ki) +=
            (p.lambda * slope / norms[ki]) *
            (h.transpose() - proj * U.row(ki));
      }
    }
  }

  model.backward(X, f, d_logits, d_hidden_extra, out.data_grads);

  if (p.beta > 0.0) {
    Matrix g1, g2;
    out.orth_value =
        p.beta * (orthogonality_penalty(model.W1, &g1) +
                  orthogonality_penalty(model.W2, &g2));
    out.orth_grads.dW1 = p.beta * g1;
    out.orth_grads.dW2 = p.beta * g2;
  }
  return out;
}

struct FisherPoint {
  double eta = 0.0;
  double argmin = 0.0;     // grid minimizer of the conditional risk
  double min_value = 0.0;  // risk at the minimizer
  double wrong_inf = 0.0;  // infimum over the wrong-sign half (incl. 0)
  double gap = 0.0;        // wrong_inf - min_value; > 0 means consistent
  bool consistent = false;
};

struct FisherReport {
  LossKind loss = LossKind::logistic;
  double lambda = 0.0;
  double tau = 0.0;
  double alpha_max = 20.0;
  double alpha_step = 1e-3;
  std::vector<FisherPoint> points;
  bool consistent = false;  // all points
};

/// Grid check of classification calibration: for each eta the conditional
/// risk C_eta(alpha) = eta l(alpha) + (1-eta) l(-alpha) must attain its grid
/// minimum strictly on the side sign(2 eta - 1); alpha = 0 counts as the
/// wrong side. The grid is symmetric about 0 so l(-alpha) reuses the
/// mirrored table entry.
inline FisherReport fisher_check(LossKind loss, double lambda, double tau,
                                 const std::vector<double>& etas,
                                 double alpha_max = 20.0,
                                 double alpha_step = 1e-3) {
  if (!(alpha_max > 0.0) || !(alpha_step > 0.0) || alpha_step > 1e-3) {
    throw std::invalid_argument("fisher_check: need alpha_max > 0, 0 < alpha_step <= 1e-3");
  }
  FisherReport report;
  report.loss = loss;
  report.lambda = lambda;
  report.tau = tau;
  report.alpha_max = alpha_max;
  report.alpha_step = alpha_step;
  report.consistent = true;

  const auto half = static_cast<Index>(std::llround(alpha_max / alpha_step));
  const Index count = 2 * half + 1;  // grid index i -> alpha = (i - half) * step
  std::vector<double> ell(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    const double alpha = static_cast<double>(i - half) * alpha_step;
    ell[static_cast<std::size_t>(i)] = pointwise_loss(loss, lambda, tau, alpha);
  }

  for (const double eta : etas) {
    if (!(eta > 0.0) || !(eta < 1.0) || eta == 0.5) {
      throw std::invalid_argument("fisher_check: eta must be in (0,1) \\ {0.5}");
    }
    FisherPoint pt;
    pt.eta = eta;
    const double want = eta > 0.5 ? 1.0 : -1.0;
    double best = std::numeric_limits<double>::infinity();
    Index best_i = 0;
    double wrong = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < count; ++i) {
      const double risk = eta * ell[static_cast<std::size_t>(i)] +
                          (1.0 - eta) * ell[static_cast<std::size_t>(count - 1 - i)];
      if (risk < best) {
        best = risk;
        best_i = i;
      }
      const double alpha = static_cast<double>(i - half) * alpha_step;
      if (alpha * want <= 0.0) wrong = std::min(wrong, risk);
    }
    pt.argmin = static_cast<double>(best_i - half) * alpha_step;
    pt.min_value = best;
    pt.wrong_inf = wrong;
    pt.gap = wrong - best;
    pt.consistent = pt.argmin * want > 0.0 && pt.gap > 0.0;
    report.consistent = report.consistent && pt.consistent;
    report.points.push_back(pt);
  }
  return report;
}

}  // namespace marginlab
