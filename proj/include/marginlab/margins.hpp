#pragma once

// Margin measurement. The signed margin of (x, y) is the distance from x to
// the decision boundary of the predicted region, negated when the prediction
// is wrong. For the linear scorer that distance is exact and in closed form;
// for networks we compute a sound lower bound from the worst gradient norm
// seen over samples drawn in a ball around x (exact again when the network
// is linear, since the gradient is constant).

#include "marginlab/models.hpp"
#include "marginlab/ndops.hpp"

#include <vector>

namespace marginlab {

/// Attaches the correctness sign to a boundary distance: +distance when the
/// prediction matches the label, -distance otherwise.
inline double signed_margin(double distance, bool correct) {
  if (distance < 0.0) throw std::invalid_argument("signed_margin: distance >= 0");
  return correct ? distance : -distance;
}

/// Distance from x to the hyperplane w . x = 0. Throws if w = 0.
inline double linear_distance(const LinearModel& model, const Vector& x) {
  const double wn = model.w.norm();
  if (wn == 0.0) throw std::invalid_argument("linear_distance: zero weights");
  return std::abs(model.w.dot(x)) / wn;
}

/// Signed margin y * (w . x) / ||w||: positive iff (x, y) is classified
/// correctly, magnitude equal to the boundary distance. A score of exactly
/// zero counts as margin zero.
inline double linear_signed_margin(const LinearModel& model, const Vector& x,
                                   double y) {
  const double wn = model.w.norm();
  if (wn == 0.0) throw std::invalid_argument("linear_signed_margin: zero weights");
  return y * model.w.dot(x) / wn;
}

inline Vector linear_signed_margins(const LinearModel& model, const Matrix& X,
                                    const Vector& y) {
  const double wn = model.w.norm();
  if (wn == 0.0) throw std::invalid_argument("linear_signed_margins: zero weights");
  return (X * model.w).cwiseProduct(y) / wn;
}

/// The closest point to x on the decision boundary: the orthogonal
/// projection x - (w . x / ||w||^2) w. Its score is zero up to roundoff.
inline Vector linear_boundary_point(const LinearModel& model, const Vector& x) {
  const double wn2 = model.w.squaredNorm();
  if (wn2 == 0.0) throw std::invalid_argument("linear_boundary_point: zero weights");
  return x - (model.w.dot(x) / wn2) * model.w;
}

/// Exact distance from x to the boundary of the predicted region of a
/// multiclass linear model: min over k != yhat of
/// (f_yhat(x) - f_k(x)) / ||w_yhat - w_k||. Throws when the minimizing
/// competitor row equals the predicted row (the gap is then identically 0
/// or the classes are indistinguishable).
inline double linear_distance(const MulticlassLinearModel& model,
                              const Vector& x) {
  const Index c = model.classes();
  if (c < 2) throw std::invalid_argument("linear_distance: need >= 2 classes");
  const Vector z = model.logits(x);
  const int yhat = model.predict(x);
  double best = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < c; ++k) {
    if (static_cast<int>(k) == yhat) continue;
    const double dn = (model.W.row(yhat) - model.W.row(k)).norm();
    if (dn == 0.0) {
      throw std::invalid_argument("linear_distance: identical competing rows");
    }
    best = std::min(best, (z[yhat] - z[k]) / dn);
  }
  return best;
}

struct LipschitzParams {
  double radius = 5.0;          // ball radius r; also caps the bound
  Index samples_per_round = 1024;
  Index rounds = 50;
  std::uint64_t seed = 0;
  int reference = -1;           // class whose region is measured; -1 = predicted
};

namespace detail {

inline int argmax_row(const Vector& v) {
  int best = 0;
  for (Index k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = static_cast<int>(k);
  }
  return best;
}

}  // namespace detail

/// Lower bound on the distance from x to the boundary of the reference
/// class's region: min_k gap_k / Lhat_k capped at the ball radius, where
/// gap_k = f_ref(x) - f_k(x) and Lhat_k is the largest norm of
/// grad(f_ref - f_k) over x plus sampled ball points. A flat direction
/// (Lhat_k = 0) cannot cross inside the ball, so it contributes the radius
/// (or its negation when the gap is already negative). Negative gaps make
/// the bound negative; that happens only when reference is not the argmax.
inline double lipschitz_margin_bound(const MlpModel& model, const Vector& x,
                                     const LipschitzParams& p,
                                     Vector* lhat_out = nullptr) {
  if (!(p.radius > 0.0)) throw std::invalid_argument("lipschitz_margin_bound: radius > 0");
  if (p.samples_per_round < 1 || p.rounds < 1) {
    throw std::invalid_argument("lipschitz_margin_bound: need >= 1 sample");
  }
  const Index h = model.hidden();
  const Index c = model.classes();
  if (c < 2) throw std::invalid_argument("lipschitz_margin_bound: need >= 2 classes");

  const MlpForward center = model.forward(x.transpose());
  const Vector logits = center.logits.row(0).transpose();
  const int ref = p.reference >= 0 ? p.reference : detail::argmax_row(logits);
  if (ref >= c) throw std::invalid_argument("lipschitz_margin_bound: reference out of range");

  // Gram of the first layer lets per-sample gradient norms be evaluated as
  // quadratic forms instead of full backward passes:
  // ||W1^T (mask .* u)||^2 = (mask .* u)^T G (mask .* u).
  const Matrix G = model.W1 * model.W1.transpose();
  Matrix U(c - 1, h);  // row per non-reference class: W2[ref] - W2[k]
  Vector gaps(c - 1);
  {
    Index r = 0;
    for (Index k = 0; k < c; ++k) {
      if (static_cast<int>(k) == ref) continue;
      U.row(r) = model.W2.row(ref) - model.W2.row(k);
      gaps[r] = logits[ref] - logits[k];
      ++r;
    }
  }

  Vector lhat2 = Vector::Zero(c - 1);  // max squared gradient norm per class
  RngStream rng(p.seed);
  for (Index round = 0; round < p.rounds; ++round) {
    const Index extra = round == 0 ? 1 : 0;  // include the center once
    Matrix S(p.samples_per_round + extra, x.size());
    if (extra) S.row(0) = x.transpose();
    for (Index i = 0; i < p.samples_per_round; ++i) {
      S.row(i + extra) = sample_ball(rng, x, p.radius).transpose();
    }
    Matrix Z = S * model.W1.transpose();
    if (model.use_bias) Z.rowwise() += model.b1.transpose();
    const Matrix mask = (Z.array() > 0.0).cast<double>();
    for (Index r = 0; r < c - 1; ++r) {
      const Matrix V = mask.array().rowwise() * U.row(r).array();
      const Vector norms2 = ((V * G).cwiseProduct(V)).rowwise().sum();
      lhat2[r] = std::max(lhat2[r], norms2.maxCoeff());
    }
  }

  if (lhat_out != nullptr) *lhat_out = lhat2.cwiseSqrt();
  double bound = p.radius;
  for (Index r = 0; r < c - 1; ++r) {
    double candidate;
    if (lhat2[r] > 0.0) {
      candidate = gaps[r] / std::sqrt(lhat2[r]);
      candidate = std::min(candidate, p.radius);
      if (candidate < -p.radius) candidate = -p.radius;
    } else {
      candidate = gaps[r] >= 0.0 ? p.radius : -p.radius;
    }
    bound = std::min(bound, candidate);
  }
  return bound;
}

/// Multiclass linear case: the gap gradients are the constant row
/// differences, so the per-competitor constants need no sampling and the
/// bound equals min(linear_distance, radius) for any sample budget.
inline double lipschitz_margin_bound(const MulticlassLinearModel& model,
                                     const Vector& x, const LipschitzParams& p,
                                     Vector* lhat_out = nullptr) {
  if (!(p.radius > 0.0)) throw std::invalid_argument("lipschitz_margin_bound: radius > 0");
  const Index c = model.classes();
  if (c < 2) throw std::invalid_argument("lipschitz_margin_bound: need >= 2 classes");
  const Vector z = model.logits(x);
  const int ref = p.reference >= 0 ? p.reference : model.predict(x);
  if (ref >= c) throw std::invalid_argument("lipschitz_margin_bound: reference out of range");
  if (lhat_out != nullptr) lhat_out->resize(c - 1);
  double bound = p.radius;
  Index r = 0;
  for (Index k = 0; k < c; ++k) {
    if (static_cast<int>(k) == ref) continue;
    const double lhat = (model.W.row(ref) - model.W.row(k)).norm();
    if (lhat_out != nullptr) (*lhat_out)[r] = lhat;
    ++r;
    const double gap = z[ref] - z[k];
    double candidate;
    if (lhat > 0.0) {
      candidate = std::min(gap / lhat, p.radius);
      if (candidate < -p.radius) candidate = -p.radius;
    } else {
      candidate = gap >= 0.0 ? p.radius : -p.radius;
    }
    bound = std::min(bound, candidate);
  }
  return bound;
}

/// Same bound for the linear scorer viewed as the two-logit model
/// (w . x, -w . x). The gradient of the logit gap is constant, so the bound
/// equals min(|w . x| / ||w||, radius) for the predicted reference no matter
/// how many samples are drawn.
inline double lipschitz_margin_bound(const LinearModel& model, const Vector& x,
                                     const LipschitzParams& p) {
  if (!(p.radius > 0.0)) throw std::invalid_argument("lipschitz_margin_bound: radius > 0");
  const double wn = model.w.norm();
  if (wn == 0.0) throw std::invalid_argument("lipschitz_margin_bound: zero weights");
  const double s = model.w.dot(x);
  // logits (s, -s); predicted class 0 iff s >= 0 (ties to the lower index)
  const int pred = s >= 0.0 ? 0 : 1;
  const int ref = p.reference >= 0 ? p.reference : pred;
  if (ref > 1) throw std::invalid_argument("lipschitz_margin_bound: reference out of range");
  const double gap = ref == 0 ? 2.0 * s : -2.0 * s;  // f_ref - f_other
  double candidate = gap / (2.0 * wn);
  candidate = std::min(candidate, p.radius);
  if (candidate < -p.radius) candidate = -p.radius;
  return candidate;
}

/// Signed margins for a batch: distance bound at the predicted class,
/// negated where the prediction disagrees with the label. Each example uses
/// its own substream of the seed, so results do not depend on batch order.
inline Vector mlp_signed_margins(const MlpModel& model, const Matrix& X,
                                 const IntVector& y, LipschitzParams p) {
  if (X.rows() != y.size()) {
    throw std::invalid_argument("mlp_signed_margins: X rows != y size");
  }
  Vector out(X.rows());
  const std::uint64_t base_seed = p.seed;
  for (Index i = 0; i < X.rows(); ++i) {
    const Vector xi = X.row(i).transpose();
    const MlpForward f = model.forward(xi.transpose());
    const int pred = detail::argmax_row(f.logits.row(0).transpose());
    p.reference = pred;
    p.seed = RngStream(base_seed, static_cast<std::uint64_t>(i)).seed();
    const double dist = lipschitz_margin_bound(model, xi, p);
    out[i] = (pred == y[i]) ? dist : -dist;
  }
  return out;
}

inline double minimum_margin(const Vector& margins) {
  if (margins.size() == 0) throw std::invalid_argument("minimum_margin: empty");
  return margins.minCoeff();
}

/// Mean distance to the boundary, ignoring the sign of correctness.
inline double average_margin(const Vector& margins) {
  if (margins.size() == 0) throw std::invalid_argument("average_margin: empty");
  return margins.cwiseAbs().mean();
}

struct MarginStats {
  double min = 0.0;
  double avg_abs = 0.0;
  double lo = 0.0;      // histogram range
  double hi = 0.0;
  std::vector<long> hist;
};

/// Minimum, mean absolute value, and a fixed-width histogram over [lo, hi).
/// Out-of-range values land in the edge bins, so counts always sum to n.
inline MarginStats margin_stats(const Vector& margins, double lo = -5.0,
                                double hi = 15.0, int bins = 50) {
  if (margins.size() == 0) throw std::invalid_argument("margin_stats: empty");
  if (bins < 1 || !(hi > lo)) throw std::invalid_argument("margin_stats: bad histogram range");
  MarginStats out;
  out.min = margins.minCoeff();
  out.avg_abs = margins.cwiseAbs().mean();
  out.lo = lo;
  out.hi = hi;
  out.hist.assign(static_cast<std::size_t>(bins), 0);
  const double width = (hi - lo) / bins;
  for (Index i = 0; i < margins.size(); ++i) {
    auto b = static_cast<long>(std::floor((margins[i] - lo) / width));
    if (b < 0) b = 0;
    if (b >= bins) b = bins - 1;
    ++out.hist[static_cast<std::size_t>(b)];
  }
  return out;
}

}  // namespace marginlab
