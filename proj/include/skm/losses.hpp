#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "skm/core.hpp"

namespace skm {

enum class LossFamily { Square, Huber, EpsInsensitive, Pinball };

std::string to_string(LossFamily family);
LossFamily loss_family_from_string(const std::string& name);

// A loss l(z, y) on d-dimensional predictions z.
//
// Square, Huber and EpsInsensitive act on u = z - y through its Euclidean
// norm. Pinball sums per-level check losses of r = y 1_d - z, with a scalar
// target y broadcast across the d quantile predictions.
struct LossSpec {
  LossFamily family = LossFamily::Square;
  double kappa = 1.0;
  double epsilon = 0.0;
  std::vector<double> levels;
  Index output_dim = 1;

  static LossSpec square(Index d = 1) { return {LossFamily::Square, 1.0, 0.0, {}, d}; }
  static LossSpec huber(double kappa, Index d = 1) {
    return {LossFamily::Huber, kappa, 0.0, {}, d};
  }
  static LossSpec eps_insensitive(double epsilon, Index d = 1) {
    return {LossFamily::EpsInsensitive, 1.0, epsilon, {}, d};
  }
  static LossSpec pinball(std::vector<double> levels) {
    const auto d = static_cast<Index>(levels.size());
    return {LossFamily::Pinball, 1.0, 0.0, std::move(levels), d};
  }

  void validate() const;
  // Width of the target rows the loss expects: 1 for pinball, d otherwise.
  Index target_dim() const { return family == LossFamily::Pinball ? 1 : output_dim; }
};

// Check loss summed over levels: sum_j tau_j r_j (r_j >= 0), (tau_j - 1) r_j.
template <typename Derived>
typename Derived::Scalar pinball_check(const std::vector<double>& levels,
                                       const Eigen::MatrixBase<Derived>& r) {
  using Scalar = typename Derived::Scalar;
  require(static_cast<Index>(levels.size()) == r.size(), "pinball: level count mismatch");
  Scalar acc(0);
  for (Index j = 0; j < r.size(); ++j) {
    const auto tau = static_cast<Scalar>(levels[static_cast<size_t>(j)]);
    acc += r[j] >= 0 ? tau * r[j] : (tau - Scalar(1)) * r[j];
  }
  return acc;
}

namespace detail {
template <typename DZ, typename DY>
void check_loss_shapes(const LossSpec& spec, const Eigen::MatrixBase<DZ>& z,
                       const Eigen::MatrixBase<DY>& y) {
  require(z.size() == spec.output_dim, "loss: prediction dimension mismatch");
  if (spec.family == LossFamily::Pinball) {
    require(y.size() == 1 || y.size() == z.size(), "loss: target dimension mismatch");
  } else {
    require(y.size() == z.size(), "loss: target dimension mismatch");
  }
}
}  // namespace detail

template <typename DZ, typename DY>
typename DZ::Scalar loss_value(const LossSpec& spec, const Eigen::MatrixBase<DZ>& z,
                               const Eigen::MatrixBase<DY>& y) {
  using Scalar = typename DZ::Scalar;
  detail::check_loss_shapes(spec, z, y);
  if (spec.family == LossFamily::Pinball) {
    Vector<Scalar> r(z.size());
    for (Index j = 0; j < z.size(); ++j) r[j] = y[y.size() == 1 ? 0 : j] - z[j];
    return pinball_check(spec.levels, r);
  }
  const Scalar norm = (z.reshaped() - y.reshaped()).norm();
  switch (spec.family) {
    case LossFamily::Square:
      return Scalar(0.5) * norm * norm;
    case LossFamily::Huber: {
      const auto kappa = static_cast<Scalar>(spec.kappa);
      return norm <= kappa ? Scalar(0.5) * norm * norm : kappa * (norm - Scalar(0.5) * kappa);
    }
    case LossFamily::EpsInsensitive: {
      const auto eps = static_cast<Scalar>(spec.epsilon);
      return norm >= eps ? norm - eps : Scalar(0);
    }
    case LossFamily::Pinball:
      break;
  }
  return Scalar(0);
}

// An element of the subdifferential in z. At kinks the minimal-norm element
// is returned (0 at a pinball level with r_j = 0 and at |u| = epsilon).
template <typename DZ, typename DY>
Vector<typename DZ::Scalar> loss_subgradient(const LossSpec& spec, const Eigen::MatrixBase<DZ>& z,
                                             const Eigen::MatrixBase<DY>& y) {
  using Scalar = typename DZ::Scalar;
  detail::check_loss_shapes(spec, z, y);
  const Index d = z.size();
  Vector<Scalar> g(d);
  if (spec.family == LossFamily::Pinball) {
    for (Index j = 0; j < d; ++j) {
      const Scalar r = y[y.size() == 1 ? 0 : j] - z[j];
      const auto tau = static_cast<Scalar>(spec.levels[static_cast<size_t>(j)]);
      g[j] = r > 0 ? -tau : (r < 0 ? Scalar(1) - tau : Scalar(0));
    }
    return g;
  }
  const Vector<Scalar> u = z.reshaped() - y.reshaped();
  const Scalar norm = u.norm();
  switch (spec.family) {
    case LossFamily::Square:
      return u;
    case LossFamily::Huber: {
      const auto kappa = static_cast<Scalar>(spec.kappa);
      if (norm <= kappa) return u;
      return (kappa / norm) * u;
    }
    case LossFamily::EpsInsensitive: {
      if (norm <= static_cast<Scalar>(spec.epsilon)) return Vector<Scalar>::Zero(d);
      return u / norm;
    }
    case LossFamily::Pinball:
      break;
  }
  return g;
}

// Lipschitz constant in z; infinite for the square loss.
double lipschitz_constant(const LossSpec& spec);

// ---------------------------------------------------------------------------
// Evaluation metrics. Predictions and targets have one row per test point.

enum class MetricKind { RelativeMSE, PinballTestLoss, CrossingLoss, RRMSE, ARRMSE };

std::string to_string(MetricKind kind);

// sum (yhat - y)^2 / sum (y - mean(y))^2 over all entries.
double relative_mse(const MatrixXd& predictions, const MatrixXd& targets);

// Per target t: sqrt(sum_i (yhat_it - y_it)^2 / sum_i (ybar_t - y_it)^2) with
// ybar the training mean.
VectorXd rrmse(const MatrixXd& predictions, const MatrixXd& targets,
               const VectorXd& train_mean);
double arrmse(const MatrixXd& predictions, const MatrixXd& targets, const VectorXd& train_mean);

// Sum over test points of the pinball loss; targets are n x 1.
double pinball_test_loss(const MatrixXd& predictions, const MatrixXd& targets,
                         const std::vector<double>& levels);

// Mean over test points of sum_j max(0, q_j - q_{j+1}).
double crossing_loss(const MatrixXd& predictions);

struct MetricContext {
  std::vector<double> levels;           // PinballTestLoss
  std::optional<VectorXd> train_mean;   // RRMSE / ARRMSE
};

// Scalar metric by kind; RRMSE returns the mean over targets like ARRMSE.
double metric(MetricKind kind, const MatrixXd& predictions, const MatrixXd& targets,
              const MetricContext& context = {});

}  // namespace skm
