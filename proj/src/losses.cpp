#include "skm/losses.hpp"

#include <algorithm>

namespace skm {

std::string to_string(LossFamily family) {
  switch (family) {
    case LossFamily::Square: return "square";
    case LossFamily::Huber: return "huber";
    case LossFamily::EpsInsensitive: return "eps_insensitive";
    case LossFamily::Pinball: return "pinball";
  }
  return "unknown";
}

LossFamily loss_family_from_string(const std::string& name) {
  if (name == "square") return LossFamily::Square;
  if (name == "huber") return LossFamily::Huber;
  if (name == "eps_insensitive" || name == "epsilon_svr") return LossFamily::EpsInsensitive;
  if (name == "pinball") return LossFamily::Pinball;
  throw InvalidArgument("unknown loss family: " + name);
}

void LossSpec::validate() const {
  require(output_dim >= 1, "loss: output dimension must be >= 1");
  switch (family) {
    case LossFamily::Square:
      break;
    case LossFamily::Huber:
      require(kappa > 0, "huber loss: kappa must be positive");
      break;
    case LossFamily::EpsInsensitive:
      require(epsilon >= 0, "epsilon-insensitive loss: epsilon must be >= 0");
      break;
    case LossFamily::Pinball:
      require(!levels.empty(), "pinball loss: no quantile levels");
      require(static_cast<Index>(levels.size()) == output_dim,
              "pinball loss: one level per output");
      for (size_t j = 0; j < levels.size(); ++j) {
        require(levels[j] > 0 && levels[j] < 1, "pinball loss: levels must lie in (0, 1)");
        if (j > 0) require(levels[j - 1] < levels[j], "pinball loss: levels must increase");
      }
      break;
  }
}

double lipschitz_constant(const LossSpec& spec) {
  switch (spec.family) {
    case LossFamily::Square:
      return std::numeric_limits<double>::infinity();
    case LossFamily::Huber:
      return spec.kappa;
    case LossFamily::EpsInsensitive:
      return 1.0;
    case LossFamily::Pinball: {
      double worst = 0;
      for (double tau : spec.levels) worst = std::max({worst, tau, 1 - tau});
      return worst * std::sqrt(static_cast<double>(spec.levels.size()));
    }
  }
  return 0;
}

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::RelativeMSE: return "relative_mse";
    case MetricKind::PinballTestLoss: return "pinball";
    case MetricKind::CrossingLoss: return "crossing";
    case MetricKind::RRMSE: return "rrmse";
    case MetricKind::ARRMSE: return "arrmse";
  }
  return "unknown";
}

double relative_mse(const MatrixXd& predictions, const MatrixXd& targets) {
  require(predictions.rows() == targets.rows() && predictions.cols() == targets.cols(),
          "relative_mse: shape mismatch");
  const double mean = targets.mean();
  const double var = (targets.array() - mean).square().sum();
  require(var > 0, "relative_mse: targets have zero variance");
  return (predictions - targets).squaredNorm() / var;
}

VectorXd rrmse(const MatrixXd& predictions, const MatrixXd& targets,
               const VectorXd& train_mean) {
  require(predictions.rows() == targets.rows() && predictions.cols() == targets.cols(),
          "rrmse: shape mismatch");
  require(train_mean.size() == targets.cols(), "rrmse: one training mean per target");
  VectorXd out(targets.cols());
  for (Index t = 0; t < targets.cols(); ++t) {
    const double den = (targets.col(t).array() - train_mean[t]).square().sum();
    require(den > 0, "rrmse: target equals its training mean everywhere");
    out[t] = std::sqrt((predictions.col(t) - targets.col(t)).squaredNorm() / den);
  }
  return out;
}

double arrmse(const MatrixXd& predictions, const MatrixXd& targets, const VectorXd& train_mean) {
  return rrmse(predictions, targets, train_mean).mean();
}

double pinball_test_loss(const MatrixXd& predictions, const MatrixXd& targets,
                         const std::vector<double>& levels) {
  require(targets.cols() == 1 && targets.rows() == predictions.rows(),
          "pinball_test_loss: targets must be n x 1");
  const LossSpec spec = LossSpec::pinball(levels);
  double acc = 0;
  for (Index i = 0; i < predictions.rows(); ++i) {
    acc += loss_value(spec, predictions.row(i).transpose(), targets.row(i).transpose());
  }
  return acc;
}

double crossing_loss(const MatrixXd& predictions) {
  require(predictions.rows() >= 1, "crossing_loss: no predictions");
  double acc = 0;
  for (Index i = 0; i < predictions.rows(); ++i) {
    for (Index j = 0; j + 1 < predictions.cols(); ++j) {
      acc += std::max(0.0, predictions(i, j) - predictions(i, j + 1));
    }
  }
  return acc / static_cast<double>(predictions.rows());
}

double metric(MetricKind kind, const MatrixXd& predictions, const MatrixXd& targets,
              const MetricContext& context) {
  switch (kind) {
    case MetricKind::RelativeMSE:
      return relative_mse(predictions, targets);
    case MetricKind::PinballTestLoss:
      return pinball_test_loss(predictions, targets, context.levels);
    case MetricKind::CrossingLoss:
      return crossing_loss(predictions);
    case MetricKind::RRMSE:
    case MetricKind::ARRMSE:
      require(context.train_mean.has_value(), "rrmse: training mean required");
      return arrmse(predictions, targets, *context.train_mean);
  }
  return 0;
}

}  // namespace skm
