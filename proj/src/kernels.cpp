#include "skm/kernels.hpp"

#include <Eigen/Eigenvalues>

namespace skm {

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::Polynomial: return "polynomial";
    case KernelFamily::SobolevFirstOrder: return "sobolev";
  }
  return "unknown";
}

KernelFamily kernel_family_from_string(const std::string& name) {
  if (name == "gaussian") return KernelFamily::Gaussian;
  if (name == "polynomial") return KernelFamily::Polynomial;
  if (name == "sobolev") return KernelFamily::SobolevFirstOrder;
  throw InvalidArgument("unknown kernel family: " + name);
}

OutputMatrix identity_output(Index d) {
  require(d >= 1, "identity_output: dimension must be >= 1");
  return {MatrixXd::Identity(d, d), OutputProvenance::Identity};
}

OutputMatrix quantile_output(double gamma, const std::vector<double>& levels) {
  require(gamma >= 0, "quantile_output: gamma must be >= 0");
  require(!levels.empty(), "quantile_output: no quantile levels");
  for (size_t i = 0; i < levels.size(); ++i) {
    require(levels[i] > 0 && levels[i] < 1, "quantile_output: levels must lie in (0, 1)");
    if (i > 0) require(levels[i - 1] < levels[i], "quantile_output: levels must be increasing");
  }
  const Index d = static_cast<Index>(levels.size());
  MatrixXd M(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      const double diff = levels[i] - levels[j];
      M(i, j) = std::exp(-gamma * diff * diff);
    }
  }
  return {M, OutputProvenance::QuantileGaussian};
}

OutputMatrix graph_output(const MatrixXd& adjacency, double mu) {
  const Index d = adjacency.rows();
  require(d >= 1 && adjacency.cols() == d, "graph_output: adjacency must be square");
  require(mu >= 0 && mu <= 1, "graph_output: mu must lie in [0, 1]");
  for (Index i = 0; i < d; ++i) {
    require(adjacency(i, i) == 0, "graph_output: adjacency must have zero diagonal");
    for (Index j = 0; j < d; ++j) {
      require(adjacency(i, j) == 0 || adjacency(i, j) == 1,
              "graph_output: adjacency entries must be 0 or 1");
      require(adjacency(i, j) == adjacency(j, i), "graph_output: adjacency must be symmetric");
    }
  }
  const MatrixXd laplacian =
      MatrixXd(adjacency.rowwise().sum().asDiagonal()) - adjacency;
  const MatrixXd A = mu * laplacian + (1 - mu) * MatrixXd::Identity(d, d);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(A);
  const double smallest = eig.eigenvalues().minCoeff();
  if (smallest <= 1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff())) {
    throw NumericalError("graph_output: mu L_P + (1 - mu) I is singular");
  }
  MatrixXd M = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
               eig.eigenvectors().transpose();
  M = 0.5 * (M + M.transpose()).eval();
  if (mu == 0) M.setIdentity();
  return {M, OutputProvenance::GraphLaplacianMix};
}

MatrixXd decomposable_gram(const MatrixXd& K, const MatrixXd& M) {
  const Index n = K.rows(), d = M.rows();
  require(n * d <= 10000, "decomposable_gram: refusing to form K (x) M above 1e4 rows");
  MatrixXd out(n * d, n * d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      out.block(i * d, j * d, d, d) = K(i, j) * M;
    }
  }
  return out;
}

}  // namespace skm
