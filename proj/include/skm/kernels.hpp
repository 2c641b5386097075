#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "skm/core.hpp"

namespace skm {

enum class KernelFamily { Gaussian, Polynomial, SobolevFirstOrder };

// Scalar kernel k(x, x').
//
//   Gaussian            exp(-|x - x'|^2 / bandwidth)
//   Polynomial          (<x, x'> + offset)^degree
//   SobolevFirstOrder   1 + min(x, x'), scalar inputs in [0, 1]
struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  double bandwidth = 1.0;
  int degree = 1;
  double offset = 0.0;

  static KernelSpec gaussian(double bandwidth) {
    return {KernelFamily::Gaussian, bandwidth, 1, 0.0};
  }
  static KernelSpec polynomial(int degree, double offset) {
    return {KernelFamily::Polynomial, 1.0, degree, offset};
  }
  static KernelSpec sobolev() { return {KernelFamily::SobolevFirstOrder, 1.0, 1, 0.0}; }

  void validate() const {
    switch (family) {
      case KernelFamily::Gaussian:
        require(bandwidth > 0 && std::isfinite(bandwidth),
                "gaussian kernel: bandwidth must be positive");
        break;
      case KernelFamily::Polynomial:
        require(degree >= 1, "polynomial kernel: degree must be >= 1");
        require(offset >= 0, "polynomial kernel: offset must be >= 0");
        break;
      case KernelFamily::SobolevFirstOrder:
        break;
    }
  }

  bool operator==(const KernelSpec&) const = default;
};

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(const std::string& name);

namespace detail {

// k between two points stored contiguously; the coordinate loop is written
// out so that every call site sums in the same order.
template <typename Scalar>
Scalar eval_points(const KernelSpec& spec, const Scalar* a, const Scalar* b, Index q) {
  switch (spec.family) {
    case KernelFamily::Gaussian: {
      Scalar d2(0);
      for (Index c = 0; c < q; ++c) {
        const Scalar diff = a[c] - b[c];
        d2 += diff * diff;
      }
      return std::exp(-d2 / static_cast<Scalar>(spec.bandwidth));
    }
    case KernelFamily::Polynomial: {
      Scalar dot(0);
      for (Index c = 0; c < q; ++c) dot += a[c] * b[c];
      const Scalar base = dot + static_cast<Scalar>(spec.offset);
      Scalar out(1);
      for (int k = 0; k < spec.degree; ++k) out *= base;
      return out;
    }
    case KernelFamily::SobolevFirstOrder:
      return Scalar(1) + std::min(a[0], b[0]);
  }
  return Scalar(0);
}

template <typename Scalar>
void check_sobolev_inputs(const Matrix<Scalar>& points) {
  require(points.rows() == 1, "sobolev kernel: inputs must be scalar");
  for (Index j = 0; j < points.cols(); ++j) {
    require(points(0, j) >= 0 && points(0, j) <= 1, "sobolev kernel: inputs must lie in [0, 1]");
  }
}

// Points as columns (q x n), so each point is contiguous.
template <typename Derived>
Matrix<typename Derived::Scalar> as_columns(const KernelSpec& spec,
                                            const Eigen::MatrixBase<Derived>& X) {
  Matrix<typename Derived::Scalar> P = X.transpose();
  if (spec.family == KernelFamily::SobolevFirstOrder) check_sobolev_inputs(P);
  return P;
}

}  // namespace detail

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar kernel_eval(const KernelSpec& spec,
                                      const Eigen::MatrixBase<DerivedA>& x,
                                      const Eigen::MatrixBase<DerivedB>& xp) {
  using Scalar = typename DerivedA::Scalar;
  spec.validate();
  require(x.size() == xp.size(), "kernel_eval: dimension mismatch");
  const Vector<Scalar> a = x.reshaped();
  const Vector<Scalar> b = xp.template cast<Scalar>().reshaped();
  if (spec.family == KernelFamily::SobolevFirstOrder) {
    require(a.size() == 1, "sobolev kernel: inputs must be scalar");
    require(a[0] >= 0 && a[0] <= 1 && b[0] >= 0 && b[0] <= 1,
            "sobolev kernel: inputs must lie in [0, 1]");
  }
  return detail::eval_points(spec, a.data(), b.data(), a.size());
}

// Full Gram matrix of the rows of X.
template <typename Derived>
Matrix<typename Derived::Scalar> gram(const KernelSpec& spec, const Eigen::MatrixBase<Derived>& X) {
  using Scalar = typename Derived::Scalar;
  spec.validate();
  const Matrix<Scalar> P = detail::as_columns(spec, X);
  const Index n = P.cols(), q = P.rows();
  Matrix<Scalar> K(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i <= j; ++i) {
      const Scalar v = detail::eval_points(spec, P.col(i).data(), P.col(j).data(), q);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

// Cross Gram: out(i, j) = k(a_i, b_j).
template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> gram_cross(const KernelSpec& spec,
                                             const Eigen::MatrixBase<DerivedA>& A,
                                             const Eigen::MatrixBase<DerivedB>& B) {
  using Scalar = typename DerivedA::Scalar;
  spec.validate();
  require(A.cols() == B.cols(), "gram_cross: feature dimension mismatch");
  const Matrix<Scalar> PA = detail::as_columns(spec, A);
  const Matrix<Scalar> PB = detail::as_columns(spec, B.template cast<Scalar>());
  const Index q = PA.rows();
  Matrix<Scalar> out(PA.cols(), PB.cols());
  for (Index j = 0; j < PB.cols(); ++j) {
    for (Index i = 0; i < PA.cols(); ++i) {
      out(i, j) = detail::eval_points(spec, PA.col(i).data(), PB.col(j).data(), q);
    }
  }
  return out;
}

// Selected rows of gram(spec, X) without forming the n x n matrix.
template <typename Derived>
Matrix<typename Derived::Scalar> gram_rows(const KernelSpec& spec,
                                           const Eigen::MatrixBase<Derived>& X,
                                           const IndexList& indices) {
  using Scalar = typename Derived::Scalar;
  spec.validate();
  const Index n = X.rows();
  for (Index idx : indices) {
    require(idx >= 0 && idx < n, "gram_rows: index out of range");
  }
  const Matrix<Scalar> P = detail::as_columns(spec, X);
  const Index q = P.rows();
  const Index m = static_cast<Index>(indices.size());
  Matrix<Scalar> out(m, n);
  for (Index j = 0; j < n; ++j) {
    for (Index r = 0; r < m; ++r) {
      out(r, j) = detail::eval_points(spec, P.col(indices[r]).data(), P.col(j).data(), q);
    }
  }
  return out;
}

// Column k(x_i, x) over the rows x_i of X.
template <typename DerivedX, typename DerivedP>
Vector<typename DerivedX::Scalar> kernel_column(const KernelSpec& spec,
                                                const Eigen::MatrixBase<DerivedX>& X,
                                                const Eigen::MatrixBase<DerivedP>& x) {
  return gram_cross(spec, X, x.reshaped().transpose());
}

// Median of pairwise squared distances over at most `max_points` rows.
template <typename Derived>
double median_sq_distance(const Eigen::MatrixBase<Derived>& X, Index max_points = 1000) {
  const Index n = std::min<Index>(X.rows(), max_points);
  std::vector<double> d;
  d.reserve(static_cast<size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      d.push_back(static_cast<double>((X.row(i) - X.row(j)).squaredNorm()));
    }
  }
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0 ? *mid : 1.0;
}

// ---------------------------------------------------------------------------
// Output matrices for decomposable kernels K(x, x') = k(x, x') M.

enum class OutputProvenance { Identity, QuantileGaussian, GraphLaplacianMix };

struct OutputMatrix {
  MatrixXd M;
  OutputProvenance provenance = OutputProvenance::Identity;

  Index dim() const { return M.rows(); }
};

OutputMatrix identity_output(Index d);
// M_ij = exp(-gamma (tau_i - tau_j)^2), levels strictly increasing in (0, 1).
OutputMatrix quantile_output(double gamma, const std::vector<double>& levels);
// (mu L_P + (1 - mu) I)^{-1} with L_P the unnormalized Laplacian of P.
OutputMatrix graph_output(const MatrixXd& adjacency, double mu);

// Explicit K (x) M; refused above 1e4 rows since multi-output code works
// blockwise on K and M.
MatrixXd decomposable_gram(const MatrixXd& K, const MatrixXd& M);

}  // namespace skm
