#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "skm/core.hpp"
#include "skm/sketch.hpp"

namespace skm {

inline constexpr Index kMaxSpectralSize = 5000;

// Eigen-structure of K / n used to certify sketches.
template <typename Scalar>
struct SpectralProfile {
  Vector<Scalar> mu;   // eigenvalues of K / n, non-increasing, clamped at 0
  Matrix<Scalar> U;    // matching orthonormal eigenvectors
  Scalar delta_n_sq{}; // critical radius
  Index d_n = 1;       // statistical dimension, 1-based count

  Index n() const { return mu.size(); }
  Scalar delta_n() const { return std::sqrt(delta_n_sq); }
  auto U1() const { return U.leftCols(d_n); }
  auto U2() const { return U.rightCols(n() - d_n); }
  auto D2() const { return mu.tail(n() - d_n); }
};

// psi(delta) = ((1/n) sum_i min(delta^2, mu_i))^{1/2}.
template <typename Derived>
typename Derived::Scalar local_complexity(const Eigen::MatrixBase<Derived>& mu,
                                          typename Derived::Scalar delta) {
  using Scalar = typename Derived::Scalar;
  const Scalar d2 = delta * delta;
  Scalar acc(0);
  for (Index i = 0; i < mu.size(); ++i) acc += std::min(d2, mu[i]);
  return std::sqrt(acc / static_cast<Scalar>(mu.size()));
}

// Smallest delta with psi(delta) <= delta^2 for a non-increasing spectrum.
// psi(delta)/delta is non-increasing, so psi(delta) - delta^2 changes sign
// once; bisection keeps `hi` on the feasible side.
template <typename Derived>
typename Derived::Scalar critical_radius(const Eigen::MatrixBase<Derived>& mu) {
  using Scalar = typename Derived::Scalar;
  if (mu.size() == 0 || mu.maxCoeff() <= Scalar(0)) return Scalar(0);
  Scalar lo(0);
  Scalar hi = std::max(Scalar(1), std::sqrt(mu.maxCoeff()));
  while (hi - lo > Scalar(1e-12)) {
    const Scalar mid = Scalar(0.5) * (lo + hi);
    if (local_complexity(mu, mid) <= mid * mid) {
      hi = mid;
    } else {
      lo = mid;
    }
    if (mid == lo && mid == hi) break;
  }
  return hi;
}

// min{j : mu_j <= delta^2} (1-based), or n if no such j.
template <typename Derived>
Index statistical_dimension(const Eigen::MatrixBase<Derived>& mu,
                            typename Derived::Scalar delta_sq) {
  for (Index j = 0; j < mu.size(); ++j) {
    if (mu[j] <= delta_sq) return j + 1;
  }
  return mu.size();
}

template <typename Derived>
SpectralProfile<typename Derived::Scalar> spectral_profile(const Eigen::MatrixBase<Derived>& K) {
  using Scalar = typename Derived::Scalar;
  const Index n = K.rows();
  require(n >= 1 && K.cols() == n, "spectral_profile: K must be square and non-empty");
  require(n <= kMaxSpectralSize, "spectral_profile: refusing eigendecomposition above n = 5000");
  const Scalar scale = std::max(Scalar(1), K.cwiseAbs().maxCoeff());
  require((K - K.transpose()).cwiseAbs().maxCoeff() <= Scalar(1e-12) * scale,
          "spectral_profile: K must be symmetric");

  const Matrix<Scalar> Kn = K / static_cast<Scalar>(n);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(Kn);
  if (eig.info() != Eigen::Success) throw NumericalError("spectral_profile: eigensolver failed");

  SpectralProfile<Scalar> prof;
  prof.mu = eig.eigenvalues().reverse();
  prof.U = eig.eigenvectors().rowwise().reverse();
  const Scalar top = std::max(prof.mu[0], Scalar(0));
  if (prof.mu[n - 1] < -Scalar(1e-6) * top || (top == 0 && prof.mu[n - 1] < -Scalar(1e-12))) {
    throw InvalidArgument("spectral_profile: K is not positive semidefinite");
  }
  prof.mu = prof.mu.cwiseMax(Scalar(0));
  prof.delta_n_sq = Scalar(0);
  const Scalar delta = critical_radius(prof.mu);
  prof.delta_n_sq = delta * delta;
  prof.d_n = statistical_dimension(prof.mu, prof.delta_n_sq);
  return prof;
}

struct KSatisfiability {
  bool holds = false;
  double lhs1 = 0;  // |(S U1)^T S U1 - I|_op
  double lhs2 = 0;  // |S U2 D2^{1/2}|_op
  double rhs2 = 0;  // c delta_n
};

// Checks both K-satisfiability conditions for a sketch. Diagnostic only:
// forms S U densely.
template <typename Scalar>
KSatisfiability k_satisfiable(const SketchOperator& S, const SpectralProfile<Scalar>& prof,
                              double c) {
  require(S.cols() == prof.n(), "k_satisfiable: sketch width must equal n");
  KSatisfiability out;
  const Matrix<Scalar> SU1 = S.apply(Matrix<Scalar>(prof.U1()));
  Matrix<Scalar> G = SU1.transpose() * SU1;
  G -= Matrix<Scalar>::Identity(G.rows(), G.cols());
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> e1(G, Eigen::EigenvaluesOnly);
  out.lhs1 = static_cast<double>(e1.eigenvalues().cwiseAbs().maxCoeff());

  if (prof.d_n < prof.n()) {
    const Vector<Scalar> root = prof.D2().cwiseSqrt();
    const Matrix<Scalar> B = S.apply(Matrix<Scalar>(prof.U2() * root.asDiagonal()));
    const Matrix<Scalar> BBt = B * B.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> e2(BBt, Eigen::EigenvaluesOnly);
    out.lhs2 = std::sqrt(std::max(0.0, static_cast<double>(e2.eigenvalues().maxCoeff())));
  }
  out.rhs2 = c * static_cast<double>(prof.delta_n());
  out.holds = out.lhs1 <= 0.5 && out.lhs2 <= out.rhs2;
  return out;
}

// c = (2 / sqrt(p)) (1 + sqrt(log 5)) + 1.
inline double theorem_c(double p) {
  require(p > 0 && p <= 1, "theorem_c: p must lie in (0, 1]");
  return 2.0 / std::sqrt(p) * (1.0 + std::sqrt(std::log(5.0))) + 1.0;
}

}  // namespace skm
