#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "skm/spectrum.hpp"

using namespace skm;

namespace {

MatrixXd random_psd(Index n, std::uint64_t seed) {
  const MatrixXd A = oracle::normal(n, n, seed);
  return A * A.transpose();
}

MatrixXd grid_inputs(Index n) {
  MatrixXd X(n, 1);
  for (Index i = 0; i < n; ++i) X(i, 0) = static_cast<double>(i) / static_cast<double>(n - 1);
  return X;
}

}  // namespace

TEST_CASE("identity spectrum has delta_n = 1 and d_n = 1") {
  for (Index n : {1, 5, 40}) {
    const MatrixXd K = static_cast<double>(n) * MatrixXd::Identity(n, n);
    const auto prof = spectral_profile(K);
    CHECK(prof.delta_n_sq == 1.0);
    CHECK(prof.d_n == 1);
    CHECK((prof.mu.array() == 1.0).all());
  }
}

TEST_CASE("zero spectrum is degenerate") {
  const auto prof = spectral_profile(MatrixXd::Zero(1, 1));
  CHECK(prof.delta_n_sq == 0.0);
  CHECK(prof.d_n == 1);
}

TEST_CASE("bisection matches the grid-search oracle on random PSD matrices") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MatrixXd K = random_psd(8, 300 + seed) * (0.05 + 0.1 * static_cast<double>(seed));
    const auto prof = spectral_profile(K);
    const double grid = oracle::critical_radius_grid(prof.mu, 1e-6);
    CHECK(std::abs(prof.delta_n() - grid) <= 2e-6);
  }
}

TEST_CASE("profile invariants on random PSD matrices") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Index n = 6 + static_cast<Index>(seed);
    const MatrixXd K = random_psd(n, 40 + seed) / static_cast<double>(n);
    const auto prof = spectral_profile(K);
    for (Index i = 1; i < n; ++i) CHECK(prof.mu[i] <= prof.mu[i - 1]);
    CHECK(prof.mu.minCoeff() >= 0);

    const double d = prof.delta_n();
    CHECK(oracle::psi(prof.mu, d) <= d * d + 1e-15);
    const double below = d * (1 - 1e-6);
    CHECK(oracle::psi(prof.mu, below) > below * below);

    Index expected = n;
    for (Index j = 0; j < n; ++j) {
      if (prof.mu[j] <= prof.delta_n_sq) {
        expected = j + 1;
        break;
      }
    }
    CHECK(prof.d_n == expected);

    CHECK((prof.U.transpose() * prof.U - MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-8);
    const MatrixXd rebuilt = prof.U * prof.mu.asDiagonal() * prof.U.transpose();
    const MatrixXd Kn = K / static_cast<double>(n);
    CHECK((rebuilt - Kn).norm() <= 1e-8 * Kn.norm());
    CHECK(prof.U1().cols() == prof.d_n);
    CHECK(prof.U2().cols() == n - prof.d_n);
    CHECK(prof.D2().size() == n - prof.d_n);
  }
}

TEST_CASE("psi is sub-root on random spectra") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    VectorXd mu = oracle::uniform(30, 1, 900 + seed).col(0).array().square();
    std::sort(mu.data(), mu.data() + mu.size(), std::greater<>());
    double prev_psi = 0, prev_ratio = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 200; ++k) {
      const double d = 0.01 * k;
      const double v = local_complexity(mu, d);
      CHECK(v >= prev_psi);
      CHECK(v / d <= prev_ratio + 1e-15);
      prev_psi = v;
      prev_ratio = v / d;
    }
  }
}

TEST_CASE("spectral_profile rejects invalid input") {
  MatrixXd A = MatrixXd::Identity(3, 3);
  A(0, 1) = 0.5;
  CHECK_THROWS_AS(spectral_profile(A), InvalidArgument);
  CHECK_THROWS_AS(spectral_profile(-MatrixXd::Identity(3, 3)), InvalidArgument);
  CHECK_THROWS_AS(spectral_profile(MatrixXd(2, 3)), InvalidArgument);
}

TEST_CASE("theorem constant") {
  CHECK(theorem_c(1.0) == doctest::Approx(2 * (1 + std::sqrt(std::log(5.0))) + 1).epsilon(1e-15));
  CHECK(theorem_c(1.0) == doctest::Approx(5.5372).epsilon(1e-4));
  CHECK(theorem_c(0.25) == doctest::Approx(10.0744).epsilon(1e-4));
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 100; ++k) {
    const double c = theorem_c(k / 100.0);
    CHECK(c < prev);
    prev = c;
  }
  CHECK_THROWS_AS(theorem_c(0.0), InvalidArgument);
  CHECK_THROWS_AS(theorem_c(1.5), InvalidArgument);
}

TEST_CASE("K-satisfiability of trivial sketches") {
  const Index n = 30;
  const MatrixXd K = gram(KernelSpec::gaussian(0.05), grid_inputs(n));
  const auto prof = spectral_profile(K);
  REQUIRE(prof.d_n < n);

  // S = I_n (s = n, built explicitly)
  const auto I = SketchOperator::from_dense(MatrixXd::Identity(n, n));
  const auto ks = k_satisfiable(I, prof, 1.0);
  CHECK(ks.lhs1 <= 1e-12);
  CHECK(ks.lhs2 == doctest::Approx(std::sqrt(prof.mu[prof.d_n])).epsilon(1e-10));
  CHECK(ks.lhs2 <= prof.delta_n());
  CHECK(ks.holds);

  // A zero sketch: only its first column is kept so the operator is valid.
  MatrixXd Z = MatrixXd::Zero(5, n);
  Z(0, 0) = 1e-300;
  const auto zero = k_satisfiable(SketchOperator::from_dense(Z), prof, 5.0);
  CHECK(zero.lhs1 == doctest::Approx(1.0));
  CHECK_FALSE(zero.holds);

  CHECK_THROWS_AS(k_satisfiable(SketchOperator::from_dense(MatrixXd::Identity(3, 4)), prof, 1.0),
                  InvalidArgument);
}

TEST_CASE("statistical dimension of a polynomial kernel on scalar inputs") {
  // Degree-D polynomial Gram on 1-D inputs has rank D + 1, so mu_{D+2} = 0
  // and the first eigenvalue at or below delta_n^2 comes no later than D + 2.
  const MatrixXd X = oracle::uniform(500, 1, 17, -1, 1);
  for (int D : {1, 2, 3}) {
    const auto prof = spectral_profile(gram(KernelSpec::polynomial(D, 1.0), X));
    CHECK(prof.mu[D + 1] <= 1e-10 * prof.mu[0]);
    CHECK(prof.d_n <= D + 2);
    CHECK(prof.d_n >= 1);
  }
}

TEST_CASE("Gaussian critical radius decreases with n on a uniform grid") {
  double prev = std::numeric_limits<double>::infinity();
  for (Index n : {100, 200, 400}) {
    const auto prof = spectral_profile(gram(KernelSpec::gaussian(0.1), grid_inputs(n)));
    CHECK(prof.delta_n_sq < prev);
    prev = prof.delta_n_sq;
  }
}
