#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "skm/losses.hpp"

using namespace skm;

namespace {

std::vector<LossSpec> all_losses(Index d) {
  std::vector<double> levels;
  for (Index j = 0; j < d; ++j) levels.push_back((static_cast<double>(j) + 1) / (static_cast<double>(d) + 1));
  return {LossSpec::square(d), LossSpec::huber(0.7, d), LossSpec::eps_insensitive(0.3, d),
          LossSpec::pinball(levels)};
}

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

VectorXd target_for(const LossSpec& spec, const VectorXd& y) {
  return spec.family == LossFamily::Pinball ? VectorXd(y.head(1)) : y;
}

}  // namespace

TEST_CASE("loss values at hand-checked points") {
  const VectorXd z = vec({0.3, -1.2});
  for (const auto& spec : all_losses(2)) {
    const VectorXd at = spec.family == LossFamily::Pinball ? vec({0.3, 0.3}) : z;
    CHECK(loss_value(spec, at, target_for(spec, at)) == 0.0);
  }
  for (const auto& spec : all_losses(1)) CHECK(loss_value(spec, vec({2.0}), vec({2.0})) == 0.0);

  CHECK(loss_value(LossSpec::huber(1.0), vec({2.0}), vec({0.0})) == 1.5);
  CHECK(loss_value(LossSpec::huber(1.0), vec({0.5}), vec({0.0})) == 0.125);
  CHECK(loss_value(LossSpec::eps_insensitive(0.5), vec({2.0}), vec({0.0})) == 1.5);
  CHECK(loss_value(LossSpec::eps_insensitive(0.5), vec({0.2}), vec({0.0})) == 0.0);
  CHECK(loss_value(LossSpec::square(2), vec({3.0, 4.0}), vec({0.0, 0.0})) == 12.5);
  CHECK(pinball_check({0.1, 0.9}, vec({1.0, -1.0})) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("pinball residual is target minus prediction") {
  const LossSpec spec = LossSpec::pinball({0.1});
  // Predicting above the target costs 1 - tau per unit, below costs tau.
  CHECK(loss_value(spec, vec({1.0}), vec({0.0})) == doctest::Approx(0.9));
  CHECK(loss_value(spec, vec({-1.0}), vec({0.0})) == doctest::Approx(0.1));
  // Scalar target broadcast across the levels.
  const LossSpec two = LossSpec::pinball({0.25, 0.75});
  CHECK(loss_value(two, vec({0.0, 0.0}), vec({1.0})) == doctest::Approx(1.0));

  // The empirical minimizer over constants is the tau-quantile of the sample.
  std::mt19937_64 gen(5);
  std::normal_distribution<double> dist;
  std::vector<double> ys(501);
  for (auto& y : ys) y = dist(gen);
  for (double tau : {0.1, 0.5, 0.9}) {
    const LossSpec q = LossSpec::pinball({tau});
    double best = 1e300, arg = 0;
    for (double c = -3; c <= 3; c += 1e-3) {
      double total = 0;
      for (double y : ys) total += loss_value(q, vec({c}), vec({y}));
      if (total < best) {
        best = total;
        arg = c;
      }
    }
    std::vector<double> sorted = ys;
    std::sort(sorted.begin(), sorted.end());
    const double quantile = sorted[static_cast<size_t>(tau * 500)];
    CHECK(std::abs(arg - quantile) <= 2e-3);
  }
}

TEST_CASE("pinball with one level 0.5 is half the absolute residual") {
  const LossSpec spec = LossSpec::pinball({0.5});
  for (double r : {-3.0, -0.25, 0.0, 0.5, 7.0}) {
    CHECK(loss_value(spec, vec({0.0}), vec({r})) == 0.5 * std::abs(r));
  }
}

TEST_CASE("subgradients at hand-checked points") {
  CHECK(loss_subgradient(LossSpec::square(), vec({1.0}), vec({1.0})) == vec({0.0}));
  const VectorXd g = loss_subgradient(LossSpec::huber(1.0, 2), vec({3.0, 4.0}), vec({0.0, 0.0}));
  CHECK(g[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(0.8).epsilon(1e-15));
  // Kinks take the minimal-norm element.
  CHECK(loss_subgradient(LossSpec::pinball({0.3}), vec({1.0}), vec({1.0})) == vec({0.0}));
  CHECK(loss_subgradient(LossSpec::eps_insensitive(0.5), vec({0.5}), vec({0.0})) == vec({0.0}));
  CHECK(loss_subgradient(LossSpec::pinball({0.3}), vec({2.0}), vec({1.0})) == vec({0.7}));
  CHECK(loss_subgradient(LossSpec::pinball({0.3}), vec({0.0}), vec({1.0})) == vec({-0.3}));
}

TEST_CASE("subgradients match central differences at differentiable points") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> dist;
  for (Index d : {1, 3}) {
    for (const auto& spec : all_losses(d)) {
      int checked = 0;
      while (checked < 100) {
        VectorXd z(d), y(d), e(d);
        for (Index j = 0; j < d; ++j) {
          z[j] = 2 * dist(gen);
          y[j] = dist(gen);
          e[j] = dist(gen);
        }
        e.normalize();
        const VectorXd t = target_for(spec, y);
        const double norm = (z - y).norm();
        // stay away from kinks
        if (spec.family == LossFamily::Huber && std::abs(norm - spec.kappa) < 1e-3) continue;
        if (spec.family == LossFamily::EpsInsensitive && std::abs(norm - spec.epsilon) < 1e-3) continue;
        if (spec.family == LossFamily::Pinball && ((t[0] - z.array()).abs() < 1e-3).any()) continue;
        const double h = 1e-6;
        const double fd =
            (loss_value(spec, VectorXd(z + h * e), t) - loss_value(spec, VectorXd(z - h * e), t)) / (2 * h);
        CHECK(std::abs(fd - loss_subgradient(spec, z, t).dot(e)) <= 1e-5);
        ++checked;
      }
    }
  }
}

TEST_CASE("losses are convex and Lipschitz on random samples") {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> dist;
  const Index d = 3;
  for (const auto& spec : all_losses(d)) {
    const double L = lipschitz_constant(spec);
    for (int k = 0; k < 500; ++k) {
      VectorXd a(d), b(d), y(d);
      for (Index j = 0; j < d; ++j) {
        a[j] = 3 * dist(gen);
        b[j] = 3 * dist(gen);
        y[j] = dist(gen);
      }
      const VectorXd t = target_for(spec, y);
      const double mid = loss_value(spec, VectorXd(0.5 * (a + b)), t);
      CHECK(mid <= 0.5 * loss_value(spec, a, t) + 0.5 * loss_value(spec, b, t) + 1e-12);
      if (std::isfinite(L)) {
        CHECK(std::abs(loss_value(spec, a, t) - loss_value(spec, b, t)) <= L * (a - b).norm() + 1e-12);
      }
    }
  }
  CHECK(lipschitz_constant(LossSpec::huber(0.7)) == 0.7);
  CHECK(lipschitz_constant(LossSpec::eps_insensitive(0.3)) == 1.0);
  CHECK(lipschitz_constant(LossSpec::pinball({0.1, 0.5})) == doctest::Approx(0.9 * std::sqrt(2.0)));
  CHECK(std::isinf(lipschitz_constant(LossSpec::square())));
}

TEST_CASE("Huber is continuous at the knee") {
  const double kappa = 1.3;
  const LossSpec spec = LossSpec::huber(kappa, 2);
  const VectorXd dir = vec({0.6, 0.8});
  const VectorXd y = VectorXd::Zero(2);
  const VectorXd in = (kappa * (1 - 1e-13)) * dir, out = (kappa * (1 + 1e-13)) * dir;
  CHECK(std::abs(loss_value(spec, in, y) - loss_value(spec, out, y)) <= 1e-12);
  CHECK((loss_subgradient(spec, in, y) - loss_subgradient(spec, out, y)).norm() <= 1e-12);
}

TEST_CASE("loss argument checks") {
  CHECK_THROWS_AS(loss_value(LossSpec::square(2), vec({1.0}), vec({1.0})), InvalidArgument);
  CHECK_THROWS_AS(loss_value(LossSpec::square(1), vec({1.0}), vec({1.0, 2.0})), InvalidArgument);
  CHECK_THROWS_AS(loss_subgradient(LossSpec::pinball({0.2, 0.4}), vec({1.0, 1.0}), vec({1.0, 2.0, 3.0})),
                  InvalidArgument);
  CHECK_THROWS_AS(LossSpec::huber(0.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(LossSpec::eps_insensitive(-1.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(LossSpec::pinball({0.5, 0.4}).validate(), InvalidArgument);
  CHECK_THROWS_AS(LossSpec::pinball({1.0}).validate(), InvalidArgument);
  CHECK(loss_family_from_string("epsilon_svr") == LossFamily::EpsInsensitive);
  CHECK_THROWS_AS(loss_family_from_string("hinge"), InvalidArgument);
}

TEST_CASE("metrics") {
  const MatrixXd Y = oracle::uniform(20, 3, 4);
  const VectorXd mean = oracle::uniform(3, 1, 5).col(0);
  CHECK(relative_mse(Y, Y) == 0.0);
  CHECK(rrmse(Y, Y, mean) == VectorXd::Zero(3));
  CHECK(arrmse(Y, Y, mean) == 0.0);
  const MatrixXd at_mean = mean.transpose().replicate(20, 1);
  for (Index t = 0; t < 3; ++t) CHECK(rrmse(at_mean, Y, mean)[t] == doctest::Approx(1.0).epsilon(1e-15));

  const MatrixXd y = Y.col(0);
  const MatrixXd Q = y.replicate(1, 3);
  CHECK(pinball_test_loss(Q, y, {0.1, 0.5, 0.9}) == 0.0);

  MatrixXd mono(2, 3), crossed(2, 3);
  mono << 0, 1, 2, -1, -1, 5;
  crossed << 1, 0, 2, 3, 2, 1;
  CHECK(crossing_loss(mono) == 0.0);
  CHECK(crossing_loss(crossed) == doctest::Approx((1.0 + 2.0) / 2));

  // relative MSE of the target mean is 1
  const MatrixXd flat = MatrixXd::Constant(20, 1, y.mean());
  CHECK(relative_mse(flat, y) == doctest::Approx(1.0).epsilon(1e-14));

  MetricContext ctx;
  ctx.levels = {0.5};
  CHECK(metric(MetricKind::PinballTestLoss, flat, y, ctx) ==
        doctest::Approx(0.5 * (y.array() - y.mean()).abs().sum()));
  CHECK_THROWS_AS(metric(MetricKind::ARRMSE, Y, Y, {}), InvalidArgument);
  CHECK_THROWS_AS(relative_mse(MatrixXd::Ones(4, 1), MatrixXd::Ones(4, 1)), InvalidArgument);
  CHECK_THROWS_AS(relative_mse(MatrixXd::Ones(4, 1), MatrixXd::Ones(3, 1)), InvalidArgument);
}
