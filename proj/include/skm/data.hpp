#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "skm/core.hpp"

namespace skm {

struct Dataset {
  MatrixXd X;  // n x q
  MatrixXd Y;  // n x d
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::string split = "all";

  Index size() const { return X.rows(); }
  Dataset subset(const IndexList& rows, std::string tag) const;
};

// f*(x) = 0.1 e^{4 x1} + 4 / (1 + e^{-20 (x2 - 0.5)}) + 3 x3 + 2 x4 + x5.
double friedman_target(const VectorXd& x);

// n_clean inputs ~ U([0,1]^10) followed by n_outlier inputs ~ N(1.5 1, 0.25 I);
// y = f*(x) + N(0, noise_sd^2) for both groups.
Dataset gen_friedman_robust(Index n_clean, Index n_outlier, double noise_sd, std::uint64_t seed);

// One-dimensional heteroscedastic regression for quantile experiments:
// x ~ U[0,1], y = sin(2 pi x) + 0.5 x + (0.1 + 0.5 x) eps.
Dataset gen_heteroscedastic(Index n, std::uint64_t seed);

// d related targets y_t = sin(<x, w_t>) + 0.1 eps, where the w_t share a
// common direction; inputs ~ U([0,1]^q).
Dataset gen_multioutput(Index n, Index q, Index d, std::uint64_t seed);

// Targets either by column name or as the last `count` columns.
using TargetSelector = std::variant<std::vector<std::string>, Index>;

Dataset load_csv(const std::string& path, const TargetSelector& targets);
void write_csv(const std::string& path, const Dataset& ds);

// {"path": ..., "target_columns": [names] | count, "name": ...}; a relative
// path is resolved against the manifest's directory.
Dataset load_manifest(const std::string& manifest_path);

// Uniform random partition with round(test_fraction * n) test rows.
std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction, std::uint64_t seed);

struct Scaler {
  VectorXd x_mean, x_scale;
  VectorXd y_mean, y_scale;  // identity when targets are not scaled
  std::vector<std::string> warnings;

  MatrixXd transform_x(const MatrixXd& X) const;
  MatrixXd transform_y(const MatrixXd& Y) const;
  MatrixXd inverse_y(const MatrixXd& Y) const;
};

// Centers and scales by training statistics only (population standard
// deviation); zero-variance columns keep scale 1 and add a warning.
Scaler fit_scaler(const Dataset& train, bool scale_targets);

struct Standardized {
  Dataset train, test;
  Scaler scaler;
};
Standardized standardize(const Dataset& train, const Dataset& test, bool scale_targets = false);

}  // namespace skm
