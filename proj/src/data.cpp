#include "skm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "skm/random.hpp"

namespace skm {

Dataset Dataset::subset(const IndexList& rows, std::string tag) const {
  Dataset out;
  out.X = X(rows, Eigen::all);
  out.Y = Y(rows, Eigen::all);
  out.feature_names = feature_names;
  out.target_names = target_names;
  out.split = std::move(tag);
  return out;
}

double friedman_target(const VectorXd& x) {
  require(x.size() >= 5, "friedman_target: needs at least 5 coordinates");
  return 0.1 * std::exp(4 * x[0]) + 4.0 / (1.0 + std::exp(-20 * (x[1] - 0.5))) + 3 * x[2] +
         2 * x[3] + x[4];
}

namespace {

std::vector<std::string> numbered(const std::string& prefix, Index count) {
  std::vector<std::string> names;
  for (Index i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i + 1));
  return names;
}

}  // namespace

Dataset gen_friedman_robust(Index n_clean, Index n_outlier, double noise_sd, std::uint64_t seed) {
  require(n_clean >= 0 && n_outlier >= 0, "gen_friedman_robust: sizes must be >= 0");
  require(noise_sd >= 0, "gen_friedman_robust: noise_sd must be >= 0");
  constexpr Index q = 10;
  const Index n = n_clean + n_outlier;
  Dataset ds;
  ds.X.resize(n, q);
  ds.Y.resize(n, 1);
  Rng inputs(seed, 101), noise(seed, 102);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < q; ++c) {
      ds.X(i, c) = i < n_clean ? inputs.uniform() : 1.5 + 0.5 * inputs.normal();
    }
    ds.Y(i, 0) = friedman_target(ds.X.row(i).transpose()) + noise_sd * noise.normal();
  }
  ds.feature_names = numbered("x", q);
  ds.target_names = {"y"};
  return ds;
}

Dataset gen_heteroscedastic(Index n, std::uint64_t seed) {
  require(n >= 1, "gen_heteroscedastic: n must be >= 1");
  Dataset ds;
  ds.X.resize(n, 1);
  ds.Y.resize(n, 1);
  Rng inputs(seed, 201), noise(seed, 202);
  for (Index i = 0; i < n; ++i) {
    const double x = inputs.uniform();
    ds.X(i, 0) = x;
    ds.Y(i, 0) = std::sin(2 * std::numbers::pi * x) + 0.5 * x + (0.1 + 0.5 * x) * noise.normal();
  }
  ds.feature_names = {"x1"};
  ds.target_names = {"y"};
  return ds;
}

Dataset gen_multioutput(Index n, Index q, Index d, std::uint64_t seed) {
  require(n >= 1 && q >= 1 && d >= 1, "gen_multioutput: sizes must be >= 1");
  Rng weights(seed, 301), inputs(seed, 302), noise(seed, 303);
  VectorXd shared(q);
  for (Index c = 0; c < q; ++c) shared[c] = weights.normal();
  MatrixXd W(q, d);
  for (Index t = 0; t < d; ++t) {
    for (Index c = 0; c < q; ++c) W(c, t) = shared[c] + 0.3 * weights.normal();
  }
  Dataset ds;
  ds.X.resize(n, q);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < q; ++c) ds.X(i, c) = inputs.uniform();
  }
  ds.Y = (ds.X * W).array().sin().matrix();
  for (Index i = 0; i < n; ++i) {
    for (Index t = 0; t < d; ++t) ds.Y(i, t) += 0.1 * noise.normal();
  }
  ds.feature_names = numbered("x", q);
  ds.target_names = numbered("y", d);
  return ds;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Dataset load_csv(const std::string& path, const TargetSelector& targets) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("load_csv: missing header row in " + path);
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_fields(line);
  const Index cols = static_cast<Index>(header.size());

  std::vector<bool> is_target(header.size(), false);
  if (std::holds_alternative<Index>(targets)) {
    const Index count = std::get<Index>(targets);
    require(count >= 1 && count < cols, "load_csv: target count must be in [1, columns)");
    for (Index c = cols - count; c < cols; ++c) is_target[static_cast<size_t>(c)] = true;
  } else {
    const auto& names = std::get<std::vector<std::string>>(targets);
    require(!names.empty(), "load_csv: no target columns given");
    for (const auto& name : names) {
      bool found = false;
      for (size_t c = 0; c < header.size(); ++c) {
        if (header[c] == name) {
          is_target[c] = true;
          found = true;
        }
      }
      if (!found) throw InvalidArgument("load_csv: unknown target column '" + name + "'");
    }
  }

  std::vector<std::vector<double>> rows;
  Index row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (static_cast<Index>(fields.size()) != cols) {
      throw InvalidArgument("load_csv: row " + std::to_string(row_number) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(cols));
    }
    std::vector<double> values(fields.size());
    for (size_t c = 0; c < fields.size(); ++c) {
      const auto& f = fields[c];
      double v = 0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      const std::string where =
          "row " + std::to_string(row_number) + ", column '" + header[c] + "'";
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size()) {
        throw InvalidArgument("load_csv: non-numeric cell at " + where);
      }
      if (!std::isfinite(v)) throw InvalidArgument("load_csv: NaN or Inf at " + where);
      values[c] = v;
    }
    rows.push_back(std::move(values));
  }
  require(!rows.empty(), "load_csv: no data rows in " + path);

  Dataset ds;
  const Index n = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(std::count(is_target.begin(), is_target.end(), true));
  require(cols - d >= 1, "load_csv: no feature columns left");
  ds.X.resize(n, cols - d);
  ds.Y.resize(n, d);
  for (Index c = 0, xi = 0, yi = 0; c < cols; ++c) {
    const bool t = is_target[static_cast<size_t>(c)];
    for (Index i = 0; i < n; ++i) {
      (t ? ds.Y(i, yi) : ds.X(i, xi)) = rows[static_cast<size_t>(i)][static_cast<size_t>(c)];
    }
    (t ? ds.target_names : ds.feature_names).push_back(header[static_cast<size_t>(c)]);
    (t ? yi : xi)++;
  }
  return ds;
}

void write_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("write_csv: cannot open " + path);
  const auto fnames = ds.feature_names.size() == static_cast<size_t>(ds.X.cols())
                          ? ds.feature_names
                          : numbered("x", ds.X.cols());
  const auto tnames = ds.target_names.size() == static_cast<size_t>(ds.Y.cols())
                          ? ds.target_names
                          : numbered("y", ds.Y.cols());
  bool first = true;
  for (const auto& name : fnames) out << (first ? "" : ",") << name, first = false;
  for (const auto& name : tnames) out << "," << name;
  out << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index i = 0; i < ds.X.rows(); ++i) {
    for (Index c = 0; c < ds.X.cols(); ++c) out << (c ? "," : "") << ds.X(i, c);
    for (Index t = 0; t < ds.Y.cols(); ++t) out << "," << ds.Y(i, t);
    out << '\n';
  }
}

Dataset load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw InvalidArgument("load_manifest: cannot open " + manifest_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("load_manifest: ") + e.what());
  }
  std::filesystem::path data_path = j.at("path").get<std::string>();
  if (data_path.is_relative()) {
    data_path = std::filesystem::path(manifest_path).parent_path() / data_path;
  }
  const auto& tc = j.at("target_columns");
  TargetSelector sel = tc.is_number_integer() ? TargetSelector(tc.get<Index>())
                                              : TargetSelector(tc.get<std::vector<std::string>>());
  return load_csv(data_path.string(), sel);
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  require(test_fraction > 0 && test_fraction < 1, "split: test_fraction must lie in (0, 1)");
  const Index n = ds.size();
  const auto n_test = static_cast<Index>(std::llround(test_fraction * static_cast<double>(n)));
  require(n_test >= 1 && n_test < n, "split: both parts must be non-empty");
  Rng rng(seed, 401);
  const auto perm = rng.permutation(static_cast<std::uint64_t>(n));
  IndexList test(perm.begin(), perm.begin() + n_test);
  IndexList train(perm.begin() + n_test, perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {ds.subset(train, "train"), ds.subset(test, "test")};
}

namespace {

void column_stats(const MatrixXd& A, VectorXd& mean, VectorXd& scale,
                  std::vector<std::string>& warnings, const std::string& what) {
  const double n = static_cast<double>(A.rows());
  mean = A.colwise().mean().transpose();
  scale.resize(A.cols());
  for (Index c = 0; c < A.cols(); ++c) {
    const double sd = std::sqrt((A.col(c).array() - mean[c]).square().sum() / n);
    if (sd > 0) {
      scale[c] = sd;
    } else {
      scale[c] = 1.0;
      warnings.push_back(what + " column " + std::to_string(c) + " has zero variance; scale set to 1");
    }
  }
}

}  // namespace

MatrixXd Scaler::transform_x(const MatrixXd& X) const {
  require(X.cols() == x_mean.size(), "Scaler: feature count mismatch");
  return (X.rowwise() - x_mean.transpose()).array().rowwise() / x_scale.transpose().array();
}

MatrixXd Scaler::transform_y(const MatrixXd& Y) const {
  require(Y.cols() == y_mean.size(), "Scaler: target count mismatch");
  return (Y.rowwise() - y_mean.transpose()).array().rowwise() / y_scale.transpose().array();
}

MatrixXd Scaler::inverse_y(const MatrixXd& Y) const {
  require(Y.cols() == y_mean.size(), "Scaler: target count mismatch");
  return (Y.array().rowwise() * y_scale.transpose().array()).matrix().rowwise() +
         y_mean.transpose();
}

Scaler fit_scaler(const Dataset& train, bool scale_targets) {
  require(train.size() >= 1, "fit_scaler: empty training set");
  Scaler s;
  column_stats(train.X, s.x_mean, s.x_scale, s.warnings, "feature");
  if (scale_targets) {
    column_stats(train.Y, s.y_mean, s.y_scale, s.warnings, "target");
  } else {
    s.y_mean = VectorXd::Zero(train.Y.cols());
    s.y_scale = VectorXd::Ones(train.Y.cols());
  }
  return s;
}

Standardized standardize(const Dataset& train, const Dataset& test, bool scale_targets) {
  Standardized out{train, test, fit_scaler(train, scale_targets)};
  out.train.X = out.scaler.transform_x(train.X);
  out.test.X = out.scaler.transform_x(test.X);
  out.train.Y = out.scaler.transform_y(train.Y);
  out.test.Y = out.scaler.transform_y(test.Y);
  return out;
}

}  // namespace skm
