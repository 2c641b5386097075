#include "skm/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "skm/random.hpp"
#include "skm/sketch.hpp"
#include "skm/spectrum.hpp"

namespace skm {

using nlohmann::json;

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::RobustScalar: return "robust_scalar";
    case TaskKind::JointQuantile: return "joint_quantile";
    case TaskKind::MultiOutputRidge: return "multioutput_ridge";
  }
  return "unknown";
}

TaskKind task_kind_from_string(const std::string& name) {
  for (auto k : {TaskKind::RobustScalar, TaskKind::JointQuantile, TaskKind::MultiOutputRidge}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown task: " + name);
}

std::string primary_metric(TaskKind task) {
  switch (task) {
    case TaskKind::RobustScalar: return "relative_mse";
    case TaskKind::JointQuantile: return "pinball";
    case TaskKind::MultiOutputRidge: return "arrmse";
  }
  return "";
}

std::vector<double> log_grid(double lo, double hi, int count) {
  require(lo > 0 && hi >= lo && count >= 1, "log_grid: need 0 < lo <= hi and count >= 1");
  if (count == 1) return {lo};
  std::vector<double> out;
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < count; ++i) out.push_back(std::pow(10.0, a + (b - a) * i / (count - 1)));
  return out;
}

double SweepEntry::resolved_p(Index n) const {
  if (p_per_n) return std::min(1.0, *p_per_n / static_cast<double>(n));
  return p;
}

std::string SweepEntry::label() const {
  std::ostringstream os;
  os << kind;
  if (kind != "unsketched") os << " s=" << s;
  if (kind == "psr" || kind == "psg") {
    if (p_per_n) {
      os << " p=" << *p_per_n << "/n";
    } else {
      os << " p=" << p;
    }
  }
  if (kind == "accumulation") os << " m=" << m;
  return os.str();
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

SweepEntry sweep_entry_from_json(const json& j, const std::string& where) {
  check_keys(j, {"kind", "s", "p", "p_per_n", "m"}, where);
  SweepEntry e;
  e.kind = j.at("kind").get<std::string>();
  read(j, "s", e.s);
  read(j, "p", e.p);
  if (j.contains("p_per_n")) e.p_per_n = j.at("p_per_n").get<double>();
  read(j, "m", e.m);
  return e;
}

json to_json(const SweepEntry& e) {
  json j = {{"kind", e.kind}, {"s", e.s}, {"p", e.p}, {"m", e.m}};
  if (e.p_per_n) j["p_per_n"] = *e.p_per_n;
  return j;
}

void validate_entry(const SweepEntry& e, const KernelConfig& kernel, const std::string& where) {
  if (e.kind == "unsketched") return;
  if (e.kind == "rff") {
    if (kernel.family != KernelFamily::Gaussian) {
      throw ConfigError(where + ": random features need the gaussian kernel");
    }
    if (e.s < 2 || e.s % 2 != 0) throw ConfigError(where + ": rff needs an even s >= 2");
    return;
  }
  SketchKind kind;
  try {
    kind = sketch_kind_from_string(e.kind);
  } catch (const InvalidArgument& err) {
    throw ConfigError(where + ": " + err.what());
  }
  if (kind == SketchKind::Explicit) throw ConfigError(where + ": explicit sketches cannot be swept");
  if (e.s < 1) throw ConfigError(where + ": s must be >= 1");
  if (e.p_per_n && !(*e.p_per_n > 0)) throw ConfigError(where + ": p_per_n must be positive");
  if (!e.p_per_n && !(e.p > 0 && e.p <= 1)) throw ConfigError(where + ": p must lie in (0, 1]");
  if (e.m < 1) throw ConfigError(where + ": m must be >= 1");
}

void require_positive_grid(const std::vector<double>& grid, const std::string& what) {
  if (grid.empty()) throw ConfigError(what + " must not be empty");
  for (double v : grid) {
    if (!(v > 0) || !std::isfinite(v)) throw ConfigError(what + " values must be positive");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  const std::set<std::string> sources = {"friedman", "heteroscedastic", "multioutput", "manifest"};
  if (!sources.count(dataset.source)) throw ConfigError("dataset: unknown source " + dataset.source);
  if (dataset.source == "manifest" && dataset.manifest.empty()) {
    throw ConfigError("dataset: manifest source needs a manifest path");
  }
  if (dataset.clean_test < 0) throw ConfigError("dataset: clean_test must be >= 0");
  if (dataset.clean_test > 0 && dataset.source != "friedman") {
    throw ConfigError("dataset: clean_test applies to the friedman source only");
  }
  if (!(dataset.test_fraction > 0 && dataset.test_fraction < 1)) {
    throw ConfigError("dataset: test_fraction must lie in (0, 1)");
  }
  if (dataset.n_clean < 0 || dataset.n_outlier < 0 || dataset.n < 1 || dataset.q < 1 ||
      dataset.d < 1) {
    throw ConfigError("dataset: invalid sizes");
  }
  if (kernel.bandwidth && !(*kernel.bandwidth > 0)) throw ConfigError("kernel: bandwidth must be positive");
  require_positive_grid(kernel.bandwidth_grid, "kernel.bandwidth_grid");
  require_positive_grid(lambda_grid, "lambda_grid");
  try {
    KernelSpec{kernel.family, 1.0, kernel.degree, kernel.offset}.validate();
    solver.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  switch (task.kind) {
    case TaskKind::RobustScalar:
      if (task.loss != LossFamily::Huber && task.loss != LossFamily::EpsInsensitive) {
        throw ConfigError("task: robust_scalar needs the huber or eps_insensitive loss");
      }
      require_positive_grid(task.loss_param_grid, "task.loss_param_grid");
      break;
    case TaskKind::JointQuantile:
      require_positive_grid(task.gamma_grid, "task.gamma_grid");
      try {
        LossSpec::pinball(task.levels).validate();
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("task: ") + e.what());
      }
      break;
    case TaskKind::MultiOutputRidge:
      break;
  }
  if (cv.folds < 2) throw ConfigError("cv: folds must be >= 2");
  if (cv.epochs < 1) throw ConfigError("cv: epochs must be >= 1");
  validate_entry(cv.sketch, kernel, "cv.sketch");
  if (sweep.empty()) throw ConfigError("sweep must not be empty");
  for (size_t i = 0; i < sweep.size(); ++i) {
    validate_entry(sweep[i], kernel, "sweep[" + std::to_string(i) + "]");
  }
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
}

void ExperimentConfig::validate_for(Index n_train) const {
  const auto check = [&](const SweepEntry& e, const std::string& where, Index n) {
    if (!e.is_sketch()) return;
    SketchRecord r{sketch_kind_from_string(e.kind), e.s, n, e.resolved_p(n), e.m, 0};
    try {
      r.validate();
    } catch (const InvalidArgument& err) {
      throw ConfigError(where + " (" + e.label() + ", n = " + std::to_string(n) + "): " + err.what());
    }
  };
  for (size_t i = 0; i < sweep.size(); ++i) check(sweep[i], "sweep[" + std::to_string(i) + "]", n_train);
  if (cv_grid_points() > 1) check(cv.sketch, "cv.sketch", n_train - (n_train + cv.folds - 1) / cv.folds);
}

Index ExperimentConfig::cv_grid_points() const {
  Index params = 1;
  if (task.kind == TaskKind::RobustScalar) params = static_cast<Index>(task.loss_param_grid.size());
  if (task.kind == TaskKind::JointQuantile) params = static_cast<Index>(task.gamma_grid.size());
  const Index bandwidths =
      kernel.family == KernelFamily::Gaussian ? static_cast<Index>(kernel.bandwidth_grid.size()) : 1;
  return bandwidths * static_cast<Index>(lambda_grid.size()) * params;
}

ExperimentConfig config_from_json(const json& j) {
  try {
    check_keys(j, {"name", "dataset", "kernel", "task", "lambda_grid", "cv", "sweep",
                   "replicates", "seed", "solver", "output"},
               "config");
    ExperimentConfig c;
    read(j, "name", c.name);
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      check_keys(d, {"source", "n_clean", "n_outlier", "noise_sd", "n", "q", "d", "manifest",
                     "test_fraction", "clean_test", "standardize", "standardize_targets", "seed"},
                 "dataset");
      read(d, "source", c.dataset.source);
      read(d, "n_clean", c.dataset.n_clean);
      read(d, "n_outlier", c.dataset.n_outlier);
      read(d, "noise_sd", c.dataset.noise_sd);
      read(d, "n", c.dataset.n);
      read(d, "q", c.dataset.q);
      read(d, "d", c.dataset.d);
      read(d, "manifest", c.dataset.manifest);
      read(d, "test_fraction", c.dataset.test_fraction);
      read(d, "clean_test", c.dataset.clean_test);
      read(d, "standardize", c.dataset.standardize);
      read(d, "standardize_targets", c.dataset.standardize_targets);
      read(d, "seed", c.dataset.seed);
    }
    if (j.contains("kernel")) {
      const json& k = j.at("kernel");
      check_keys(k, {"family", "bandwidth", "bandwidth_grid", "degree", "offset"}, "kernel");
      if (k.contains("family")) c.kernel.family = kernel_family_from_string(k.at("family"));
      if (k.contains("bandwidth") && !k.at("bandwidth").is_null()) {
        c.kernel.bandwidth = k.at("bandwidth").get<double>();
      }
      read(k, "bandwidth_grid", c.kernel.bandwidth_grid);
      read(k, "degree", c.kernel.degree);
      read(k, "offset", c.kernel.offset);
    }
    if (j.contains("task")) {
      const json& t = j.at("task");
      check_keys(t, {"kind", "loss", "loss_param_grid", "levels", "gamma_grid"}, "task");
      if (t.contains("kind")) c.task.kind = task_kind_from_string(t.at("kind"));
      if (t.contains("loss")) c.task.loss = loss_family_from_string(t.at("loss"));
      read(t, "loss_param_grid", c.task.loss_param_grid);
      read(t, "levels", c.task.levels);
      read(t, "gamma_grid", c.task.gamma_grid);
    }
    read(j, "lambda_grid", c.lambda_grid);
    if (j.contains("cv")) {
      const json& v = j.at("cv");
      check_keys(v, {"folds", "sketch", "epochs"}, "cv");
      read(v, "folds", c.cv.folds);
      read(v, "epochs", c.cv.epochs);
      if (v.contains("sketch")) c.cv.sketch = sweep_entry_from_json(v.at("sketch"), "cv.sketch");
    }
    if (j.contains("sweep")) {
      const json& s = j.at("sweep");
      if (!s.is_array()) throw ConfigError("sweep must be an array");
      for (size_t i = 0; i < s.size(); ++i) {
        c.sweep.push_back(sweep_entry_from_json(s[i], "sweep[" + std::to_string(i) + "]"));
      }
    }
    read(j, "replicates", c.replicates);
    read(j, "seed", c.seed);
    if (j.contains("solver")) {
      const json& a = j.at("solver");
      check_keys(a, {"step", "beta1", "beta2", "epsilon", "batch", "epochs", "decay"}, "solver");
      read(a, "step", c.solver.step);
      read(a, "beta1", c.solver.beta1);
      read(a, "beta2", c.solver.beta2);
      read(a, "epsilon", c.solver.epsilon);
      read(a, "batch", c.solver.batch);
      read(a, "epochs", c.solver.epochs);
      read(a, "decay", c.solver.decay);
    }
    read(j, "output", c.output);
    c.validate();
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".toml") throw ConfigError("TOML configs are not supported; use JSON");
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  ExperimentConfig c = config_from_json(j);
  if (c.dataset.source == "manifest" && std::filesystem::path(c.dataset.manifest).is_relative()) {
    c.dataset.manifest =
        (std::filesystem::path(path).parent_path() / c.dataset.manifest).string();
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  json dataset = {{"source", c.dataset.source},
                  {"n_clean", c.dataset.n_clean},
                  {"n_outlier", c.dataset.n_outlier},
                  {"noise_sd", c.dataset.noise_sd},
                  {"n", c.dataset.n},
                  {"q", c.dataset.q},
                  {"d", c.dataset.d},
                  {"manifest", c.dataset.manifest},
                  {"test_fraction", c.dataset.test_fraction},
                  {"clean_test", c.dataset.clean_test},
                  {"standardize", c.dataset.standardize},
                  {"standardize_targets", c.dataset.standardize_targets},
                  {"seed", c.dataset.seed}};
  json kernel = {{"family", to_string(c.kernel.family)},
                 {"bandwidth", c.kernel.bandwidth ? json(*c.kernel.bandwidth) : json(nullptr)},
                 {"bandwidth_grid", c.kernel.bandwidth_grid},
                 {"degree", c.kernel.degree},
                 {"offset", c.kernel.offset}};
  json task = {{"kind", to_string(c.task.kind)},
               {"loss", to_string(c.task.loss)},
               {"loss_param_grid", c.task.loss_param_grid},
               {"levels", c.task.levels},
               {"gamma_grid", c.task.gamma_grid}};
  json sweep = json::array();
  for (const auto& e : c.sweep) sweep.push_back(to_json(e));
  json solver = {{"step", c.solver.step},     {"beta1", c.solver.beta1},
                 {"beta2", c.solver.beta2},   {"epsilon", c.solver.epsilon},
                 {"batch", c.solver.batch},   {"epochs", c.solver.epochs},
                 {"decay", c.solver.decay}};
  return {{"name", c.name},
          {"dataset", dataset},
          {"kernel", kernel},
          {"task", task},
          {"lambda_grid", c.lambda_grid},
          {"cv", {{"folds", c.cv.folds}, {"sketch", to_json(c.cv.sketch)}, {"epochs", c.cv.epochs}}},
          {"sweep", sweep},
          {"replicates", c.replicates},
          {"seed", c.seed},
          {"solver", solver},
          {"output", c.output}};
}

// ---------------------------------------------------------------------------
// Data

PreparedData prepare_data(const ExperimentConfig& config) {
  const DatasetConfig& d = config.dataset;
  Dataset all;
  try {
    if (d.source == "friedman") {
      all = gen_friedman_robust(d.n_clean, d.n_outlier, d.noise_sd, d.seed);
    } else if (d.source == "heteroscedastic") {
      all = gen_heteroscedastic(d.n, d.seed);
    } else if (d.source == "multioutput") {
      all = gen_multioutput(d.n, d.q, d.d, d.seed);
    } else {
      all = load_manifest(d.manifest);
    }
    if (config.task.kind != TaskKind::MultiOutputRidge && all.Y.cols() != 1) {
      throw ConfigError("dataset: task " + to_string(config.task.kind) + " needs one target column");
    }
    Dataset train, test;
    if (d.source == "friedman" && d.clean_test > 0) {
      train = std::move(all);
      test = gen_friedman_robust(d.clean_test, 0, d.noise_sd, Rng::derive_seed(d.seed, 2));
      train.split = "train";
      test.split = "test";
    } else {
      std::tie(train, test) = split(all, d.test_fraction, Rng::derive_seed(d.seed, 1));
    }
    PreparedData out;
    if (d.standardize || d.standardize_targets) {
      Standardized st = standardize(train, test, d.standardize_targets);
      if (!d.standardize) {
        st.train.X = train.X;
        st.test.X = test.X;
      }
      out.train = std::move(st.train);
      out.test = std::move(st.test);
      out.warnings = st.scaler.warnings;
    } else {
      out.train = std::move(train);
      out.test = std::move(test);
    }
    return out;
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Fitting one sweep entry

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void parallel_for(Index count, const std::function<void(Index)>& body) {
  const unsigned threads =
      static_cast<unsigned>(std::min<Index>(std::max<Index>(count, 1), worker_threads()));
  if (threads <= 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (Index i = next++; i < count; i = next++) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

struct TaskSetup {
  LossSpec loss;
  std::optional<OutputMatrix> output;
};

TaskSetup task_setup(const ExperimentConfig& config, const Hyperparameters& h, Index d) {
  switch (config.task.kind) {
    case TaskKind::RobustScalar:
      return {config.task.loss == LossFamily::Huber ? LossSpec::huber(h.loss_param)
                                                    : LossSpec::eps_insensitive(h.loss_param),
              std::nullopt};
    case TaskKind::JointQuantile:
      return {LossSpec::pinball(config.task.levels), quantile_output(h.gamma, config.task.levels)};
    case TaskKind::MultiOutputRidge:
      return {LossSpec::square(d), identity_output(d)};
  }
  return {};
}

KernelSpec kernel_for(const KernelConfig& k, double bandwidth) {
  return {k.family, bandwidth, k.degree, k.offset};
}

struct FitOutcome {
  FittedModel model;
  double fit_seconds = 0;
  double apply_seconds = 0;
  Index active_columns = 0;
};

// Precomputed kernel quantities shared across fits of the same entry.
struct Precomputed {
  const SketchOperator* sketch = nullptr;
  const SketchedGram* parts = nullptr;
  const MatrixXd* gram = nullptr;
};

FitOutcome fit_entry(const TaskSetup& setup, const SweepEntry& entry, const KernelSpec& spec,
                     double lambda, const Dataset& train, std::uint64_t seed,
                     const AdamConfig& adam, const Precomputed& pre = {}) {
  FitOutcome out;
  const auto start = std::chrono::steady_clock::now();
  const Index n = train.size();
  const bool scalar = !setup.output.has_value();
  if (entry.kind == "unsketched") {
    const MatrixXd K = pre.gram ? MatrixXd() : gram(spec, train.X);
    const auto t0 = std::chrono::steady_clock::now();
    out.model = fit_exact(spec, train.X, pre.gram ? *pre.gram : K, train.Y, setup.output,
                          setup.loss, lambda, adam);
    out.fit_seconds = seconds_since(t0);
    out.active_columns = n;
    return out;
  }
  if (entry.kind == "rff") {
    out.model = fit_random_features(spec, train.X, train.Y, setup.output, setup.loss, lambda,
                                    entry.s, seed, adam);
    out.fit_seconds = seconds_since(start);
    return out;
  }
  std::optional<SketchOperator> own_sketch;
  std::optional<SketchedGram> own_parts;
  if (!pre.sketch) {
    own_sketch = generate_sketch({sketch_kind_from_string(entry.kind), entry.s, n,
                                  entry.resolved_p(n), entry.m, seed});
    own_parts = sketched_gram(*own_sketch, spec, train.X);
  }
  const SketchOperator& S = pre.sketch ? *pre.sketch : *own_sketch;
  const SketchedGram& parts = pre.parts ? *pre.parts : *own_parts;
  out.apply_seconds = seconds_since(start);
  out.active_columns = S.active_columns();
  if (scalar) {
    out.model = fit_scalar_sketched(spec, train.X, train.Y.col(0), setup.loss, lambda, S, parts, adam);
  } else {
    out.model = fit_multioutput_sketched(spec, train.X, train.Y, *setup.output, setup.loss, lambda,
                                         S, parts, adam);
  }
  out.fit_seconds = seconds_since(start);
  return out;
}

std::map<std::string, double> evaluate(const ExperimentConfig& config, const FittedModel& model,
                                       const Dataset& train, const Dataset& test) {
  const MatrixXd P = predict(model, test.X);
  std::map<std::string, double> m;
  switch (config.task.kind) {
    case TaskKind::RobustScalar:
      m["relative_mse"] = relative_mse(P, test.Y);
      break;
    case TaskKind::JointQuantile:
      m["pinball"] = pinball_test_loss(P, test.Y, config.task.levels) /
                     static_cast<double>(test.size());
      m["crossing"] = crossing_loss(P);
      break;
    case TaskKind::MultiOutputRidge: {
      const VectorXd mean = train.Y.colwise().mean().transpose();
      const VectorXd per = rrmse(P, test.Y, mean);
      m["arrmse"] = per.mean();
      for (Index t = 0; t < per.size(); ++t) m["rrmse_" + std::to_string(t + 1)] = per[t];
      break;
    }
  }
  for (const auto& [name, v] : m) {
    if (!std::isfinite(v)) throw NumericalError("metric " + name + " is not finite");
  }
  return m;
}

double base_bandwidth(const ExperimentConfig& config, const Dataset& train) {
  if (config.kernel.bandwidth) return *config.kernel.bandwidth;
  return config.kernel.family == KernelFamily::Gaussian ? median_sq_distance(train.X) : 1.0;
}

}  // namespace

unsigned worker_threads() {
  if (const char* env = std::getenv("SKM_NUM_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Cross-validation

Hyperparameters cross_validate(const ExperimentConfig& config, const Dataset& train) {
  const double base = base_bandwidth(config, train);
  std::vector<double> bandwidths;
  if (config.kernel.family == KernelFamily::Gaussian) {
    for (double f : config.kernel.bandwidth_grid) bandwidths.push_back(base * f);
  } else {
    bandwidths = {base};
  }
  std::vector<double> params = {1.0};
  if (config.task.kind == TaskKind::RobustScalar) params = config.task.loss_param_grid;
  if (config.task.kind == TaskKind::JointQuantile) params = config.task.gamma_grid;
  const auto& lambdas = config.lambda_grid;

  const auto make = [&](double bw, double lambda, double param) {
    Hyperparameters h;
    h.bandwidth = bw;
    h.lambda = lambda;
    h.loss_param = param;
    h.gamma = param;
    return h;
  };
  const Index points = config.cv_grid_points();
  if (points == 1) {
    Hyperparameters h = make(bandwidths[0], lambdas[0], params[0]);
    h.cv_points = 1;
    return h;
  }

  // Fold f holds the positions f, f + folds, ... of a seeded permutation.
  const Index n = train.size();
  const int folds = config.cv.folds;
  Rng rng(Rng::derive_seed(config.seed, 0xC5), 7);
  const auto perm = rng.permutation(static_cast<std::uint64_t>(n));
  std::vector<Dataset> fit_sets, val_sets;
  for (int f = 0; f < folds; ++f) {
    IndexList fit_rows, val_rows;
    for (Index i = 0; i < n; ++i) {
      (i % folds == f ? val_rows : fit_rows).push_back(static_cast<Index>(perm[i]));
    }
    std::sort(fit_rows.begin(), fit_rows.end());
    std::sort(val_rows.begin(), val_rows.end());
    fit_sets.push_back(train.subset(fit_rows, "cv_fit"));
    val_sets.push_back(train.subset(val_rows, "cv_val"));
  }

  AdamConfig adam = config.solver;
  adam.epochs = config.cv.epochs;
  const SweepEntry& entry = config.cv.sketch;
  const std::string metric = primary_metric(config.task.kind);
  const double inf = std::numeric_limits<double>::infinity();

  Hyperparameters best;
  double best_score = inf;
  for (double bw : bandwidths) {
    const KernelSpec spec = kernel_for(config.kernel, bw);
    std::vector<std::optional<SketchOperator>> sketches(static_cast<size_t>(folds));
    std::vector<std::optional<SketchedGram>> parts(static_cast<size_t>(folds));
    std::vector<MatrixXd> grams(static_cast<size_t>(folds));
    std::vector<Precomputed> pre(static_cast<size_t>(folds));
    for (int f = 0; f < folds; ++f) {
      const auto fu = static_cast<size_t>(f);
      const Dataset& fit = fit_sets[fu];
      const std::uint64_t seed = Rng::derive_seed(config.seed, 0xC5 + 1 + static_cast<std::uint64_t>(f));
      if (entry.is_sketch()) {
        const Index nf = fit.size();
        try {
          sketches[fu] = generate_sketch({sketch_kind_from_string(entry.kind), entry.s, nf,
                                          entry.resolved_p(nf), entry.m, seed});
          parts[fu] = sketched_gram(*sketches[fu], spec, fit.X);
          pre[fu] = {&*sketches[fu], &*parts[fu], nullptr};
        } catch (const NumericalError&) {
          // left empty; every grid point then scores infinity on this fold
        }
      } else if (entry.kind == "unsketched") {
        grams[fu] = gram(spec, fit.X);
        pre[fu] = {nullptr, nullptr, &grams[fu]};
      }
    }
    const Index inner = static_cast<Index>(lambdas.size() * params.size());
    std::vector<double> scores(static_cast<size_t>(inner), 0.0);
    parallel_for(inner, [&](Index k) {
      const double lambda = lambdas[static_cast<size_t>(k) / params.size()];
      const double param = params[static_cast<size_t>(k) % params.size()];
      const Hyperparameters h = make(bw, lambda, param);
      double total = 0;
      for (int f = 0; f < folds; ++f) {
        const auto fu = static_cast<size_t>(f);
        if (entry.is_sketch() && !sketches[fu]) {
          total = inf;
          break;
        }
        try {
          const TaskSetup setup = task_setup(config, h, train.Y.cols());
          AdamConfig a = adam;
          a.seed = Rng::derive_seed(config.seed, 0xC5 + 1 + static_cast<std::uint64_t>(f));
          const FitOutcome fo = fit_entry(setup, entry, spec, lambda, fit_sets[fu], a.seed, a, pre[fu]);
          total += evaluate(config, fo.model, fit_sets[fu], val_sets[fu]).at(metric);
        } catch (const NumericalError&) {
          total = inf;
          break;
        }
      }
      scores[static_cast<size_t>(k)] = total / folds;
    });
    for (Index k = 0; k < inner; ++k) {
      const double score = scores[static_cast<size_t>(k)];
      if (score < best_score) {
        best_score = score;
        best = make(bw, lambdas[static_cast<size_t>(k) / params.size()],
                    params[static_cast<size_t>(k) % params.size()]);
      }
    }
  }
  if (!std::isfinite(best_score)) throw NumericalError("cross-validation: every grid point failed");
  best.cv_score = best_score;
  best.cv_points = points;
  return best;
}

// ---------------------------------------------------------------------------
// Runs

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1));
  }
  return s;
}

void aggregate(EntryResult& entry) {
  std::map<std::string, std::vector<double>> values;
  std::vector<double> fit, apply;
  entry.succeeded = 0;
  for (const auto& r : entry.replicates) {
    if (!r.ok) continue;
    ++entry.succeeded;
    for (const auto& [name, v] : r.metrics) values[name].push_back(v);
    fit.push_back(r.fit_seconds);
    apply.push_back(r.apply_seconds);
  }
  entry.metrics.clear();
  for (const auto& [name, v] : values) entry.metrics[name] = summarize(v);
  entry.fit_seconds = summarize(fit);
  entry.apply_seconds = summarize(apply);
}

Index RunRecord::failed_replicates() const {
  Index f = 0;
  for (const auto& e : entries) f += static_cast<Index>(e.replicates.size()) - e.succeeded;
  return f;
}

Index RunRecord::total_replicates() const {
  Index t = 0;
  for (const auto& e : entries) t += static_cast<Index>(e.replicates.size());
  return t;
}

RunRecord run_experiment(const ExperimentConfig& config) {
  config.validate();
  const PreparedData data = prepare_data(config);
  config.validate_for(data.train.size());

  RunRecord record;
  record.config = to_json(config);
  record.task = config.task.kind;
  record.primary_metric = primary_metric(config.task.kind);
  record.n_train = data.train.size();
  record.n_test = data.test.size();
  record.warnings = data.warnings;
  record.hyper = cross_validate(config, data.train);

  const Hyperparameters& h = record.hyper;
  const KernelSpec spec = kernel_for(config.kernel, h.bandwidth);
  const TaskSetup setup = task_setup(config, h, data.train.Y.cols());

  // The unsketched Gram matrix is shared and excluded from fit timings.
  MatrixXd K;
  const bool any_exact = std::any_of(config.sweep.begin(), config.sweep.end(),
                                     [](const SweepEntry& e) { return e.kind == "unsketched"; });
  if (any_exact) K = gram(spec, data.train.X);

  const Index reps = config.replicates;
  for (const auto& e : config.sweep) {
    EntryResult er;
    er.entry = e;
    er.replicates.resize(static_cast<size_t>(reps));
    record.entries.push_back(std::move(er));
  }
  const Index tasks = static_cast<Index>(config.sweep.size()) * reps;
  parallel_for(tasks, [&](Index t) {
    const auto ei = static_cast<size_t>(t / reps);
    const int r = static_cast<int>(t % reps);
    ReplicateResult& res = record.entries[ei].replicates[static_cast<size_t>(r)];
    res.replicate = r;
    res.seed = Rng::derive_seed(config.seed, static_cast<std::uint64_t>(r));
    AdamConfig adam = config.solver;
    adam.seed = res.seed;
    try {
      Precomputed pre;
      if (any_exact) pre.gram = &K;
      const FitOutcome fo = fit_entry(setup, config.sweep[ei], spec, h.lambda, data.train,
                                      res.seed, adam, pre);
      res.metrics = evaluate(config, fo.model, data.train, data.test);
      res.fit_seconds = fo.fit_seconds;
      res.apply_seconds = fo.apply_seconds;
      res.active_columns = fo.active_columns;
      res.ok = true;
    } catch (const std::exception& err) {
      res.ok = false;
      res.error = err.what();
      res.metrics.clear();
    }
  });
  for (auto& e : record.entries) aggregate(e);
  return record;
}

// ---------------------------------------------------------------------------
// Records

namespace {

json to_json(const Summary& s) { return {{"mean", s.mean}, {"sd", s.sd}}; }
Summary summary_from_json(const json& j) { return {j.at("mean").get<double>(), j.at("sd").get<double>()}; }

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> metric_names(const RunRecord& record) {
  std::set<std::string> names;
  for (const auto& e : record.entries) {
    for (const auto& r : e.replicates) {
      for (const auto& [name, v] : r.metrics) names.insert(name);
    }
  }
  return {names.begin(), names.end()};
}

std::string replicate_table(const RunRecord& record, bool with_timings) {
  const auto names = metric_names(record);
  std::ostringstream os;
  os << "entry,kind,s,p,m,replicate,seed,ok";
  for (const auto& name : names) os << "," << name;
  if (with_timings) os << ",fit_seconds,apply_seconds,active_columns";
  os << '\n';
  for (size_t i = 0; i < record.entries.size(); ++i) {
    const auto& e = record.entries[i];
    const double p = e.entry.resolved_p(record.n_train);
    for (const auto& r : e.replicates) {
      os << i << ',' << e.entry.kind << ',' << e.entry.s << ',' << format_g17(p) << ','
         << e.entry.m << ',' << r.replicate << ',' << r.seed << ',' << (r.ok ? 1 : 0);
      for (const auto& name : names) {
        os << ',';
        if (auto it = r.metrics.find(name); it != r.metrics.end()) os << format_g17(it->second);
      }
      if (with_timings) {
        os << ',' << format_g17(r.fit_seconds) << ',' << format_g17(r.apply_seconds) << ','
           << r.active_columns;
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace

std::string metrics_csv(const RunRecord& record) { return replicate_table(record, false); }

json to_json(const RunRecord& record) {
  json entries = json::array();
  for (const auto& e : record.entries) {
    json reps = json::array();
    for (const auto& r : e.replicates) {
      reps.push_back({{"replicate", r.replicate},
                      {"seed", r.seed},
                      {"ok", r.ok},
                      {"error", r.error},
                      {"metrics", r.metrics},
                      {"fit_seconds", r.fit_seconds},
                      {"apply_seconds", r.apply_seconds},
                      {"active_columns", r.active_columns}});
    }
    json metrics = json::object();
    for (const auto& [name, s] : e.metrics) metrics[name] = to_json(s);
    entries.push_back({{"entry", to_json(e.entry)},
                       {"label", e.entry.label()},
                       {"replicates", reps},
                       {"aggregate",
                        {{"succeeded", e.succeeded},
                         {"metrics", metrics},
                         {"fit_seconds", to_json(e.fit_seconds)},
                         {"apply_seconds", to_json(e.apply_seconds)}}}});
  }
  const Hyperparameters& h = record.hyper;
  return {{"config", record.config},
          {"task", to_string(record.task)},
          {"primary_metric", record.primary_metric},
          {"n_train", record.n_train},
          {"n_test", record.n_test},
          {"hyperparameters",
           {{"bandwidth", h.bandwidth},
            {"lambda", h.lambda},
            {"loss_param", h.loss_param},
            {"gamma", h.gamma},
            {"cv_score", h.cv_score},
            {"cv_points", h.cv_points}}},
          {"warnings", record.warnings},
          {"entries", entries}};
}

RunRecord run_record_from_json(const json& j) {
  try {
    RunRecord record;
    record.config = j.at("config");
    record.task = task_kind_from_string(j.at("task").get<std::string>());
    record.primary_metric = j.at("primary_metric").get<std::string>();
    record.n_train = j.at("n_train").get<Index>();
    record.n_test = j.at("n_test").get<Index>();
    const json& h = j.at("hyperparameters");
    record.hyper.bandwidth = h.at("bandwidth").get<double>();
    record.hyper.lambda = h.at("lambda").get<double>();
    record.hyper.loss_param = h.at("loss_param").get<double>();
    record.hyper.gamma = h.at("gamma").get<double>();
    record.hyper.cv_score = h.at("cv_score").get<double>();
    record.hyper.cv_points = h.at("cv_points").get<Index>();
    record.warnings = j.value("warnings", std::vector<std::string>{});
    for (const auto& ej : j.at("entries")) {
      EntryResult e;
      e.entry = sweep_entry_from_json(ej.at("entry"), "entry");
      for (const auto& rj : ej.at("replicates")) {
        ReplicateResult r;
        r.replicate = rj.at("replicate").get<int>();
        r.seed = rj.at("seed").get<std::uint64_t>();
        r.ok = rj.at("ok").get<bool>();
        r.error = rj.at("error").get<std::string>();
        r.metrics = rj.at("metrics").get<std::map<std::string, double>>();
        r.fit_seconds = rj.at("fit_seconds").get<double>();
        r.apply_seconds = rj.at("apply_seconds").get<double>();
        r.active_columns = rj.at("active_columns").get<Index>();
        e.replicates.push_back(std::move(r));
      }
      const json& a = ej.at("aggregate");
      e.succeeded = a.at("succeeded").get<Index>();
      for (const auto& [name, s] : a.at("metrics").items()) e.metrics[name] = summary_from_json(s);
      e.fit_seconds = summary_from_json(a.at("fit_seconds"));
      e.apply_seconds = summary_from_json(a.at("apply_seconds"));
      record.entries.push_back(std::move(e));
    }
    return record;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("run record: ") + e.what());
  }
}

RunRecord load_run_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open run record " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("run record " + path + ": " + e.what());
  }
  return run_record_from_json(j);
}

void write_run_outputs(const RunRecord& record, const std::string& directory) {
  std::filesystem::create_directories(directory);
  const std::filesystem::path dir(directory);
  const auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name);
    if (!out) throw InvalidArgument("cannot write " + (dir / name).string());
    out << text;
  };
  write("record.json", to_json(record).dump(2) + "\n");
  write("replicates.csv", replicate_table(record, true));
  write("metrics.csv", metrics_csv(record));
}

// ---------------------------------------------------------------------------
// Diagnostics

json sketch_diagnostics(const ExperimentConfig& config) {
  config.validate();
  const PreparedData data = prepare_data(config);
  config.validate_for(data.train.size());
  const Index n = data.train.size();
  if (n > kMaxSpectralSize) {
    throw ConfigError("sketch-diag: training set too large for an eigendecomposition (n = " +
                      std::to_string(n) + ")");
  }
  const KernelSpec spec = kernel_for(config.kernel, base_bandwidth(config, data.train));
  const auto prof = spectral_profile(gram(spec, data.train.X));

  json rows = json::array();
  for (const auto& e : config.sweep) {
    if (!e.is_sketch()) continue;
    const double p = e.resolved_p(n);
    const SketchKind kind = sketch_kind_from_string(e.kind);
    const bool sparsified = kind == SketchKind::PSparseRademacher || kind == SketchKind::PSparseGaussian;
    const double c = theorem_c(sparsified ? p : 1.0);
    Index holds = 0, failed = 0;
    std::vector<double> lhs1, lhs2;
    for (int r = 0; r < config.replicates; ++r) {
      try {
        const auto S = generate_sketch(
            {kind, e.s, n, p, e.m, Rng::derive_seed(config.seed, static_cast<std::uint64_t>(r))});
        const KSatisfiability ks = k_satisfiable(S, prof, c);
        holds += ks.holds ? 1 : 0;
        lhs1.push_back(ks.lhs1);
        lhs2.push_back(ks.lhs2);
      } catch (const NumericalError&) {
        ++failed;
      }
    }
    rows.push_back({{"label", e.label()},
                    {"kind", e.kind},
                    {"s", e.s},
                    {"p", p},
                    {"m", e.m},
                    {"c", c},
                    {"replicates", config.replicates},
                    {"failed_draws", failed},
                    {"satisfied", holds},
                    {"lhs1", to_json(summarize(lhs1))},
                    {"lhs2", to_json(summarize(lhs2))},
                    {"rhs2", c * prof.delta_n()}});
  }
  return {{"n", n},
          {"bandwidth", spec.bandwidth},
          {"delta_n_sq", prof.delta_n_sq},
          {"d_n", prof.d_n},
          {"entries", rows}};
}

}  // namespace skm
