#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skm/core.hpp"
#include "skm/data.hpp"
#include "skm/kernels.hpp"
#include "skm/losses.hpp"
#include "skm/solver.hpp"

namespace skm {

// Invalid experiment configuration; the CLI maps it to exit code 2.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class TaskKind { RobustScalar, JointQuantile, MultiOutputRidge };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

struct DatasetConfig {
  std::string source = "friedman";  // friedman | heteroscedastic | multioutput | manifest
  Index n_clean = 1980;
  Index n_outlier = 20;
  double noise_sd = 1.0;
  Index n = 1000;  // heteroscedastic, multioutput
  Index q = 5;     // multioutput
  Index d = 3;     // multioutput
  std::string manifest;
  double test_fraction = 0.3;
  // friedman only: when > 0, train on every generated point and test on this
  // many fresh outlier-free draws instead of splitting.
  Index clean_test = 0;
  bool standardize = true;
  bool standardize_targets = false;
  std::uint64_t seed = 0;
};

struct KernelConfig {
  KernelFamily family = KernelFamily::Gaussian;
  // Gaussian base bandwidth; the median heuristic when absent. The CV grid
  // is base * bandwidth_grid.
  std::optional<double> bandwidth;
  std::vector<double> bandwidth_grid = {0.1, 0.5, 1.0, 2.0, 10.0};
  int degree = 2;
  double offset = 1.0;
};

struct TaskConfig {
  TaskKind kind = TaskKind::RobustScalar;
  LossFamily loss = LossFamily::Huber;                   // RobustScalar only
  std::vector<double> loss_param_grid = {0.1, 0.5, 1.0, 2.0};  // kappa or epsilon
  std::vector<double> levels = {0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> gamma_grid = {0.1, 1.0, 10.0};     // quantile output matrix
};

// One sweep point. `kind` is a sketch kind, "unsketched" or "rff" (where s
// is the number of random features). p_per_n, when set, gives p = p_per_n / n.
struct SweepEntry {
  std::string kind = "unsketched";
  Index s = 0;
  double p = 1.0;
  std::optional<double> p_per_n;
  int m = 1;

  bool is_sketch() const { return kind != "unsketched" && kind != "rff"; }
  double resolved_p(Index n) const;
  std::string label() const;
};

struct CvConfig {
  int folds = 5;
  SweepEntry sketch{"subsampling", 100, 1.0, std::nullopt, 1};
  int epochs = 20;
};

// `count` log-spaced points from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int count);

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetConfig dataset;
  KernelConfig kernel;
  TaskConfig task;
  std::vector<double> lambda_grid = log_grid(1e-6, 1e-1, 7);
  CvConfig cv;
  std::vector<SweepEntry> sweep;
  int replicates = 1;
  std::uint64_t seed = 0;
  AdamConfig solver;
  std::string output = "bench_out";

  // Checks everything that does not depend on the data.
  void validate() const;
  // Checks sweep entries (and the CV sketch, when CV runs) against the
  // training size.
  void validate_for(Index n_train) const;
  // Size of the CV grid; 1 means CV is skipped.
  Index cv_grid_points() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& config);

// Train/test data after splitting and optional standardization.
struct PreparedData {
  Dataset train, test;
  std::vector<std::string> warnings;
};
PreparedData prepare_data(const ExperimentConfig& config);

struct Hyperparameters {
  double bandwidth = 1.0;
  double lambda = 1e-3;
  double loss_param = 1.0;  // kappa or epsilon
  double gamma = 1.0;       // quantile output matrix
  double cv_score = 0.0;    // mean validation score of the chosen point (0 without CV)
  Index cv_points = 1;
};

struct ReplicateResult {
  int replicate = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::map<std::string, double> metrics;
  double fit_seconds = 0;    // sketch generation + application + optimization
  double apply_seconds = 0;  // sketch generation + S K and S K S^T
  Index active_columns = 0;
};

struct Summary {
  double mean = 0;
  double sd = 0;  // sample standard deviation; 0 for a single value
};

// mean / sd over the given values.
Summary summarize(const std::vector<double>& values);

struct EntryResult {
  SweepEntry entry;
  std::vector<ReplicateResult> replicates;
  Index succeeded = 0;
  std::map<std::string, Summary> metrics;  // over successful replicates
  Summary fit_seconds;
  Summary apply_seconds;
};

struct RunRecord {
  nlohmann::json config;
  TaskKind task = TaskKind::RobustScalar;
  std::string primary_metric;
  Index n_train = 0;
  Index n_test = 0;
  Hyperparameters hyper;
  std::vector<std::string> warnings;
  std::vector<EntryResult> entries;

  Index failed_replicates() const;
  Index total_replicates() const;
};

std::string primary_metric(TaskKind task);

// Recomputes every aggregate of `entry` from its replicate rows.
void aggregate(EntryResult& entry);

// 5-fold CV over the grids, then every sweep entry x replicate. Solver
// errors are recorded per replicate; configuration errors throw ConfigError.
RunRecord run_experiment(const ExperimentConfig& config);

// Grid search on the training split, using the configured CV sketch.
Hyperparameters cross_validate(const ExperimentConfig& config, const Dataset& train);

// record.json (with timings), replicates.csv (with timings) and metrics.csv
// (metric values only, reproducible byte for byte).
void write_run_outputs(const RunRecord& record, const std::string& directory);

nlohmann::json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);
RunRecord load_run_record(const std::string& path);

std::string metrics_csv(const RunRecord& record);

// Worker threads for replicates: SKM_NUM_THREADS, default 1.
unsigned worker_threads();

// ---------------------------------------------------------------------------

enum class ReportFormat { Csv, Markdown, PlotData };

ReportFormat report_format_from_string(const std::string& name);

// Summary table over the entries of the given records, which must share a
// task. Markdown columns: kind, s, p/m, metric mean +- sd, time mean +- sd.
std::string render_report(const std::vector<RunRecord>& records, ReportFormat format);

// ---------------------------------------------------------------------------

// K-satisfiability of every sketch entry of the sweep on the training
// inputs, one row per entry with the number of replicates that satisfy both
// conditions.
nlohmann::json sketch_diagnostics(const ExperimentConfig& config);

}  // namespace skm
