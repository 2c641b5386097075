#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>

#include "skm/bench.hpp"
#include "skm/spectrum.hpp"

using namespace skm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("skm_bench_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& body) const {
    std::ofstream(path / name) << body;
    return (path / name).string();
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small robust-regression run with every grid collapsed to one point.
json small_config() {
  return json::parse(R"({
    "name": "small",
    "dataset": {"source": "friedman", "n_clean": 76, "n_outlier": 4, "test_fraction": 0.3, "seed": 3},
    "kernel": {"family": "gaussian", "bandwidth": 10.0, "bandwidth_grid": [1.0]},
    "task": {"kind": "robust_scalar", "loss": "huber", "loss_param_grid": [1.0]},
    "lambda_grid": [0.001],
    "sweep": [{"kind": "unsketched"},
              {"kind": "psr", "s": 10, "p": 0.5},
              {"kind": "subsampling", "s": 10},
              {"kind": "accumulation", "s": 10, "m": 2}],
    "replicates": 2,
    "seed": 11,
    "solver": {"epochs": 10, "batch": 32, "step": 0.05}
  })");
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SKM_BENCH_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

EntryResult fake_entry(SweepEntry e, std::vector<double> values, std::vector<double> times) {
  EntryResult er;
  er.entry = std::move(e);
  for (size_t i = 0; i < values.size(); ++i) {
    ReplicateResult r;
    r.replicate = static_cast<int>(i);
    r.ok = true;
    r.metrics["relative_mse"] = values[i];
    r.fit_seconds = times[i];
    er.replicates.push_back(r);
  }
  aggregate(er);
  return er;
}

}  // namespace

TEST_CASE("config defaults and round-trip") {
  const ExperimentConfig c = config_from_json(json::parse(R"({"sweep": [{"kind": "unsketched"}]})"));
  CHECK(c.dataset.source == "friedman");
  CHECK(c.dataset.n_clean == 1980);
  CHECK(c.dataset.n_outlier == 20);
  CHECK(c.cv.folds == 5);
  CHECK(c.lambda_grid.size() == 7);
  CHECK(c.lambda_grid.front() == doctest::Approx(1e-6));
  CHECK(c.lambda_grid.back() == doctest::Approx(1e-1));
  CHECK_FALSE(c.kernel.bandwidth.has_value());

  const ExperimentConfig small = config_from_json(small_config());
  const json again = to_json(config_from_json(to_json(small)));
  CHECK(again == to_json(small));
  CHECK(small.sweep[1].label() == "psr s=10 p=0.5");
  CHECK(small.sweep[3].label() == "accumulation s=10 m=2");

  SweepEntry scaled{"psg", 20, 1.0, 5.0, 1};
  CHECK(scaled.resolved_p(100) == 0.05);
  CHECK(scaled.resolved_p(2) == 1.0);
  CHECK(scaled.label() == "psg s=20 p=5/n");
  const auto grid = log_grid(1e-3, 1e1, 5);
  CHECK(grid[2] == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("config errors are ConfigError") {
  const auto bad = [](const std::function<void(json&)>& edit) {
    json j = small_config();
    edit(j);
    CHECK_THROWS_AS(config_from_json(j), ConfigError);
  };
  bad([](json& j) { j["bogus"] = 1; });
  bad([](json& j) { j["dataset"]["colour"] = "red"; });
  bad([](json& j) { j["sweep"] = json::array(); });
  bad([](json& j) { j["sweep"][1]["p"] = 0.0; });
  bad([](json& j) { j["sweep"][1]["p"] = 1.5; });
  bad([](json& j) { j["sweep"][1]["kind"] = "srht"; });
  bad([](json& j) { j["sweep"].push_back({{"kind", "rff"}, {"s", 7}}); });
  bad([](json& j) { j["cv"] = {{"folds", 1}}; });
  bad([](json& j) { j["task"]["kind"] = "classification"; });
  bad([](json& j) { j["task"]["loss"] = "square"; });
  bad([](json& j) { j["lambda_grid"] = {-1.0}; });
  bad([](json& j) { j["replicates"] = 0; });
  bad([](json& j) { j["dataset"]["test_fraction"] = 1.0; });
  bad([](json& j) { j["dataset"]["clean_test"] = -1; });
  bad([](json& j) { j["dataset"] = {{"source", "heteroscedastic"}, {"clean_test", 10}}; });
  bad([](json& j) { j["solver"]["step"] = "fast"; });
  bad([](json& j) { j["kernel"]["family"] = "laplace"; });

  ExperimentConfig c = config_from_json(small_config());
  c.sweep[1].s = 60;  // n_train = 56
  CHECK_THROWS_AS(run_experiment(c), ConfigError);

  TempDir dir("cfg");
  CHECK_THROWS_AS(load_config(dir.write("c.toml", "name = 'x'")), ConfigError);
  CHECK_THROWS_AS(load_config(dir.write("c.json", "{ nope")), ConfigError);
  CHECK_THROWS_AS(load_config((dir.path / "absent.json").string()), ConfigError);
}

TEST_CASE("manifest datasets resolve relative to the config") {
  TempDir dir("manifest");
  fs::create_directories(dir.path / "data");
  std::ostringstream csv;
  csv << "a,b,y\n";
  for (int i = 0; i < 30; ++i) csv << i * 0.1 << ',' << (i % 7) * 0.3 << ',' << std::sin(i * 0.1) << '\n';
  dir.write("data/toy.csv", csv.str());
  dir.write("data/toy.json", R"({"path": "toy.csv", "target_columns": ["y"], "name": "toy"})");
  json j = small_config();
  j["dataset"] = {{"source", "manifest"}, {"manifest", "data/toy.json"}};
  j["sweep"] = json::array({json{{"kind", "unsketched"}}});
  const auto path = dir.write("exp.json", j.dump());
  const ExperimentConfig c = load_config(path);
  const PreparedData d = prepare_data(c);
  CHECK(d.train.size() == 21);
  CHECK(d.test.size() == 9);
  CHECK(d.train.feature_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("a clean test set replaces the split for Friedman data") {
  json j = small_config();
  j["dataset"]["clean_test"] = 40;
  j["dataset"]["standardize"] = false;
  const PreparedData d = prepare_data(config_from_json(j));
  CHECK(d.train.size() == 80);
  CHECK(d.test.size() == 40);
  CHECK(d.test.X.minCoeff() >= 0.0);
  CHECK(d.test.X.maxCoeff() < 1.0);
  CHECK(d.train.X.bottomRows(4).mean() > 1.0);  // the outliers stay in training
  CHECK(prepare_data(config_from_json(j)).test.Y == d.test.Y);
}

TEST_CASE("a small run produces consistent records") {
  const ExperimentConfig c = config_from_json(small_config());
  const RunRecord r = run_experiment(c);
  CHECK(r.n_train == 56);
  CHECK(r.n_test == 24);
  CHECK(r.primary_metric == "relative_mse");
  CHECK(r.hyper.cv_points == 1);
  CHECK(r.hyper.bandwidth == 10.0);
  REQUIRE(r.entries.size() == 4);
  CHECK(r.failed_replicates() == 0);
  CHECK(r.total_replicates() == 8);
  for (const auto& e : r.entries) {
    REQUIRE(e.replicates.size() == 2);
    std::vector<double> v;
    for (const auto& rep : e.replicates) {
      CHECK(rep.ok);
      CHECK(std::isfinite(rep.metrics.at("relative_mse")));
      CHECK(rep.fit_seconds >= rep.apply_seconds);
      v.push_back(rep.metrics.at("relative_mse"));
    }
    const double mean = (v[0] + v[1]) / 2;
    CHECK(std::abs(e.metrics.at("relative_mse").mean - mean) <= 1e-12);
    CHECK(std::abs(e.metrics.at("relative_mse").sd - std::abs(v[0] - v[1]) / std::sqrt(2.0)) <= 1e-12);
  }
  // Replicates draw different sketches; the unsketched fit differs only through ADAM shuffling.
  CHECK(r.entries[1].replicates[0].metrics != r.entries[1].replicates[1].metrics);
  CHECK(r.entries[2].replicates[0].active_columns == 10);
  CHECK(r.entries[0].replicates[0].active_columns == 56);

  // JSON round-trip keeps every metric bit.
  const RunRecord back = run_record_from_json(json::parse(to_json(r).dump()));
  CHECK(metrics_csv(back) == metrics_csv(r));
  CHECK(render_report({back}, ReportFormat::Csv) == render_report({r}, ReportFormat::Csv));
}

TEST_CASE("runs are reproducible, also across thread counts") {
  const ExperimentConfig c = config_from_json(small_config());
  const std::string first = metrics_csv(run_experiment(c));
  CHECK(metrics_csv(run_experiment(c)) == first);
  ::setenv("SKM_NUM_THREADS", "3", 1);
  CHECK(worker_threads() == 3);
  CHECK(metrics_csv(run_experiment(c)) == first);
  ::unsetenv("SKM_NUM_THREADS");
  CHECK(worker_threads() == 1);
}

TEST_CASE("cross-validation prefers a sensible lambda") {
  json j = small_config();
  j["lambda_grid"] = {1e-3, 1e4};
  j["cv"] = {{"folds", 3}, {"epochs", 10}, {"sketch", {{"kind", "subsampling"}, {"s", 20}}}};
  j["sweep"] = json::array({json{{"kind", "subsampling"}, {"s", 20}}});
  j["replicates"] = 1;
  const RunRecord r = run_experiment(config_from_json(j));
  CHECK(r.hyper.cv_points == 2);
  CHECK(r.hyper.lambda == 1e-3);
  CHECK(std::isfinite(r.hyper.cv_score));
  CHECK(r.hyper.cv_score > 0);
}

TEST_CASE("replicate failures are recorded, not thrown") {
  json j = small_config();
  // With p this small every column is null with overwhelming probability.
  j["sweep"] = json::array({json{{"kind", "psr"}, {"s", 1}, {"p", 1e-12}}, json{{"kind", "unsketched"}}});
  const RunRecord r = run_experiment(config_from_json(j));
  CHECK(r.failed_replicates() == 2);
  CHECK(r.entries[0].succeeded == 0);
  CHECK_FALSE(r.entries[0].replicates[0].error.empty());
  CHECK(r.entries[1].succeeded == 2);
  const std::string md = render_report({r}, ReportFormat::Markdown);
  CHECK(md.find("| psr | 1 | p=1e-12 | n/a | n/a |") != std::string::npos);
}

TEST_CASE("aggregate and summarize") {
  const Summary s = summarize({1.0, 2.0, 4.0});
  CHECK(s.mean == doctest::Approx(7.0 / 3).epsilon(1e-15));
  CHECK(s.sd == doctest::Approx(std::sqrt((16.0 / 9 + 1.0 / 9 + 25.0 / 9) / 2)).epsilon(1e-15));
  CHECK(summarize({5.0}).sd == 0.0);

  EntryResult e = fake_entry({"psr", 4, 0.5, std::nullopt, 1}, {0.3, 0.5, 0.1}, {1, 2, 3});
  e.replicates[2].ok = false;
  e.replicates[2].metrics.clear();
  aggregate(e);
  CHECK(e.succeeded == 2);
  CHECK(e.metrics.at("relative_mse").mean == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(e.fit_seconds.mean == 1.5);
}

TEST_CASE("markdown report golden output") {
  RunRecord r;
  r.task = TaskKind::RobustScalar;
  r.primary_metric = "relative_mse";
  r.n_train = 400;
  r.entries.push_back(fake_entry({"unsketched", 0, 1.0, std::nullopt, 1}, {0.4, 0.6}, {1.25, 1.25}));
  r.entries.push_back(fake_entry({"psr", 20, 1.0, 100.0, 1}, {0.5}, {0.125}));
  r.entries.push_back(fake_entry({"accumulation", 10, 1.0, std::nullopt, 3}, {0.75}, {0.5}));
  const std::string expected =
      "| kind | s | p/m | relative_mse (mean ± sd) | fit time s (mean ± sd) |\n"
      "|---|---|---|---|---|\n"
      "| unsketched | - | - | 0.5 ± 0.1414 | 1.25 ± 0 |\n"
      "| psr | 20 | p=0.25 | 0.5 ± 0 | 0.125 ± 0 |\n"
      "| accumulation | 10 | m=3 | 0.75 ± 0 | 0.5 ± 0 |\n";
  CHECK(render_report({r}, ReportFormat::Markdown) == expected);

  const std::string csv = render_report({r}, ReportFormat::Csv);
  CHECK(csv.rfind("kind,s,p_or_m,metric,metric_mean,metric_sd,time_mean,time_sd,succeeded,replicates\n", 0) == 0);
  CHECK(csv.find("psr,20,p=0.25,relative_mse,0.5,0,0.125,0,1,1\n") != std::string::npos);
  const std::string plot = render_report({r}, ReportFormat::PlotData);
  CHECK(plot.find("accumulation\t10\tm=3\t0.5\t0.75\n") != std::string::npos);

  RunRecord other = r;
  other.task = TaskKind::JointQuantile;
  other.primary_metric = "pinball";
  CHECK_THROWS_AS(render_report({r, other}, ReportFormat::Markdown), InvalidArgument);
  CHECK_THROWS_AS(report_format_from_string("html"), InvalidArgument);
}

TEST_CASE("sketch diagnostics") {
  json j = small_config();
  j["replicates"] = 3;
  const json d = sketch_diagnostics(config_from_json(j));
  CHECK(d.at("n").get<Index>() == 56);
  CHECK(d.at("d_n").get<Index>() >= 1);
  REQUIRE(d.at("entries").size() == 3);  // sketch entries only
  const json& psr = d.at("entries")[0];
  CHECK(psr.at("c").get<double>() == doctest::Approx(theorem_c(0.5)));
  CHECK(psr.at("satisfied").get<int>() <= 3);
  CHECK(psr.at("lhs1").at("mean").get<double>() >= 0);
}

TEST_CASE("CLI exit codes and outputs") {
  TempDir dir("cli");
  json j = small_config();
  j["replicates"] = 1;
  j["output"] = (dir.path / "out").string();
  const auto good = dir.write("good.json", j.dump());
  CHECK(run_cli("run --config " + good) == 0);
  CHECK(fs::exists(dir.path / "out" / "record.json"));
  CHECK(fs::exists(dir.path / "out" / "replicates.csv"));
  const std::string metrics = slurp(dir.path / "out" / "metrics.csv");
  CHECK(metrics.rfind("entry,kind,s,p,m,replicate,seed,ok,relative_mse\n", 0) == 0);

  const auto report_path = (dir.path / "report.md").string();
  CHECK(run_cli("report --format markdown --output " + report_path + " " + (dir.path / "out").string()) == 0);
  CHECK(slurp(report_path).find("| psr | 10 | p=0.5 |") != std::string::npos);
  CHECK(run_cli("report --format csv " + (dir.path / "out" / "record.json").string()) == 0);
  CHECK(run_cli("report --format html " + (dir.path / "out").string()) == 2);
  CHECK(run_cli("report " + (dir.path / "missing").string()) == 1);

  json bad = j;
  bad["sweep"][0]["kind"] = "nonsense";
  CHECK(run_cli("run --config " + dir.write("bad.json", bad.dump())) == 2);
  CHECK(run_cli("run") == 2);
  CHECK(run_cli("frobnicate") == 2);

  json failing = j;
  failing["sweep"] = json::array({json{{"kind", "psr"}, {"s", 1}, {"p", 1e-12}}});
  failing["output"] = (dir.path / "fail").string();
  CHECK(run_cli("run --config " + dir.write("fail.json", failing.dump())) == 3);

  json diag = j;
  diag["output"] = (dir.path / "diag").string();
  CHECK(run_cli("sketch-diag --config " + dir.write("diag.json", diag.dump())) == 0);
  CHECK(fs::exists(dir.path / "diag" / "sketch_diag.json"));
}
