// bench: sketch sweeps, reports and K-satisfiability diagnostics.
//
//   bench run --config experiment.json
//   bench report --format markdown out/a/record.json out/b/record.json
//   bench sketch-diag --config experiment.json
//
// Exit codes: 0 success, 1 other error, 2 configuration error, 3 every
// replicate of a run failed.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "skm/bench.hpp"

namespace {

int run(const std::string& config_path) {
  const skm::ExperimentConfig config = skm::load_config(config_path);
  const skm::RunRecord record = skm::run_experiment(config);
  skm::write_run_outputs(record, config.output);
  for (const auto& w : record.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << skm::render_report({record}, skm::ReportFormat::Markdown);
  std::cout << "outputs written to " << config.output << '\n';
  const auto failed = record.failed_replicates();
  if (failed > 0) {
    std::cerr << failed << " of " << record.total_replicates() << " replicates failed\n";
    for (const auto& e : record.entries) {
      for (const auto& r : e.replicates) {
        if (!r.ok) std::cerr << "  " << e.entry.label() << " #" << r.replicate << ": " << r.error << '\n';
      }
    }
  }
  return failed == record.total_replicates() ? 3 : 0;
}

int report(const std::string& format, const std::vector<std::string>& paths,
           const std::string& output) {
  const auto fmt = skm::report_format_from_string(format);
  std::vector<skm::RunRecord> records;
  for (const auto& p : paths) {
    const auto path = std::filesystem::is_directory(p) ? std::filesystem::path(p) / "record.json"
                                                       : std::filesystem::path(p);
    records.push_back(skm::load_run_record(path.string()));
  }
  const std::string text = skm::render_report(records, fmt);
  if (output.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(output);
    if (!out) throw skm::InvalidArgument("cannot write " + output);
    out << text;
  }
  return 0;
}

int sketch_diag(const std::string& config_path) {
  const skm::ExperimentConfig config = skm::load_config(config_path);
  const auto diag = skm::sketch_diagnostics(config);
  std::filesystem::create_directories(config.output);
  std::ofstream(std::filesystem::path(config.output) / "sketch_diag.json") << diag.dump(2) << '\n';
  std::cout << diag.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketched kernel machine benchmarks"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Cross-validate, then fit every sweep entry");
  run_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();

  std::string format = "markdown";
  std::string output;
  std::vector<std::string> records;
  auto* report_cmd = app.add_subcommand("report", "Summarize run records");
  report_cmd->add_option("--format", format, "csv, markdown or plotdata")
      ->check(CLI::IsMember({"csv", "markdown", "plotdata"}));
  report_cmd->add_option("--output", output, "Write to a file instead of stdout");
  report_cmd->add_option("records", records, "record.json files or run directories")->required();

  auto* diag_cmd = app.add_subcommand("sketch-diag", "K-satisfiability of the sweep's sketches");
  diag_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) return run(config_path);
    if (report_cmd->parsed()) return report(format, records, output);
    if (diag_cmd->parsed()) return sketch_diag(config_path);
  } catch (const skm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
