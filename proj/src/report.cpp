#include <cstdio>
#include <sstream>

#include "skm/bench.hpp"

namespace skm {

ReportFormat report_format_from_string(const std::string& name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "markdown") return ReportFormat::Markdown;
  if (name == "plotdata") return ReportFormat::PlotData;
  throw InvalidArgument("unknown report format: " + name + " (expected csv, markdown or plotdata)");
}

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

std::string size_cell(const SweepEntry& e) {
  return e.kind == "unsketched" ? "-" : std::to_string(e.s);
}

std::string sparsity_cell(const SweepEntry& e, Index n) {
  if (e.kind == "accumulation") return "m=" + std::to_string(e.m);
  if (e.kind == "psr" || e.kind == "psg") return "p=" + fmt("%.4g", e.resolved_p(n));
  return "-";
}

std::string mean_sd(const Summary& s) { return fmt("%.4g", s.mean) + " ± " + fmt("%.4g", s.sd); }

}  // namespace

std::string render_report(const std::vector<RunRecord>& records, ReportFormat format) {
  require(!records.empty(), "report: no records");
  for (const auto& r : records) {
    if (r.task != records[0].task) {
      throw InvalidArgument("report: records mix tasks (" + to_string(records[0].task) + " and " +
                            to_string(r.task) + ")");
    }
  }
  const std::string metric = records[0].primary_metric;
  std::ostringstream os;
  switch (format) {
    case ReportFormat::Markdown:
      os << "| kind | s | p/m | " << metric << " (mean ± sd) | fit time s (mean ± sd) |\n";
      os << "|---|---|---|---|---|\n";
      break;
    case ReportFormat::Csv:
      os << "kind,s,p_or_m,metric,metric_mean,metric_sd,time_mean,time_sd,succeeded,replicates\n";
      break;
    case ReportFormat::PlotData:
      os << "# kind\ts\tp_or_m\tfit_seconds\t" << metric << "\n";
      break;
  }
  for (const auto& record : records) {
    for (const auto& e : record.entries) {
      const auto it = e.metrics.find(metric);
      const bool have = it != e.metrics.end() && e.succeeded > 0;
      const std::string kind = e.entry.kind;
      const std::string s = size_cell(e.entry);
      const std::string pm = sparsity_cell(e.entry, record.n_train);
      switch (format) {
        case ReportFormat::Markdown:
          os << "| " << kind << " | " << s << " | " << pm << " | "
             << (have ? mean_sd(it->second) : "n/a") << " | "
             << (have ? mean_sd(e.fit_seconds) : "n/a") << " |\n";
          break;
        case ReportFormat::Csv:
          os << kind << ',' << s << ',' << pm << ',' << metric << ','
             << (have ? fmt("%.17g", it->second.mean) : "") << ','
             << (have ? fmt("%.17g", it->second.sd) : "") << ','
             << (have ? fmt("%.17g", e.fit_seconds.mean) : "") << ','
             << (have ? fmt("%.17g", e.fit_seconds.sd) : "") << ',' << e.succeeded << ','
             << e.replicates.size() << '\n';
          break;
        case ReportFormat::PlotData:
          if (have) {
            os << kind << '\t' << s << '\t' << pm << '\t' << fmt("%.17g", e.fit_seconds.mean)
               << '\t' << fmt("%.17g", it->second.mean) << '\n';
          }
          break;
      }
    }
  }
  return os.str();
}

}  // namespace skm
