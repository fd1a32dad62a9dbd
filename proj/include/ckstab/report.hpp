#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckstab/metrics.hpp"
#include "ckstab/series.hpp"
#include "ckstab/trajectory.hpp"

namespace ckstab::report {

// Everything `analyze` learns about one (possibly stabilized) run.
struct Analysis {
  std::string run_id;
  std::string method = "none";
  int window = 1;
  double fraction = 0.2;
  std::vector<metrics::MetricReport> tasks;
  double overall = 0.0;
  // Full task score series of the run (plot data).
  std::map<std::string, ScoreSeries> series;

  bool operator==(const Analysis&) const = default;
};

Analysis Analyze(const EvalRun& run, double fraction);

void SaveAnalysis(const Analysis& analysis, const std::filesystem::path& path);
Analysis LoadAnalysis(const std::filesystem::path& path);

// task,mean,std,mtv,is,first_step,last_step,count
void WriteAnalysisCsv(const Analysis& analysis, std::ostream& out);
void WriteAnalysisText(const Analysis& analysis, std::ostream& out);

struct ReportRow {
  std::string method;
  int window = 1;
  // Present only when the row covers every task of the table.
  std::optional<double> overall;
  std::map<std::string, metrics::MetricReport> tasks;

  bool operator==(const ReportRow&) const = default;
};

// Rows keyed by (method, window); the (none, 1) baseline is always first,
// then methods in name order with windows ascending.
struct ReportTable {
  std::string run_id;
  std::vector<std::string> task_names;
  std::vector<ReportRow> rows;

  bool operator==(const ReportTable&) const = default;
};

// Errors: kEmptyInput, kMixedRuns (differing run_ids), kInvalidArgument
// (no baseline, or a repeated (method, window)).
ReportTable BuildReport(std::span<const Analysis> analyses);

// Long format, one line per (row, task) plus one per row overall:
//   run_id,method,window,kind,task,mean,std,mtv,is,first_step,last_step,count,fraction
// Reals are printed with 17 significant digits so reloading is exact.
void WriteReportCsv(const ReportTable& table, std::ostream& out);
ReportTable ReadReportCsv(std::istream& in);
// Aligned text, mean±std per task and overall, "-" where not applicable.
void WriteReportText(const ReportTable& table, std::ostream& out);
// method,task,window,mtv,is
void WriteWindowTrendCsv(const ReportTable& table, std::ostream& out);
// method,window,task,step,value
void WritePlotSeriesCsv(std::span<const Analysis> analyses, std::ostream& out);

// task,step,value rows for a set of score series.
void WriteSeriesCsv(const std::map<std::string, ScoreSeries>& series,
                    std::ostream& out);
std::map<std::string, ScoreSeries> ReadSeriesCsv(std::istream& in);

}  // namespace ckstab::report
