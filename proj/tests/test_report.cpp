#include <doctest.h>

#include <sstream>

#include "ckstab/report.hpp"
#include "ckstab/stabilize.hpp"
#include "fixtures.hpp"

using namespace ckstab;
using namespace ckstab::report;
using testing::CodeOf;
using testing::Grid;
using testing::TempDir;

namespace {

EvalRun Baseline(const std::string& run_id = "r") {
  std::vector<ExampleOutcome> records =
      Grid({10, 20, 30, 40, 50},
           {{"a", "b"}, {"b", "b"}, {"a", "a"}, {"a", "b"}, {"b", "b"}}, {"a", "b"});
  for (const auto& r : Grid({10, 20, 30, 40, 50}, {{"c"}, {"c"}, {"d"}, {"c"}, {"c"}}, {"c"}, "u")) {
    records.push_back(r);
  }
  return IngestEvalRun(records, run_id);
}

}  // namespace

TEST_CASE("analysis of a run") {
  const Analysis a = Analyze(Baseline(), 0.4);
  CHECK(a.run_id == "r");
  CHECK(a.method == "none");
  CHECK(a.window == 1);
  REQUIRE(a.tasks.size() == 2);
  // t over steps 40, 50: [1.0, 0.5]; u: [1, 1]
  CHECK(a.tasks[0].mean == doctest::Approx(0.75));
  CHECK(a.tasks[1].mean == 1.0);
  CHECK(a.overall == doctest::Approx(0.875));
  CHECK(a.series.at("t").size() == 5);
}

TEST_CASE("analysis json and series csv round trips") {
  const EvalRun run = Baseline();
  const Analysis a = Analyze(run, 0.2);
  TempDir dir;
  SaveAnalysis(a, dir / "a.json");
  CHECK(LoadAnalysis(dir / "a.json") == a);

  std::stringstream buf;
  WriteSeriesCsv(a.series, buf);
  CHECK(ReadSeriesCsv(buf) == a.series);

  std::ostringstream csv, text;
  WriteAnalysisCsv(a, csv);
  WriteAnalysisText(a, text);
  CHECK(csv.str().rfind("task,mean,std,mtv,is,first_step,last_step,count", 0) == 0);
  CHECK(text.str().find("overall") != std::string::npos);
}

TEST_CASE("report table") {
  const EvalRun run = Baseline();
  const EvalRun voted = stabilize::StabilizedEvalRun(run, {stabilize::Method::kMajorityVote, 2});
  const std::vector<Analysis> analyses{Analyze(voted, 0.5), Analyze(run, 0.5)};

  SUBCASE("baseline only") {
    const std::vector<Analysis> one{analyses[1]};
    const ReportTable t = BuildReport(one);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].method == "none");
    CHECK(t.rows[0].overall.has_value());
    CHECK(t.task_names == std::vector<std::string>{"t", "u"});
  }
  SUBCASE("baseline first, csv reload is exact") {
    const ReportTable t = BuildReport(analyses);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0].method == "none");
    CHECK(t.rows[1].method == "vote");
    CHECK(t.rows[1].window == 2);
    std::stringstream buf;
    WriteReportCsv(t, buf);
    CHECK(ReadReportCsv(buf) == t);

    std::ostringstream text, trend, series;
    WriteReportText(t, text);
    WriteWindowTrendCsv(t, trend);
    WritePlotSeriesCsv(analyses, series);
    CHECK(text.str().find("vote") != std::string::npos);
    CHECK(trend.str().rfind("method,task,window,mtv,is\n", 0) == 0);
    CHECK(series.str().rfind("method,window,task,step,value\n", 0) == 0);
  }
  SUBCASE("errors") {
    const std::vector<Analysis> mixed{Analyze(run, 0.5), Analyze(Baseline("other"), 0.5)};
    CHECK(CodeOf([&] { BuildReport(mixed); }) == ErrorCode::kMixedRuns);
    const std::vector<Analysis> no_base{analyses[0]};
    CHECK(CodeOf([&] { BuildReport(no_base); }) == ErrorCode::kInvalidArgument);
    const std::vector<Analysis> dup{analyses[1], analyses[1]};
    CHECK(CodeOf([&] { BuildReport(dup); }) == ErrorCode::kInvalidArgument);
    CHECK(CodeOf([&] { BuildReport({}); }) == ErrorCode::kEmptyInput);

    std::istringstream bad_header("nope\n");
    CHECK(CodeOf([&] { ReadReportCsv(bad_header); }) == ErrorCode::kParseError);
  }
}
