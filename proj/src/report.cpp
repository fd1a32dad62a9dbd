#include "ckstab/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ckstab/error.hpp"

namespace ckstab::report {
namespace {

using nlohmann::json;

std::string Real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string Fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> SplitCsv(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) {
    throw Error(ErrorCode::kParseError,
                "line " + std::to_string(line_no) + ": unterminated quote");
  }
  return fields;
}

double ParseReal(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kParseError,
              "line " + std::to_string(line_no) + ": bad number '" + s + "'");
}

long long ParseInt(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kParseError,
              "line " + std::to_string(line_no) + ": bad integer '" + s + "'");
}

void ExpectHeader(std::istream& in, const std::string& header) {
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw Error(ErrorCode::kParseError, "line 1: expected header '" + header + "'");
  }
}

std::string PadRight(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::string PadLeft(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

// Display width of UTF-8 text, counting code points.
std::size_t Width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

void WriteAligned(const std::vector<std::vector<std::string>>& cells,
                  std::size_t left_columns, std::ostream& out) {
  std::vector<std::size_t> widths;
  for (const auto& row : cells) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], Width(row[c]));
  }
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::size_t pad = widths[c] + row[c].size() - Width(row[c]);
      line += c < left_columns ? PadRight(row[c], pad) : PadLeft(row[c], pad);
      if (c + 1 < row.size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
}

json ToJson(const metrics::MetricReport& r) {
  return {{"task", r.task},
          {"mean", r.mean},
          {"std", r.std},
          {"mtv", r.mtv},
          {"is", r.is},
          {"first_step", r.window.first_step},
          {"last_step", r.window.last_step},
          {"count", r.window.count},
          {"fraction", r.window.fraction}};
}

metrics::MetricReport FromJson(const json& j) {
  metrics::MetricReport r;
  r.task = j.at("task").get<std::string>();
  r.mean = j.at("mean").get<double>();
  r.std = j.at("std").get<double>();
  r.mtv = j.at("mtv").get<double>();
  r.is = j.at("is").get<double>();
  r.window.first_step = j.at("first_step").get<std::int64_t>();
  r.window.last_step = j.at("last_step").get<std::int64_t>();
  r.window.count = j.at("count").get<std::size_t>();
  r.window.fraction = j.at("fraction").get<double>();
  return r;
}

int MethodRank(const std::string& method) { return method == "none" ? 0 : 1; }

}  // namespace

Analysis Analyze(const EvalRun& run, double fraction) {
  Analysis a;
  a.run_id = run.trajectory().run_id();
  a.method = run.method().method;
  a.window = run.method().window;
  a.fraction = fraction;
  a.tasks = metrics::AnalyzeRun(run, fraction);
  std::vector<double> means;
  for (const auto& r : a.tasks) means.push_back(r.mean);
  a.overall = metrics::OverallScore(means);
  for (const auto& task : run.TaskNames()) a.series[task] = TaskScoreSeries(run, task);
  return a;
}

void SaveAnalysis(const Analysis& a, const std::filesystem::path& path) {
  json tasks = json::array();
  for (const auto& r : a.tasks) tasks.push_back(ToJson(r));
  json series = json::object();
  for (const auto& [task, s] : a.series) {
    series[task] = {{"steps", s.steps}, {"values", s.values}};
  }
  const json j = {{"run_id", a.run_id},     {"method", a.method},
                  {"window", a.window},     {"fraction", a.fraction},
                  {"tasks", tasks},         {"overall", a.overall},
                  {"series", series}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

Analysis LoadAnalysis(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    const json j = json::parse(in);
    Analysis a;
    a.run_id = j.at("run_id").get<std::string>();
    a.method = j.at("method").get<std::string>();
    a.window = j.at("window").get<int>();
    a.fraction = j.at("fraction").get<double>();
    for (const auto& t : j.at("tasks")) a.tasks.push_back(FromJson(t));
    a.overall = j.at("overall").get<double>();
    for (const auto& [task, s] : j.at("series").items()) {
      a.series[task] = {s.at("steps").get<std::vector<std::int64_t>>(),
                        s.at("values").get<std::vector<double>>()};
    }
    return a;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

void WriteAnalysisCsv(const Analysis& a, std::ostream& out) {
  out << "task,mean,std,mtv,is,first_step,last_step,count\n";
  for (const auto& r : a.tasks) {
    out << CsvField(r.task) << ',' << Real(r.mean) << ',' << Real(r.std) << ','
        << Real(r.mtv) << ',' << Real(r.is) << ',' << r.window.first_step << ','
        << r.window.last_step << ',' << r.window.count << '\n';
  }
}

void WriteAnalysisText(const Analysis& a, std::ostream& out) {
  out << "run " << a.run_id << ", method " << a.method << ", window " << a.window
      << ", final fraction " << a.fraction << '\n';
  std::vector<std::vector<std::string>> cells = {
      {"task", "mean", "std", "MTV", "IS", "steps", "n"}};
  for (const auto& r : a.tasks) {
    cells.push_back({r.task, Fixed(r.mean, 4), Fixed(r.std, 4), Fixed(r.mtv, 4),
                     Fixed(r.is, 4),
                     std::to_string(r.window.first_step) + "-" +
                         std::to_string(r.window.last_step),
                     std::to_string(r.window.count)});
  }
  cells.push_back({"overall", Fixed(a.overall, 4), "", "", "", "", ""});
  WriteAligned(cells, 1, out);
}

ReportTable BuildReport(std::span<const Analysis> analyses) {
  if (analyses.empty()) throw Error(ErrorCode::kEmptyInput, "no analyses to report");
  ReportTable table;
  table.run_id = analyses.front().run_id;
  std::set<std::string> names;
  std::set<std::pair<std::string, int>> keys;
  for (const auto& a : analyses) {
    if (a.run_id != table.run_id) {
      throw Error(ErrorCode::kMixedRuns,
                  "analyses from runs '" + table.run_id + "' and '" + a.run_id + "'");
    }
    if (!keys.emplace(a.method, a.window).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "two analyses for (" + a.method + ", " + std::to_string(a.window) + ")");
    }
    for (const auto& r : a.tasks) names.insert(r.task);
  }
  if (!keys.count({"none", 1})) {
    throw Error(ErrorCode::kInvalidArgument, "the (none, 1) baseline analysis is required");
  }
  table.task_names.assign(names.begin(), names.end());
  for (const auto& a : analyses) {
    ReportRow row{a.method, a.window, std::nullopt, {}};
    for (const auto& r : a.tasks) row.tasks[r.task] = r;
    if (row.tasks.size() == names.size()) row.overall = a.overall;
    table.rows.push_back(std::move(row));
  }
  std::sort(table.rows.begin(), table.rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tuple(MethodRank(a.method), a.method, a.window) <
           std::tuple(MethodRank(b.method), b.method, b.window);
  });
  return table;
}

namespace {
constexpr const char* kReportHeader =
    "run_id,method,window,kind,task,mean,std,mtv,is,first_step,last_step,count,fraction";
}  // namespace

void WriteReportCsv(const ReportTable& table, std::ostream& out) {
  out << kReportHeader << '\n';
  const std::string run = CsvField(table.run_id);
  for (const auto& row : table.rows) {
    const std::string prefix = run + ',' + CsvField(row.method) + ',' + std::to_string(row.window);
    if (row.overall) {
      out << prefix << ",overall,," << Real(*row.overall) << ",,,,,,,\n";
    }
    for (const auto& [task, r] : row.tasks) {
      out << prefix << ",task," << CsvField(task) << ',' << Real(r.mean) << ','
          << Real(r.std) << ',' << Real(r.mtv) << ',' << Real(r.is) << ','
          << r.window.first_step << ',' << r.window.last_step << ','
          << r.window.count << ',' << Real(r.window.fraction) << '\n';
    }
  }
}

ReportTable ReadReportCsv(std::istream& in) {
  ExpectHeader(in, kReportHeader);
  ReportTable table;
  std::set<std::string> names;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = SplitCsv(line, line_no);
    if (f.size() != 13) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line_no) + ": expected 13 fields");
    }
    if (table.rows.empty() && table.run_id.empty()) table.run_id = f[0];
    if (f[0] != table.run_id) {
      throw Error(ErrorCode::kMixedRuns, "line " + std::to_string(line_no) + ": mixed run_id");
    }
    const int window = static_cast<int>(ParseInt(f[2], line_no));
    if (table.rows.empty() || table.rows.back().method != f[1] ||
        table.rows.back().window != window) {
      table.rows.push_back({f[1], window, std::nullopt, {}});
    }
    ReportRow& row = table.rows.back();
    if (f[3] == "overall") {
      row.overall = ParseReal(f[5], line_no);
    } else if (f[3] == "task") {
      metrics::MetricReport r;
      r.task = f[4];
      r.mean = ParseReal(f[5], line_no);
      r.std = ParseReal(f[6], line_no);
      r.mtv = ParseReal(f[7], line_no);
      r.is = ParseReal(f[8], line_no);
      r.window.first_step = ParseInt(f[9], line_no);
      r.window.last_step = ParseInt(f[10], line_no);
      r.window.count = static_cast<std::size_t>(ParseInt(f[11], line_no));
      r.window.fraction = ParseReal(f[12], line_no);
      names.insert(r.task);
      row.tasks[r.task] = r;
    } else {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line_no) + ": unknown row kind '" + f[3] + "'");
    }
  }
  table.task_names.assign(names.begin(), names.end());
  return table;
}

void WriteReportText(const ReportTable& table, std::ostream& out) {
  out << "run " << table.run_id << '\n';
  std::vector<std::string> header = {"method", "window", "overall"};
  header.insert(header.end(), table.task_names.begin(), table.task_names.end());
  std::vector<std::vector<std::string>> cells = {header};
  for (const auto& row : table.rows) {
    std::vector<std::string> line = {row.method,
                                     row.method == "none" ? "" : std::to_string(row.window),
                                     row.overall ? Fixed(*row.overall, 3) : "-"};
    for (const auto& task : table.task_names) {
      auto it = row.tasks.find(task);
      line.push_back(it == row.tasks.end()
                         ? "-"
                         : Fixed(it->second.mean, 3) + "±" + Fixed(it->second.std, 3));
    }
    cells.push_back(std::move(line));
  }
  WriteAligned(cells, 1, out);
}

void WriteWindowTrendCsv(const ReportTable& table, std::ostream& out) {
  out << "method,task,window,mtv,is\n";
  for (const auto& row : table.rows) {
    for (const auto& [task, r] : row.tasks) {
      out << CsvField(row.method) << ',' << CsvField(task) << ',' << row.window << ','
          << Real(r.mtv) << ',' << Real(r.is) << '\n';
    }
  }
}

void WritePlotSeriesCsv(std::span<const Analysis> analyses, std::ostream& out) {
  out << "method,window,task,step,value\n";
  for (const auto& a : analyses) {
    for (const auto& [task, s] : a.series) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        out << CsvField(a.method) << ',' << a.window << ',' << CsvField(task) << ','
            << s.steps[i] << ',' << Real(s.values[i]) << '\n';
      }
    }
  }
}

void WriteSeriesCsv(const std::map<std::string, ScoreSeries>& series, std::ostream& out) {
  out << "task,step,value\n";
  for (const auto& [task, s] : series) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      out << CsvField(task) << ',' << s.steps[i] << ',' << Real(s.values[i]) << '\n';
    }
  }
}

std::map<std::string, ScoreSeries> ReadSeriesCsv(std::istream& in) {
  ExpectHeader(in, "task,step,value");
  std::map<std::string, ScoreSeries> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = SplitCsv(line, line_no);
    if (f.size() != 3) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line_no) + ": expected 3 fields");
    }
    ScoreSeries& s = out[f[0]];
    const auto step = ParseInt(f[1], line_no);
    if (!s.steps.empty() && step <= s.steps.back()) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) +
                                              ": steps must increase within a task");
    }
    s.steps.push_back(step);
    s.values.push_back(ParseReal(f[2], line_no));
  }
  return out;
}

}  // namespace ckstab::report
