#include "ckstab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ckstab/error.hpp"
#include "ckstab/parallel.hpp"

namespace ckstab::metrics {
namespace {

void RequireLength(std::size_t m, const char* what) {
  if (m < 2) {
    throw Error(ErrorCode::kSeriesTooShort,
                std::string(what) + " needs at least 2 entries, got " +
                    std::to_string(m));
  }
}

}  // namespace

double TotalVariation(std::span<const double> values) {
  RequireLength(values.size(), "total variation");
  double tv = 0.0;
  for (std::size_t t = 0; t + 1 < values.size(); ++t) {
    tv += std::abs(values[t + 1] - values[t]);
  }
  return tv;
}

double TotalVariation(const ScoreSeries& series) {
  return TotalVariation(series.values);
}

double Mtv(std::span<const double> values) {
  return TotalVariation(values) / static_cast<double>(values.size() - 1);
}

double Mtv(const ScoreSeries& series) { return Mtv(series.values); }

double InstabilityScore(std::span<const std::string> outputs,
                        scoring::ScoreFnKind kind) {
  RequireLength(outputs.size(), "instability score");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < outputs.size(); ++i) {
    sum += 1.0 - scoring::Similarity(kind, outputs[i], outputs[i + 1]);
  }
  return sum / static_cast<double>(outputs.size() - 1);
}

std::size_t FinalCount(std::size_t m, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  RequireLength(m, "final fraction");
  // The epsilon absorbs representation error in products such as 0.2 * 10.
  const double raw = fraction * static_cast<double>(m);
  auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(count, 2, m);
}

ScoreSeries FinalFraction(const ScoreSeries& series, double fraction) {
  const std::size_t m = series.size();
  const std::size_t keep = FinalCount(m, fraction);
  ScoreSeries out;
  out.steps.assign(series.steps.end() - static_cast<std::ptrdiff_t>(keep),
                   series.steps.end());
  out.values.assign(series.values.end() - static_cast<std::ptrdiff_t>(keep),
                    series.values.end());
  return out;
}

EvalRun FinalFraction(const EvalRun& run, double fraction) {
  const auto& all = run.trajectory().checkpoints();
  const std::size_t keep = FinalCount(all.size(), fraction);
  std::vector<CheckpointRef> refs(all.end() - static_cast<std::ptrdiff_t>(keep),
                                  all.end());
  const std::int64_t first = refs.front().step;
  Trajectory slice(run.trajectory().run_id(), std::move(refs));

  std::vector<ExampleOutcome> records;
  TaskKinds kinds;
  for (const auto& task : run.TaskNames()) {
    const auto& table = run.Task(task);
    kinds[task] = table.info;
    for (const auto& row : table.cells) {
      for (const auto& c : row) {
        if (c.step >= first) records.push_back(c);
      }
    }
  }
  return IngestEvalRun(std::move(records), slice, kinds, run.method());
}

Aggregate Summarize(std::span<const double> values) {
  RequireLength(values.size(), "aggregate");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

double OverallScore(std::span<const double> task_means) {
  if (task_means.empty()) {
    throw Error(ErrorCode::kEmptyInput, "overall score needs at least one task");
  }
  return std::accumulate(task_means.begin(), task_means.end(), 0.0) /
         static_cast<double>(task_means.size());
}

double TaskInstability(const EvalRun& run, const std::string& task,
                       scoring::ScoreFnKind kind) {
  const auto& table = run.Task(task);
  std::vector<double> per_example(table.cells.size());
  ParallelFor(table.cells.size(), [&](std::size_t e) {
    std::vector<std::string> outputs;
    outputs.reserve(table.cells[e].size());
    for (const auto& c : table.cells[e]) outputs.push_back(c.output);
    per_example[e] = InstabilityScore(outputs, kind);
  });
  return std::accumulate(per_example.begin(), per_example.end(), 0.0) /
         static_cast<double>(per_example.size());
}

std::vector<std::string> ExampleMtvRanking(const EvalRun& run,
                                           const std::string& task,
                                           scoring::ScoreFnKind scorer,
                                           std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  const auto& table = run.Task(task);
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& id : table.example_ids) {
    ranked.emplace_back(Mtv(ExampleScoreSeries(run, task, id, scorer)), id);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.first != b.first) return a.first > b.first;
                     return a.second < b.second;
                   });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    out.push_back(ranked[i].second);
  }
  return out;
}

std::vector<MetricReport> AnalyzeRun(const EvalRun& run, double fraction) {
  const EvalRun slice = FinalFraction(run, fraction);
  const auto& refs = slice.trajectory().checkpoints();
  const WindowInfo window{refs.front().step, refs.back().step, refs.size(),
                          fraction};
  std::vector<MetricReport> reports;
  for (const auto& task : slice.TaskNames()) {
    const auto kind = slice.Info(task).kind;
    const ScoreSeries series = TaskScoreSeries(slice, task, kind);
    const Aggregate agg = Summarize(series.values);
    reports.push_back({task, agg.mean, agg.std, Mtv(series),
                       TaskInstability(slice, task, kind), window});
  }
  return reports;
}

}  // namespace ckstab::metrics
