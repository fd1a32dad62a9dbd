#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ckstab/scoring.hpp"
#include "ckstab/series.hpp"
#include "ckstab/trajectory.hpp"

namespace ckstab::metrics {

// Sum of absolute consecutive differences. Throws kSeriesTooShort (m < 2).
double TotalVariation(std::span<const double> values);
double TotalVariation(const ScoreSeries& series);

// Mean total variation: TotalVariation / (m - 1).
double Mtv(std::span<const double> values);
double Mtv(const ScoreSeries& series);

// Mean dissimilarity of consecutive outputs, 1 - sim(x_i, x_{i+1}).
double InstabilityScore(std::span<const std::string> outputs,
                        scoring::ScoreFnKind kind);

// Number of trailing entries kept by FinalFraction: ceil(fraction * m),
// at least 2 and at most m.
std::size_t FinalCount(std::size_t m, double fraction);

ScoreSeries FinalFraction(const ScoreSeries& series, double fraction);
// Slice of the run restricted to the final checkpoints (same tasks/examples).
EvalRun FinalFraction(const EvalRun& run, double fraction);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
};

Aggregate Summarize(std::span<const double> values);

// Unweighted mean of per-task means. Throws kEmptyInput.
double OverallScore(std::span<const double> task_means);

// Task-level IS: unweighted mean of per-example IS over the whole run.
double TaskInstability(const EvalRun& run, const std::string& task,
                       scoring::ScoreFnKind kind);

// Top-k example ids by per-example MTV; ties go to the smaller id.
std::vector<std::string> ExampleMtvRanking(const EvalRun& run,
                                           const std::string& task,
                                           scoring::ScoreFnKind scorer,
                                           std::size_t k);

struct WindowInfo {
  std::int64_t first_step = 0;
  std::int64_t last_step = 0;
  std::size_t count = 0;
  double fraction = 0.0;

  bool operator==(const WindowInfo&) const = default;
};

struct MetricReport {
  std::string task;
  double mean = 0.0;
  double std = 0.0;
  double mtv = 0.0;
  double is = 0.0;
  WindowInfo window;

  bool operator==(const MetricReport&) const = default;
};

// Per-task mean/std/MTV/IS over the final `fraction` of the run, using each
// task's configured scorer. Tasks are processed in name order.
std::vector<MetricReport> AnalyzeRun(const EvalRun& run, double fraction);

}  // namespace ckstab::metrics
