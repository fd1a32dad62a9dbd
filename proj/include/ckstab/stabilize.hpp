#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ckstab/ckpt_store.hpp"
#include "ckstab/series.hpp"
#include "ckstab/trajectory.hpp"

namespace ckstab::stabilize {

enum class Method { kScoreAverage, kWeightAverage, kMajorityVote };
enum class TieRule { kMostRecent };

// Names used on the command line and in run annotations: "score", "avg",
// "vote".
std::string_view MethodName(Method method);
std::optional<Method> ParseMethod(std::string_view name);

inline constexpr std::array<int, 6> kPresetWindows = {1, 2, 3, 5, 10, 20};

struct StabilizerConfig {
  Method method = Method::kScoreAverage;
  int window = 1;
  TieRule tie_rule = TieRule::kMostRecent;
};

// Full-window trailing means: entry for t = n..m is the mean of values
// t-n+1..t, stamped with step t. Output length m - n + 1.
// Throws kWindowTooLarge when n > m, kInvalidArgument when n < 1.
ScoreSeries MovingAverageSeries(const ScoreSeries& series, int window);

struct ContractionReport {
  double tv_raw = 0.0;
  double tv_avg = 0.0;
  bool holds = false;
};

// Total variation of the moving average never exceeds that of the raw
// series: each raw transition enters at most n window differences, each
// with weight 1/n. Requires m >= n + 1 (kWindowTooLarge otherwise).
inline constexpr double kContractionSlack = 1e-12;
ContractionReport VerifyTvContraction(const ScoreSeries& series, int window);

// Per-element uniform mean of congruent checkpoints. Carries run_id and step
// of the most recent input. Result does not depend on input order.
// Errors: kEmptyInput, kNameSetMismatch, kShapeMismatch.
ckpt::Checkpoint WeightAverage(std::span<const ckpt::Checkpoint> checkpoints);

// Id of the checkpoint averaging the window that ends at `step`.
std::string SynthesizedId(const std::string& run_id, int window,
                          std::int64_t step);

// Writes one averaged checkpoint per full window (t = n..m) into `out`
// and returns their refs (steps n..m of the input, derived ids). With
// n = m this is a single checkpoint, so the result is a plain list.
std::vector<CheckpointRef> RollingWeightAverage(const Trajectory& trajectory,
                                                int window,
                                                const ckpt::Store& in,
                                                const ckpt::Store& out);
std::vector<CheckpointRef> RollingWeightAverage(const Trajectory& trajectory,
                                                int window,
                                                const ckpt::Store& store);

// Plurality label; ties go to the tied label predicted most recently.
// Inputs are normalized before counting. Throws kEmptyInput.
std::string MajorityVote(std::span<const std::string> window_outputs,
                         TieRule tie_rule = TieRule::kMostRecent);

// Maps a trajectory of synthesized checkpoints to an eval run over it.
using Reevaluator = std::function<EvalRun(const Trajectory&)>;

struct CheckpointSource {
  const ckpt::Store* store = nullptr;   // original checkpoints
  const ckpt::Store* output = nullptr;  // synthesized checkpoints
  Reevaluator reevaluate;
};

// Stabilized run over the aligned trajectory (steps n..m), annotated with
// the method and window.
//  - kMajorityVote: each output is the vote over the window's recorded
//    outputs; every task must be a label task (kNotALabelTask).
//  - kWeightAverage: checkpoints are averaged and re-evaluated through
//    `source` (kMissingCheckpointFiles when absent).
//  - kScoreAverage has no per-example outputs; use StabilizedScoreSeries.
EvalRun StabilizedEvalRun(const EvalRun& run, const StabilizerConfig& config,
                          const CheckpointSource* source = nullptr);

ScoreSeries StabilizedScoreSeries(const EvalRun& run, const std::string& task,
                                  int window);

}  // namespace ckstab::stabilize
