#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ckstab/scoring.hpp"
#include "ckstab/series.hpp"

namespace ckstab {

struct CheckpointRef {
  std::int64_t step = 0;
  std::string id;

  bool operator==(const CheckpointRef&) const = default;
};

// Ordered checkpoint sequence of one run. Steps are strictly increasing,
// all >= 1, and there are at least two of them. Stabilized runs are the
// exception: a window as long as the run leaves a single aligned checkpoint.
class Trajectory {
 public:
  Trajectory() = default;
  // Drops step 0 (the initial checkpoint) and validates the rest.
  Trajectory(std::string run_id, std::vector<CheckpointRef> checkpoints,
             std::size_t min_checkpoints = 2);
  // Window-aligned trajectory of a stabilized run; one checkpoint suffices.
  static Trajectory Aligned(std::string run_id, std::vector<CheckpointRef> checkpoints);

  // Ids default to the decimal step.
  static Trajectory FromSteps(std::string run_id,
                              const std::vector<std::int64_t>& steps);

  const std::string& run_id() const { return run_id_; }
  const std::vector<CheckpointRef>& checkpoints() const { return checkpoints_; }
  std::vector<std::int64_t> steps() const;
  std::size_t size() const { return checkpoints_.size(); }
  // Index of `step`, or nullopt.
  std::optional<std::size_t> IndexOf(std::int64_t step) const;

  bool operator==(const Trajectory&) const = default;

 private:
  std::string run_id_;
  std::vector<CheckpointRef> checkpoints_;
};

struct ExampleOutcome {
  std::int64_t step = 0;
  std::string task;
  std::string example_id;
  std::string output;
  std::vector<std::string> references;
  std::optional<std::string> gold_label;

  bool operator==(const ExampleOutcome&) const = default;
};

struct TaskInfo {
  scoring::ScoreFnKind kind = scoring::ScoreFnKind::kExactMatch;
  bool label_task = false;

  bool operator==(const TaskInfo&) const = default;
};

using TaskKinds = std::map<std::string, TaskInfo>;

// Stabilizer annotation carried by derived runs ("none" for raw runs).
struct RunMethod {
  std::string method = "none";
  int window = 1;

  bool operator==(const RunMethod&) const = default;
};

// Rectangular table of outcomes: every (task, example) has exactly one
// outcome per trajectory checkpoint. Immutable once built.
class EvalRun {
 public:
  struct TaskTable {
    TaskInfo info;
    std::vector<std::string> example_ids;              // sorted
    std::vector<std::vector<ExampleOutcome>> cells;    // [example][step index]

    bool operator==(const TaskTable&) const = default;
  };

  const Trajectory& trajectory() const { return trajectory_; }
  const RunMethod& method() const { return method_; }
  std::vector<std::string> TaskNames() const;
  bool HasTask(const std::string& task) const;
  // Throw Error(kUnknownTask).
  const TaskTable& Task(const std::string& task) const;
  const TaskInfo& Info(const std::string& task) const { return Task(task).info; }
  // Outputs of one example across the trajectory. Throws kUnknownExample.
  const std::vector<ExampleOutcome>& ExampleCells(
      const std::string& task, const std::string& example_id) const;

  std::size_t OutcomeCount() const;
  // All outcomes ordered by (step, task, example_id).
  std::vector<ExampleOutcome> Outcomes() const;

  bool operator==(const EvalRun&) const = default;

 private:
  friend class EvalRunBuilder;
  Trajectory trajectory_;
  RunMethod method_;
  std::map<std::string, TaskTable> tasks_;
};

struct IngestStats {
  std::size_t dropped_initial = 0;  // records at step 0
};

// Builds a rectangular EvalRun. Records at step 0 are dropped and counted.
// Tasks missing from `kinds` default to exact match, flagged as label tasks
// iff every record carries a gold label.
// Errors: kEmptyRun, kDuplicateOutcome, kMisalignedRun.
EvalRun IngestEvalRun(std::vector<ExampleOutcome> records,
                      const Trajectory& trajectory, const TaskKinds& kinds = {},
                      RunMethod method = {}, IngestStats* stats = nullptr);

// Same, with the trajectory inferred from the distinct record steps.
EvalRun IngestEvalRun(std::vector<ExampleOutcome> records,
                      const std::string& run_id, const TaskKinds& kinds = {},
                      RunMethod method = {}, IngestStats* stats = nullptr);

// Mean per-example score at each checkpoint.
ScoreSeries TaskScoreSeries(const EvalRun& run, const std::string& task,
                            scoring::ScoreFnKind scorer);
ScoreSeries TaskScoreSeries(const EvalRun& run, const std::string& task);

ScoreSeries ExampleScoreSeries(const EvalRun& run, const std::string& task,
                               const std::string& example_id,
                               scoring::ScoreFnKind scorer);

// ---- eval-run line files ------------------------------------------------
//
// One JSON object per line: step, task, example_id, output, references,
// gold_label (string or null). Optional: run_id, checkpoint_id, scorer,
// label_task, method, window. Unknown fields are ignored.

// Throws Error(kParseError) with a 1-based line number in the message.
EvalRun ReadEvalRun(std::istream& in, const TaskKinds& overrides = {},
                    IngestStats* stats = nullptr);
EvalRun LoadEvalRun(const std::string& path, const TaskKinds& overrides = {},
                    IngestStats* stats = nullptr);

void WriteEvalRun(const EvalRun& run, std::ostream& out);
void SaveEvalRun(const EvalRun& run, const std::string& path);

}  // namespace ckstab
