#include "ckstab/stabilize.hpp"

#include <map>

#include "ckstab/error.hpp"
#include "ckstab/metrics.hpp"
#include "ckstab/scoring.hpp"

namespace ckstab::stabilize {
namespace {

void RequireWindow(int window, std::size_t m, std::size_t extra) {
  if (window < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "window must be >= 1, got " + std::to_string(window));
  }
  if (static_cast<std::size_t>(window) + extra > m) {
    throw Error(ErrorCode::kWindowTooLarge,
                "window " + std::to_string(window) + " needs at least " +
                    std::to_string(window + extra) + " entries, have " +
                    std::to_string(m));
  }
}

EvalRun Annotate(const EvalRun& run, RunMethod method) {
  TaskKinds kinds;
  for (const auto& task : run.TaskNames()) kinds[task] = run.Info(task);
  return IngestEvalRun(run.Outcomes(), run.trajectory(), kinds,
                       std::move(method));
}

EvalRun VoteRun(const EvalRun& run, int n) {
  const auto& refs = run.trajectory().checkpoints();
  const std::size_t m = refs.size();
  const Trajectory aligned = Trajectory::Aligned(
      run.trajectory().run_id(), {refs.begin() + (n - 1), refs.end()});
  std::vector<ExampleOutcome> records;
  TaskKinds kinds;
  for (const auto& task : run.TaskNames()) {
    const auto& table = run.Task(task);
    if (!table.info.label_task) {
      throw Error(ErrorCode::kNotALabelTask,
                  "majority vote needs a label task, '" + task + "' is not");
    }
    kinds[task] = table.info;
    if (n == 1) continue;
    std::vector<std::string> window(static_cast<std::size_t>(n));
    for (const auto& row : table.cells) {
      for (std::size_t t = static_cast<std::size_t>(n) - 1; t < m; ++t) {
        for (std::size_t k = 0; k < window.size(); ++k) {
          window[k] = row[t + 1 - window.size() + k].output;
        }
        ExampleOutcome out = row[t];
        out.output = MajorityVote(window);
        records.push_back(std::move(out));
      }
    }
  }
  const RunMethod annotation{std::string(MethodName(Method::kMajorityVote)), n};
  if (n == 1) return Annotate(run, annotation);
  return IngestEvalRun(std::move(records), aligned, kinds, annotation);
}

}  // namespace

std::string_view MethodName(Method method) {
  switch (method) {
    case Method::kScoreAverage: return "score";
    case Method::kWeightAverage: return "avg";
    case Method::kMajorityVote: return "vote";
  }
  return "score";
}

std::optional<Method> ParseMethod(std::string_view name) {
  if (name == "score") return Method::kScoreAverage;
  if (name == "avg") return Method::kWeightAverage;
  if (name == "vote") return Method::kMajorityVote;
  return std::nullopt;
}

ScoreSeries MovingAverageSeries(const ScoreSeries& series, int window) {
  const std::size_t m = series.size();
  RequireWindow(window, m, 0);
  const auto n = static_cast<std::size_t>(window);
  ScoreSeries out;
  for (std::size_t t = n - 1; t < m; ++t) {
    double sum = 0.0;
    for (std::size_t i = t + 1 - n; i <= t; ++i) sum += series.values[i];
    out.steps.push_back(series.steps[t]);
    out.values.push_back(sum / static_cast<double>(n));
  }
  return out;
}

ContractionReport VerifyTvContraction(const ScoreSeries& series, int window) {
  RequireWindow(window, series.size(), 1);
  ContractionReport r;
  r.tv_raw = metrics::TotalVariation(series);
  r.tv_avg = metrics::TotalVariation(MovingAverageSeries(series, window));
  r.holds = r.tv_avg <= r.tv_raw + kContractionSlack;
  return r;
}

ckpt::Checkpoint WeightAverage(std::span<const ckpt::Checkpoint> checkpoints) {
  if (checkpoints.empty()) {
    throw Error(ErrorCode::kEmptyInput, "no checkpoints to average");
  }
  // Index tensors by name so input tensor order is irrelevant.
  std::vector<std::map<std::string, const ckpt::TensorRecord*>> tables;
  for (const auto& c : checkpoints) {
    auto& table = tables.emplace_back();
    for (const auto& t : c.tensors) {
      if (!table.emplace(t.name, &t).second) {
        throw Error(ErrorCode::kNameSetMismatch, "duplicate tensor '" + t.name + "'");
      }
    }
  }
  const ckpt::Checkpoint* latest = &checkpoints.front();
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    if (tables[k].size() != tables.front().size()) {
      throw Error(ErrorCode::kNameSetMismatch, "tensor sets differ between inputs");
    }
    if (checkpoints[k].step > latest->step) latest = &checkpoints[k];
  }

  ckpt::Checkpoint out{latest->run_id, latest->step, false, {}};
  std::vector<float> column(checkpoints.size());
  for (const auto& [name, ref] : tables.front()) {
    std::vector<const ckpt::TensorRecord*> members;
    for (const auto& table : tables) {
      auto it = table.find(name);
      if (it == table.end()) {
        throw Error(ErrorCode::kNameSetMismatch,
                    "tensor '" + name + "' not present in every input");
      }
      if (it->second->shape != ref->shape ||
          it->second->data.size() != ref->data.size()) {
        throw Error(ErrorCode::kShapeMismatch, "tensor '" + name + "' has differing shapes");
      }
      members.push_back(it->second);
    }
    ckpt::TensorRecord avg{name, ref->shape, std::vector<float>(ref->data.size())};
    for (std::size_t j = 0; j < avg.data.size(); ++j) {
      for (std::size_t k = 0; k < members.size(); ++k) column[k] = members[k]->data[j];
      avg.data[j] = ckpt::ElementMean(column);
    }
    out.tensors.push_back(std::move(avg));
  }
  return out;
}

std::string SynthesizedId(const std::string& run_id, int window, std::int64_t step) {
  return run_id + "-avg" + std::to_string(window) + "-" + std::to_string(step);
}

std::vector<CheckpointRef> RollingWeightAverage(const Trajectory& trajectory,
                                                int window,
                                                const ckpt::Store& in,
                                                const ckpt::Store& out) {
  const auto& refs = trajectory.checkpoints();
  RequireWindow(window, refs.size(), 0);
  const auto n = static_cast<std::size_t>(window);
  for (const auto& r : refs) {
    if (!in.Contains(r.id)) {
      throw Error(ErrorCode::kMissingCheckpointFiles,
                  "missing checkpoint " + in.PathFor(r.id).string());
    }
  }
  std::vector<CheckpointRef> synthesized;
  std::vector<std::filesystem::path> paths(n);
  for (std::size_t t = n - 1; t < refs.size(); ++t) {
    for (std::size_t k = 0; k < n; ++k) paths[k] = in.PathFor(refs[t + 1 - n + k].id);
    const std::string id = SynthesizedId(trajectory.run_id(), window, refs[t].step);
    ckpt::AverageFiles(paths, out.PathFor(id));
    synthesized.push_back({refs[t].step, id});
  }
  return synthesized;
}

std::vector<CheckpointRef> RollingWeightAverage(const Trajectory& trajectory, int window,
                                const ckpt::Store& store) {
  return RollingWeightAverage(trajectory, window, store, store);
}

std::string MajorityVote(std::span<const std::string> window_outputs,
                         TieRule tie_rule) {
  if (window_outputs.empty()) {
    throw Error(ErrorCode::kEmptyInput, "majority vote over an empty window");
  }
  std::vector<std::string> labels;
  std::map<std::string, std::size_t> counts;
  for (const auto& o : window_outputs) {
    labels.push_back(scoring::Normalize(o));
    ++counts[labels.back()];
  }
  std::size_t best = 0;
  for (const auto& [_, c] : counts) best = std::max(best, c);
  switch (tie_rule) {
    case TieRule::kMostRecent:
      for (auto it = labels.rbegin(); it != labels.rend(); ++it) {
        if (counts[*it] == best) return *it;
      }
  }
  return labels.back();
}

EvalRun StabilizedEvalRun(const EvalRun& run, const StabilizerConfig& config,
                          const CheckpointSource* source) {
  const int n = config.window;
  RequireWindow(n, run.trajectory().size(), 0);
  const RunMethod annotation{std::string(MethodName(config.method)), n};
  switch (config.method) {
    case Method::kScoreAverage:
      throw Error(ErrorCode::kInvalidArgument,
                  "score averaging yields series, not outcomes");
    case Method::kMajorityVote:
      return VoteRun(run, n);
    case Method::kWeightAverage: {
      if (n == 1) return Annotate(run, annotation);
      if (source == nullptr || source->store == nullptr || !source->reevaluate) {
        throw Error(ErrorCode::kMissingCheckpointFiles,
                    "weight averaging needs checkpoint files and a re-evaluator");
      }
      const ckpt::Store& out = source->output ? *source->output : *source->store;
      const Trajectory synthesized = Trajectory::Aligned(
          run.trajectory().run_id(),
          RollingWeightAverage(run.trajectory(), n, *source->store, out));
      return Annotate(source->reevaluate(synthesized), annotation);
    }
  }
  return run;
}

ScoreSeries StabilizedScoreSeries(const EvalRun& run, const std::string& task,
                                  int window) {
  return MovingAverageSeries(TaskScoreSeries(run, task), window);
}

}  // namespace ckstab::stabilize
