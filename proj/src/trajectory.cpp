#include "ckstab/trajectory.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>

#include <json.hpp>

#include "ckstab/error.hpp"

namespace ckstab {

using nlohmann::json;

Trajectory::Trajectory(std::string run_id,
                       std::vector<CheckpointRef> checkpoints,
                       std::size_t min_checkpoints)
    : run_id_(std::move(run_id)) {
  for (auto& c : checkpoints) {
    if (c.step < 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "negative checkpoint step " + std::to_string(c.step));
    }
    if (c.step == 0) continue;
    if (c.id.empty()) c.id = std::to_string(c.step);
    if (!checkpoints_.empty() && c.step <= checkpoints_.back().step) {
      throw Error(ErrorCode::kInvalidArgument,
                  "checkpoint steps must be strictly increasing (step " +
                      std::to_string(c.step) + ")");
    }
    checkpoints_.push_back(std::move(c));
  }
  if (checkpoints_.size() < std::max<std::size_t>(min_checkpoints, 1)) {
    throw Error(ErrorCode::kSeriesTooShort,
                "trajectory '" + run_id_ + "' needs at least " +
                    std::to_string(min_checkpoints) + " checkpoints");
  }
}

Trajectory Trajectory::Aligned(std::string run_id,
                               std::vector<CheckpointRef> checkpoints) {
  return Trajectory(std::move(run_id), std::move(checkpoints), 1);
}

Trajectory Trajectory::FromSteps(std::string run_id,
                                 const std::vector<std::int64_t>& steps) {
  std::vector<CheckpointRef> refs;
  refs.reserve(steps.size());
  for (auto s : steps) refs.push_back({s, std::to_string(s)});
  return Trajectory(std::move(run_id), std::move(refs));
}

std::vector<std::int64_t> Trajectory::steps() const {
  std::vector<std::int64_t> out;
  out.reserve(checkpoints_.size());
  for (const auto& c : checkpoints_) out.push_back(c.step);
  return out;
}

std::optional<std::size_t> Trajectory::IndexOf(std::int64_t step) const {
  auto it = std::lower_bound(
      checkpoints_.begin(), checkpoints_.end(), step,
      [](const CheckpointRef& c, std::int64_t s) { return c.step < s; });
  if (it == checkpoints_.end() || it->step != step) return std::nullopt;
  return static_cast<std::size_t>(it - checkpoints_.begin());
}

// ---------------------------------------------------------------------------

std::vector<std::string> EvalRun::TaskNames() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : tasks_) names.push_back(name);
  return names;
}

bool EvalRun::HasTask(const std::string& task) const {
  return tasks_.count(task) != 0;
}

const EvalRun::TaskTable& EvalRun::Task(const std::string& task) const {
  auto it = tasks_.find(task);
  if (it == tasks_.end()) {
    throw Error(ErrorCode::kUnknownTask, "task '" + task + "' not in run");
  }
  return it->second;
}

const std::vector<ExampleOutcome>& EvalRun::ExampleCells(
    const std::string& task, const std::string& example_id) const {
  const TaskTable& t = Task(task);
  auto it = std::lower_bound(t.example_ids.begin(), t.example_ids.end(),
                             example_id);
  if (it == t.example_ids.end() || *it != example_id) {
    throw Error(ErrorCode::kUnknownExample,
                "example '" + example_id + "' not in task '" + task + "'");
  }
  return t.cells[static_cast<std::size_t>(it - t.example_ids.begin())];
}

std::size_t EvalRun::OutcomeCount() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tasks_) n += t.example_ids.size();
  return n * trajectory_.size();
}

std::vector<ExampleOutcome> EvalRun::Outcomes() const {
  std::vector<ExampleOutcome> out;
  out.reserve(OutcomeCount());
  for (std::size_t s = 0; s < trajectory_.size(); ++s) {
    for (const auto& [_, t] : tasks_) {
      for (const auto& cells : t.cells) out.push_back(cells[s]);
    }
  }
  return out;
}

class EvalRunBuilder {
 public:
  static EvalRun Build(std::vector<ExampleOutcome> records,
                       const Trajectory& trajectory, const TaskKinds& kinds,
                       RunMethod method, IngestStats* stats) {
    IngestStats local;
    std::erase_if(records, [&](const ExampleOutcome& r) {
      if (r.step != 0) return false;
      ++local.dropped_initial;
      return true;
    });
    if (stats) *stats = local;
    if (records.empty()) {
      throw Error(ErrorCode::kEmptyRun, "no outcomes after dropping step 0");
    }
    auto key = [](const ExampleOutcome& r) {
      return std::tie(r.task, r.example_id, r.step);
    };
    std::sort(records.begin(), records.end(),
              [&](const ExampleOutcome& a, const ExampleOutcome& b) {
                return key(a) < key(b);
              });

    EvalRun run;
    run.trajectory_ = trajectory;
    run.method_ = std::move(method);
    const std::size_t m = trajectory.size();

    std::size_t i = 0;
    while (i < records.size()) {
      const std::string task = records[i].task;
      const std::string example = records[i].example_id;
      std::vector<ExampleOutcome> row;
      for (; i < records.size() && records[i].task == task &&
             records[i].example_id == example;
           ++i) {
        ExampleOutcome& r = records[i];
        if (!row.empty() && row.back().step == r.step) {
          throw Error(ErrorCode::kDuplicateOutcome,
                      "duplicate outcome for (step " + std::to_string(r.step) +
                          ", task '" + task + "', example '" + example + "')");
        }
        const auto idx = trajectory.IndexOf(r.step);
        if (!idx) {
          throw Error(ErrorCode::kMisalignedRun,
                      "task '" + task + "', example '" + example +
                          "': step " + std::to_string(r.step) +
                          " is not in the trajectory");
        }
        if (*idx != row.size()) {
          throw Error(ErrorCode::kMisalignedRun,
                      "task '" + task + "', example '" + example +
                          "': missing cell at step " +
                          std::to_string(trajectory.checkpoints()[row.size()].step));
        }
        if (r.references.empty()) {
          throw Error(ErrorCode::kEmptyReferences,
                      "task '" + task + "', example '" + example +
                          "' has no references");
        }
        row.push_back(std::move(r));
      }
      if (row.size() != m) {
        throw Error(ErrorCode::kMisalignedRun,
                    "task '" + task + "', example '" + example + "': has " +
                        std::to_string(row.size()) + " of " +
                        std::to_string(m) + " checkpoints");
      }
      EvalRun::TaskTable& table = run.tasks_[task];
      table.example_ids.push_back(example);
      table.cells.push_back(std::move(row));
    }

    for (auto& [name, table] : run.tasks_) {
      auto it = kinds.find(name);
      if (it != kinds.end()) {
        table.info = it->second;
        continue;
      }
      bool all_gold = true;
      for (const auto& row : table.cells) {
        for (const auto& c : row) all_gold = all_gold && c.gold_label.has_value();
      }
      table.info = TaskInfo{scoring::ScoreFnKind::kExactMatch, all_gold};
    }
    return run;
  }
};

EvalRun IngestEvalRun(std::vector<ExampleOutcome> records,
                      const Trajectory& trajectory, const TaskKinds& kinds,
                      RunMethod method, IngestStats* stats) {
  return EvalRunBuilder::Build(std::move(records), trajectory, kinds,
                               std::move(method), stats);
}

EvalRun IngestEvalRun(std::vector<ExampleOutcome> records,
                      const std::string& run_id, const TaskKinds& kinds,
                      RunMethod method, IngestStats* stats) {
  std::set<std::int64_t> steps;
  for (const auto& r : records) {
    if (r.step != 0) steps.insert(r.step);
  }
  if (steps.empty()) {
    throw Error(ErrorCode::kEmptyRun, "no outcomes after dropping step 0");
  }
  std::vector<CheckpointRef> refs;
  for (auto s : steps) refs.push_back({s, std::to_string(s)});
  const std::size_t min_checkpoints = method.method == "none" ? 2 : 1;
  return IngestEvalRun(std::move(records),
                       Trajectory(run_id, std::move(refs), min_checkpoints),
                       kinds, std::move(method), stats);
}

ScoreSeries TaskScoreSeries(const EvalRun& run, const std::string& task,
                            scoring::ScoreFnKind scorer) {
  const auto& table = run.Task(task);
  ScoreSeries s;
  s.steps = run.trajectory().steps();
  s.values.assign(s.steps.size(), 0.0);
  for (const auto& row : table.cells) {
    for (std::size_t t = 0; t < row.size(); ++t) {
      s.values[t] += scoring::Score(scorer, row[t].output, row[t].references);
    }
  }
  const double n = static_cast<double>(table.cells.size());
  for (auto& v : s.values) v /= n;
  return s;
}

ScoreSeries TaskScoreSeries(const EvalRun& run, const std::string& task) {
  return TaskScoreSeries(run, task, run.Info(task).kind);
}

ScoreSeries ExampleScoreSeries(const EvalRun& run, const std::string& task,
                               const std::string& example_id,
                               scoring::ScoreFnKind scorer) {
  const auto& row = run.ExampleCells(task, example_id);
  ScoreSeries s;
  s.steps = run.trajectory().steps();
  for (const auto& c : row) {
    s.values.push_back(scoring::Score(scorer, c.output, c.references));
  }
  return s;
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void ParseFail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kParseError,
              "line " + std::to_string(line) + ": " + what);
}

template <typename T>
T Field(const json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) ParseFail(line, std::string("missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    ParseFail(line, std::string("field '") + name + "' has the wrong type");
  }
}

}  // namespace

EvalRun ReadEvalRun(std::istream& in, const TaskKinds& overrides,
                    IngestStats* stats) {
  std::vector<ExampleOutcome> records;
  std::map<std::int64_t, std::string> ids;
  TaskKinds kinds;
  std::optional<std::string> run_id;
  std::optional<RunMethod> method;

  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      ParseFail(line, std::string("malformed record: ") + e.what());
    }
    if (!obj.is_object()) ParseFail(line, "record is not an object");

    ExampleOutcome r;
    r.step = Field<std::int64_t>(obj, "step", line);
    if (r.step < 0) ParseFail(line, "negative step");
    r.task = Field<std::string>(obj, "task", line);
    r.example_id = Field<std::string>(obj, "example_id", line);
    r.output = Field<std::string>(obj, "output", line);
    r.references = Field<std::vector<std::string>>(obj, "references", line);
    if (r.references.empty()) ParseFail(line, "empty references");
    auto gold = obj.find("gold_label");
    if (gold != obj.end() && !gold->is_null()) {
      if (!gold->is_string()) ParseFail(line, "gold_label must be a string or null");
      r.gold_label = gold->get<std::string>();
    }

    if (auto it = obj.find("run_id"); it != obj.end()) {
      const auto rid = Field<std::string>(obj, "run_id", line);
      if (run_id && *run_id != rid) ParseFail(line, "mixed run_id values");
      run_id = rid;
    }
    if (auto it = obj.find("checkpoint_id"); it != obj.end() && r.step != 0) {
      const auto cid = Field<std::string>(obj, "checkpoint_id", line);
      auto [pos, inserted] = ids.emplace(r.step, cid);
      if (!inserted && pos->second != cid) {
        ParseFail(line, "conflicting checkpoint_id for step " +
                            std::to_string(r.step));
      }
    }
    if (obj.contains("scorer") || obj.contains("label_task")) {
      TaskInfo info;
      if (obj.contains("scorer")) {
        const auto name = Field<std::string>(obj, "scorer", line);
        auto kind = scoring::ParseKind(name);
        if (!kind) ParseFail(line, "unknown scorer '" + name + "'");
        info.kind = *kind;
      }
      if (obj.contains("label_task")) {
        info.label_task = Field<bool>(obj, "label_task", line);
      }
      auto [pos, inserted] = kinds.emplace(r.task, info);
      if (!inserted && !(pos->second == info)) {
        ParseFail(line, "conflicting scorer/label_task for task '" + r.task + "'");
      }
    }
    if (obj.contains("method")) {
      RunMethod m{Field<std::string>(obj, "method", line),
                  obj.contains("window") ? Field<int>(obj, "window", line) : 1};
      if (method && !(*method == m)) ParseFail(line, "mixed method annotations");
      method = m;
    }
    records.push_back(std::move(r));
  }

  for (const auto& [task, info] : overrides) kinds[task] = info;

  std::set<std::int64_t> steps;
  for (const auto& r : records) {
    if (r.step != 0) steps.insert(r.step);
  }
  if (steps.empty()) {
    throw Error(ErrorCode::kEmptyRun, "no outcomes after dropping step 0");
  }
  std::vector<CheckpointRef> refs;
  for (auto s : steps) {
    auto it = ids.find(s);
    refs.push_back({s, it != ids.end() ? it->second : std::to_string(s)});
  }
  const RunMethod run_method = method.value_or(RunMethod{});
  const std::size_t min_checkpoints = run_method.method == "none" ? 2 : 1;
  return IngestEvalRun(std::move(records),
                       Trajectory(run_id.value_or("run"), std::move(refs), min_checkpoints),
                       kinds, run_method, stats);
}

EvalRun LoadEvalRun(const std::string& path, const TaskKinds& overrides,
                    IngestStats* stats) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return ReadEvalRun(in, overrides, stats);
}

void WriteEvalRun(const EvalRun& run, std::ostream& out) {
  const Trajectory& traj = run.trajectory();
  for (std::size_t s = 0; s < traj.size(); ++s) {
    const CheckpointRef& ref = traj.checkpoints()[s];
    for (const auto& task : run.TaskNames()) {
      const auto& table = run.Task(task);
      for (const auto& row : table.cells) {
        const ExampleOutcome& c = row[s];
        json obj;
        obj["step"] = c.step;
        obj["task"] = c.task;
        obj["example_id"] = c.example_id;
        obj["output"] = c.output;
        obj["references"] = c.references;
        obj["gold_label"] = c.gold_label ? json(*c.gold_label) : json(nullptr);
        obj["run_id"] = traj.run_id();
        obj["scorer"] = std::string(scoring::KindName(table.info.kind));
        obj["label_task"] = table.info.label_task;
        if (ref.id != std::to_string(ref.step)) obj["checkpoint_id"] = ref.id;
        if (run.method().method != "none") {
          obj["method"] = run.method().method;
          obj["window"] = run.method().window;
        }
        out << obj.dump() << '\n';
      }
    }
  }
}

void SaveEvalRun(const EvalRun& run, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  WriteEvalRun(run, out);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

}  // namespace ckstab
