// ckstab: measure and reduce checkpoint-to-checkpoint instability of
// evaluation results.
//
// Exit codes: 0 ok, 2 usage or malformed input, 3 missing checkpoints,
// 4 training divergence, 5 total-variation contraction violated.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ckstab/ckpt_store.hpp"
#include "ckstab/error.hpp"
#include "ckstab/metrics.hpp"
#include "ckstab/report.hpp"
#include "ckstab/stabilize.hpp"
#include "ckstab/sweep.hpp"
#include "ckstab/toytrain.hpp"
#include "ckstab/trajectory.hpp"

namespace fs = std::filesystem;
using namespace ckstab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitMissing = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitViolation = 5;

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingCheckpointFiles: return kExitMissing;
    case ErrorCode::kDivergedTraining: return kExitDiverged;
    default: return kExitUsage;
  }
}

// Command-line overrides merge onto what the run file declares.
EvalRun LoadRun(const std::string& path, const std::vector<std::string>& scorers,
                const std::vector<std::string>& label_tasks) {
  IngestStats stats;
  EvalRun run = LoadEvalRun(path, {}, &stats);
  if (stats.dropped_initial > 0) {
    std::cerr << "note: dropped " << stats.dropped_initial
              << " step-0 records (initial checkpoint)\n";
  }
  if (scorers.empty() && label_tasks.empty()) return run;

  TaskKinds kinds;
  for (const auto& task : run.TaskNames()) kinds[task] = run.Info(task);
  for (const auto& spec : scorers) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "--scorer expects task=kind, got '" + spec + "'");
    }
    const std::string task = spec.substr(0, eq);
    const auto kind = scoring::ParseKind(spec.substr(eq + 1));
    if (!kind) throw Error(ErrorCode::kInvalidArgument, "unknown scorer in '" + spec + "'");
    if (!run.HasTask(task)) throw Error(ErrorCode::kUnknownTask, "task '" + task + "' not in run");
    kinds[task].kind = *kind;
  }
  for (const auto& task : label_tasks) {
    if (!run.HasTask(task)) throw Error(ErrorCode::kUnknownTask, "task '" + task + "' not in run");
    kinds[task].label_task = true;
  }
  return IngestEvalRun(run.Outcomes(), run.trajectory(), kinds, run.method());
}

std::ofstream OpenOut(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

fs::path WithSuffix(const fs::path& prefix, const std::string& suffix) {
  return fs::path(prefix.string() + suffix);
}

void WriteAnalysisFiles(const report::Analysis& a, const fs::path& prefix) {
  report::SaveAnalysis(a, WithSuffix(prefix, ".json"));
  auto csv = OpenOut(WithSuffix(prefix, ".csv"));
  report::WriteAnalysisCsv(a, csv);
  auto txt = OpenOut(WithSuffix(prefix, ".txt"));
  report::WriteAnalysisText(a, txt);
}

void WriteReportFiles(const std::vector<report::Analysis>& analyses, const fs::path& prefix) {
  const report::ReportTable table = report::BuildReport(analyses);
  auto csv = OpenOut(WithSuffix(prefix, ".csv"));
  report::WriteReportCsv(table, csv);
  auto txt = OpenOut(WithSuffix(prefix, ".txt"));
  report::WriteReportText(table, txt);
  auto trend = OpenOut(WithSuffix(prefix, "_trend.csv"));
  report::WriteWindowTrendCsv(table, trend);
  auto series = OpenOut(WithSuffix(prefix, "_series.csv"));
  report::WritePlotSeriesCsv(analyses, series);
  report::WriteReportText(table, std::cout);
}

// ---- toy-train -------------------------------------------------------------

struct ToyTrainArgs {
  std::string config;
  std::string out;
};

int CmdToyTrain(const ToyTrainArgs& args) {
  const toy::ToyConfig cfg = toy::LoadToyConfig(args.config);
  const fs::path out(args.out);
  const toy::Dataset data = toy::GenTask(cfg.task);
  const ckpt::Store store(out / "ckpt");
  const toy::TrainResult result = toy::Train(data, cfg.train, store);
  const EvalRun run = toy::EvaluateToEvalRun(result.trajectory, data, store);
  SaveEvalRun(run, (out / "eval_run.jsonl").string());

  const ScoreSeries acc = TaskScoreSeries(run, toy::kToyTaskName);
  const auto& refs = result.trajectory.checkpoints();
  std::cout << "run " << cfg.train.run_id << ": " << refs.size() << " checkpoints (steps "
            << refs.front().step << ".." << refs.back().step << ", step 0 excluded)\n"
            << "interval loss " << result.interval_losses.front() << " -> "
            << result.interval_losses.back() << "\n"
            << "eval accuracy " << acc.values.front() << " -> " << acc.values.back() << "\n"
            << "wrote " << (out / "ckpt").string() << " and "
            << (out / "eval_run.jsonl").string() << "\n";
  return kExitOk;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string config;
  std::string ckpt_dir;
  std::string out;
};

int CmdEvaluate(const EvaluateArgs& args) {
  const toy::ToyConfig cfg = toy::LoadToyConfig(args.config);
  if (!fs::is_directory(args.ckpt_dir)) {
    throw Error(ErrorCode::kMissingCheckpointFiles, "no checkpoint directory " + args.ckpt_dir);
  }
  const ckpt::Store store(args.ckpt_dir);
  const EvalRun run =
      toy::EvaluateToEvalRun(store.Scan(), toy::GenTask(cfg.task), store);
  SaveEvalRun(run, args.out);
  std::cout << "evaluated " << run.trajectory().size() << " checkpoints -> " << args.out << "\n";
  return kExitOk;
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string run_file;
  double fraction = 0.2;
  std::vector<std::string> scorers;
  std::string out;
};

int CmdAnalyze(const AnalyzeArgs& args) {
  const EvalRun run = LoadRun(args.run_file, args.scorers, {});
  const report::Analysis a = report::Analyze(run, args.fraction);
  WriteAnalysisFiles(a, args.out);
  report::WriteAnalysisText(a, std::cout);
  return kExitOk;
}

// ---- stabilize -------------------------------------------------------------

struct StabilizeArgs {
  std::string run_file;
  std::string ckpt_dir;
  std::string method;
  int window = 1;
  std::string out;
  std::string config;
  std::vector<std::string> scorers;
  std::vector<std::string> label_tasks;
};

int CmdStabilize(const StabilizeArgs& args) {
  const auto method = stabilize::ParseMethod(args.method);
  if (!method) {
    throw Error(ErrorCode::kInvalidArgument, "--method must be vote, avg or score");
  }
  switch (*method) {
    case stabilize::Method::kMajorityVote: {
      if (args.run_file.empty()) throw Error(ErrorCode::kInvalidArgument, "vote needs --run");
      const EvalRun run = LoadRun(args.run_file, args.scorers, args.label_tasks);
      const EvalRun voted = stabilize::StabilizedEvalRun(run, {*method, args.window});
      if (fs::path(args.out).has_parent_path()) {
        fs::create_directories(fs::path(args.out).parent_path());
      }
      SaveEvalRun(voted, args.out);
      std::cout << "vote window " << args.window << ": " << voted.trajectory().size()
                << " checkpoints -> " << args.out << "\n";
      return kExitOk;
    }
    case stabilize::Method::kScoreAverage: {
      if (args.run_file.empty()) throw Error(ErrorCode::kInvalidArgument, "score needs --run");
      const EvalRun run = LoadRun(args.run_file, args.scorers, args.label_tasks);
      std::map<std::string, ScoreSeries> series;
      for (const auto& task : run.TaskNames()) {
        series[task] = stabilize::StabilizedScoreSeries(run, task, args.window);
      }
      auto out = OpenOut(args.out);
      report::WriteSeriesCsv(series, out);
      std::cout << "score average window " << args.window << " -> " << args.out << "\n";
      return kExitOk;
    }
    case stabilize::Method::kWeightAverage: {
      if (args.ckpt_dir.empty()) throw Error(ErrorCode::kInvalidArgument, "avg needs --ckpt-dir");
      if (!fs::is_directory(args.ckpt_dir)) {
        throw Error(ErrorCode::kMissingCheckpointFiles, "no checkpoint directory " + args.ckpt_dir);
      }
      const ckpt::Store in(args.ckpt_dir);
      const ckpt::Store out(args.out);
      const Trajectory trajectory = in.Scan();
      const auto refs = stabilize::RollingWeightAverage(trajectory, args.window, in, out);
      std::cout << "avg window " << args.window << ": " << refs.size()
                << " synthesized checkpoints -> " << args.out << "\n";
      if (!args.config.empty()) {
        const toy::ToyConfig cfg = toy::LoadToyConfig(args.config);
        const EvalRun reevaluated = toy::EvaluateToEvalRun(
            Trajectory::Aligned(trajectory.run_id(), refs), toy::GenTask(cfg.task), out);
        TaskKinds kinds;
        for (const auto& t : reevaluated.TaskNames()) kinds[t] = reevaluated.Info(t);
        const EvalRun annotated =
            IngestEvalRun(reevaluated.Outcomes(), reevaluated.trajectory(), kinds,
                          {std::string(stabilize::MethodName(*method)), args.window});
        const fs::path run_path = fs::path(args.out) / "eval_run.jsonl";
        SaveEvalRun(annotated, run_path.string());
        std::cout << "re-evaluated -> " << run_path.string() << "\n";
      }
      return kExitOk;
    }
  }
  return kExitUsage;
}

// ---- report ----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int CmdReport(const ReportArgs& args) {
  std::vector<report::Analysis> analyses;
  for (const auto& path : args.inputs) analyses.push_back(report::LoadAnalysis(path));
  WriteReportFiles(analyses, args.out);
  return kExitOk;
}

// ---- verify-theory ---------------------------------------------------------

struct VerifyArgs {
  std::string run_file;
  std::string series_file;
  int window = 2;
};

int CmdVerifyTheory(const VerifyArgs& args) {
  // (label, series) pairs to check.
  std::vector<std::pair<std::string, ScoreSeries>> checks;
  if (!args.run_file.empty()) {
    const EvalRun run = LoadRun(args.run_file, {}, {});
    for (const auto& task : run.TaskNames()) {
      checks.emplace_back("task " + task, TaskScoreSeries(run, task));
      const auto kind = run.Info(task).kind;
      for (const auto& id : run.Task(task).example_ids) {
        checks.emplace_back("example " + task + "/" + id,
                            ExampleScoreSeries(run, task, id, kind));
      }
    }
  } else if (!args.series_file.empty()) {
    std::ifstream in(args.series_file);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + args.series_file);
    for (auto& [task, s] : report::ReadSeriesCsv(in)) checks.emplace_back("task " + task, s);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "give --run or --series");
  }

  std::size_t violations = 0;
  for (const auto& [label, s] : checks) {
    const auto r = stabilize::VerifyTvContraction(s, args.window);
    if (!r.holds) {
      ++violations;
      std::cout << "FAIL " << label << ": tv_raw " << r.tv_raw << " < tv_avg " << r.tv_avg << "\n";
    } else if (label.rfind("task ", 0) == 0) {
      std::cout << "pass " << label << ": tv_raw " << r.tv_raw << ", tv_avg " << r.tv_avg << "\n";
    }
  }
  std::cout << (violations == 0 ? "PASS" : "FAIL") << ": " << checks.size() - violations
            << "/" << checks.size() << " series contract under window " << args.window << "\n";
  return violations == 0 ? kExitOk : kExitViolation;
}

// ---- sweep -----------------------------------------------------------------

struct SweepArgs {
  std::string config;
  int seeds = 1;
  std::vector<int> windows{stabilize::kPresetWindows.begin(), stabilize::kPresetWindows.end()};
  double fraction = 0.2;
  std::string out;
};

int CmdSweep(const SweepArgs& args) {
  const toy::ToyConfig base = toy::LoadToyConfig(args.config);
  const fs::path out(args.out);
  sweep::SweepOptions options{args.windows, args.fraction};
  for (int s = 0; s < args.seeds; ++s) {
    const fs::path dir = out / ("seed" + std::to_string(s));
    const auto result = sweep::RunSeedSweep(sweep::SeedVariant(base, s), options, dir);
    SaveEvalRun(result.baseline, (dir / "eval_run.jsonl").string());
    for (const auto& run : result.stabilized) {
      SaveEvalRun(run, (dir / (run.method().method + std::to_string(run.method().window) +
                               "_run.jsonl"))
                           .string());
    }
    for (const auto& a : result.analyses) {
      WriteAnalysisFiles(a, dir / ("analysis_" + a.method + std::to_string(a.window)));
    }
    WriteReportFiles(result.analyses, dir / "report");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Checkpoint-sequence instability metrics and stabilizers"};
  app.require_subcommand(1);

  ToyTrainArgs toy_args;
  auto* toy_cmd = app.add_subcommand("toy-train", "Train the toy classifier and evaluate every checkpoint");
  toy_cmd->add_option("config", toy_args.config, "YAML config file")->required()->check(CLI::ExistingFile);
  toy_cmd->add_option("--out", toy_args.out, "Output directory")->required();

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate toy checkpoints into an eval-run file");
  eval_cmd->add_option("--config", eval_args.config, "Toy config (regenerates the task)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--ckpt-dir", eval_args.ckpt_dir, "Checkpoint directory")->required();
  eval_cmd->add_option("--out", eval_args.out, "Eval-run file to write")->required();

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "Per-task mean, std, MTV and IS over the final checkpoints");
  analyze_cmd->add_option("run_file", analyze_args.run_file, "Eval-run file")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--fraction", analyze_args.fraction, "Final fraction of checkpoints")->check(CLI::Range(1e-9, 1.0));
  analyze_cmd->add_option("--scorer", analyze_args.scorers, "task=exact_match|char_f1|set_f1");
  analyze_cmd->add_option("--out", analyze_args.out, "Output prefix (.json/.csv/.txt)")->required();

  StabilizeArgs stab_args;
  auto* stab_cmd = app.add_subcommand("stabilize", "Apply a stabilizer to a run or checkpoint directory");
  auto* run_opt = stab_cmd->add_option("--run", stab_args.run_file, "Eval-run file (vote, score)")->check(CLI::ExistingFile);
  auto* dir_opt = stab_cmd->add_option("--ckpt-dir", stab_args.ckpt_dir, "Checkpoint directory (avg)");
  run_opt->excludes(dir_opt);
  stab_cmd->add_option("--method", stab_args.method, "vote | avg | score")->required();
  stab_cmd->add_option("--window", stab_args.window, "Window size n")->required()->check(CLI::PositiveNumber);
  stab_cmd->add_option("--out", stab_args.out, "Output file (vote, score) or directory (avg)")->required();
  stab_cmd->add_option("--config", stab_args.config, "Toy config; with avg, re-evaluates the synthesized checkpoints")->check(CLI::ExistingFile);
  stab_cmd->add_option("--scorer", stab_args.scorers, "task=exact_match|char_f1|set_f1");
  stab_cmd->add_option("--label-task", stab_args.label_tasks, "Mark a task as a label task");

  ReportArgs report_args;
  auto* report_cmd = app.add_subcommand("report", "Combine analyses into a method x window table");
  report_cmd->add_option("analyses", report_args.inputs, "Analysis .json files")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report_args.out, "Output prefix")->required();

  VerifyArgs verify_args;
  auto* verify_cmd = app.add_subcommand("verify-theory", "Check total-variation contraction of moving averages");
  auto* vrun = verify_cmd->add_option("--run", verify_args.run_file, "Eval-run file")->check(CLI::ExistingFile);
  auto* vseries = verify_cmd->add_option("--series", verify_args.series_file, "Series CSV (task,step,value)")->check(CLI::ExistingFile);
  vrun->excludes(vseries);
  verify_cmd->add_option("--window", verify_args.window, "Window size n")->required()->check(CLI::PositiveNumber);

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train over several seeds and stabilize with every window");
  sweep_cmd->add_option("config", sweep_args.config, "YAML config file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--seeds", sweep_args.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--windows", sweep_args.windows, "Window sizes")->delimiter(',');
  sweep_cmd->add_option("--fraction", sweep_args.fraction, "Final fraction of checkpoints")->check(CLI::Range(1e-9, 1.0));
  sweep_cmd->add_option("--out", sweep_args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*toy_cmd) return CmdToyTrain(toy_args);
    if (*eval_cmd) return CmdEvaluate(eval_args);
    if (*analyze_cmd) return CmdAnalyze(analyze_args);
    if (*stab_cmd) return CmdStabilize(stab_args);
    if (*report_cmd) return CmdReport(report_args);
    if (*verify_cmd) return CmdVerifyTheory(verify_args);
    if (*sweep_cmd) return CmdSweep(sweep_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
