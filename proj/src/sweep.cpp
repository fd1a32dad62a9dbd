#include "ckstab/sweep.hpp"

namespace ckstab::sweep {

toy::ToyConfig SeedVariant(const toy::ToyConfig& base, int index) {
  toy::ToyConfig cfg = base;
  cfg.task.seed = base.task.seed + static_cast<std::uint64_t>(index);
  cfg.train.seed = base.train.seed + static_cast<std::uint64_t>(index);
  cfg.train.run_id = base.train.run_id + "-s" + std::to_string(index);
  return cfg;
}

SeedSweep RunSeedSweep(const toy::ToyConfig& config, const SweepOptions& options,
                       const std::filesystem::path& workdir) {
  namespace fs = std::filesystem;
  SeedSweep out;
  out.config = config;
  const toy::Dataset data = toy::GenTask(config.task);
  const ckpt::Store store(workdir / "ckpt");
  const auto trained = toy::Train(data, config.train, store);
  out.baseline = toy::EvaluateToEvalRun(trained.trajectory, data, store);
  out.analyses.push_back(report::Analyze(out.baseline, options.fraction));

  for (const auto method : {stabilize::Method::kWeightAverage, stabilize::Method::kMajorityVote}) {
    for (const int n : options.windows) {
      const ckpt::Store synthesized(workdir / ("avg" + std::to_string(n)));
      const stabilize::CheckpointSource source{
          &store, &synthesized,
          [&](const Trajectory& t) { return toy::EvaluateToEvalRun(t, data, synthesized); }};
      out.stabilized.push_back(
          stabilize::StabilizedEvalRun(out.baseline, {method, n}, &source));
      out.analyses.push_back(report::Analyze(out.stabilized.back(), options.fraction));
    }
  }
  return out;
}

}  // namespace ckstab::sweep
