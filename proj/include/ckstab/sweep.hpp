#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ckstab/report.hpp"
#include "ckstab/stabilize.hpp"
#include "ckstab/toytrain.hpp"

namespace ckstab::sweep {

struct SweepOptions {
  std::vector<int> windows{stabilize::kPresetWindows.begin(),
                           stabilize::kPresetWindows.end()};
  double fraction = 0.2;
};

// Everything produced for one seed. Analyses hold the baseline first, then
// weight averaging and majority vote for every window, in window order.
struct SeedSweep {
  toy::ToyConfig config;
  EvalRun baseline;
  std::vector<EvalRun> stabilized;
  std::vector<report::Analysis> analyses;
};

// Copy of `base` with task and train seeds offset by `index` and the run id
// suffixed with "-s<index>".
toy::ToyConfig SeedVariant(const toy::ToyConfig& base, int index);

// Trains into <workdir>/ckpt, writes synthesized checkpoints into
// <workdir>/avg<n>, and analyses every stabilized run.
SeedSweep RunSeedSweep(const toy::ToyConfig& config, const SweepOptions& options,
                       const std::filesystem::path& workdir);

}  // namespace ckstab::sweep
