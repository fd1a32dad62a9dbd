#pragma once

#include <cstdint>
#include <vector>

namespace ckstab {

// Per-checkpoint scalar scores, aligned to the trajectory's steps.
struct ScoreSeries {
  std::vector<std::int64_t> steps;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const ScoreSeries&) const = default;
};

}  // namespace ckstab
