#pragma once

// Small builders shared by the unit tests.

#include <doctest.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <unistd.h>
#include <string>
#include <vector>

#include "ckstab/error.hpp"
#include "ckstab/trajectory.hpp"

namespace ckstab::testing {

inline ExampleOutcome Cell(std::int64_t step, const std::string& example,
                           const std::string& output, const std::string& gold,
                           const std::string& task = "t") {
  return {step, task, example, output, {gold}, gold};
}

// steps x examples grid of label-task outcomes; outputs[s][e], examples x0, x1, ...
inline std::vector<ExampleOutcome> Grid(const std::vector<std::int64_t>& steps,
                                        const std::vector<std::vector<std::string>>& outputs,
                                        const std::vector<std::string>& golds,
                                        const std::string& task = "t") {
  std::vector<ExampleOutcome> records;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    for (std::size_t e = 0; e < golds.size(); ++e) {
      records.push_back(Cell(steps[s], "x" + std::to_string(e), outputs[s][e], golds[e], task));
    }
  }
  return records;
}

inline ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ckstab-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace ckstab::testing
