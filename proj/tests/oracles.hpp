#pragma once

// Independent reference computations used only by the tests.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ckstab::testing {

inline bool IsSubsequence(const std::u32string& needle, const std::u32string& hay) {
  std::size_t j = 0;
  for (char32_t c : hay) {
    if (j < needle.size() && needle[j] == c) ++j;
  }
  return j == needle.size();
}

// Longest common subsequence by enumerating every subsequence of the
// shorter string. Exponential; keep inputs short.
inline std::size_t BruteForceLcs(const std::u32string& a, const std::u32string& b) {
  const std::u32string& s = a.size() <= b.size() ? a : b;
  const std::u32string& t = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  const std::uint32_t limit = 1u << s.size();
  for (std::uint32_t mask = 0; mask < limit; ++mask) {
    std::u32string sub;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (mask & (1u << i)) sub.push_back(s[i]);
    }
    if (sub.size() > best && IsSubsequence(sub, t)) best = sub.size();
  }
  return best;
}

inline double OracleCharF1(const std::u32string& pred, const std::u32string& ref) {
  if (pred.empty() && ref.empty()) return 1.0;
  const double lcs = static_cast<double>(BruteForceLcs(pred, ref));
  if (lcs == 0) return 0.0;
  const double p = lcs / static_cast<double>(pred.size());
  const double r = lcs / static_cast<double>(ref.size());
  return 2 * p * r / (p + r);
}

// Plain left-to-right total variation.
inline double OracleTv(const std::vector<double>& v) {
  double tv = 0;
  for (std::size_t i = 1; i < v.size(); ++i) tv += v[i] > v[i - 1] ? v[i] - v[i - 1] : v[i - 1] - v[i];
  return tv;
}

// Small deterministic generator for test data (xorshift64*).
class TestRng {
 public:
  explicit TestRng(std::uint64_t seed) : s_(seed ? seed : 1) {}
  std::uint64_t Next() {
    s_ ^= s_ >> 12;
    s_ ^= s_ << 25;
    s_ ^= s_ >> 27;
    return s_ * 2685821657736338717ULL;
  }
  double Uniform() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }
  std::size_t Below(std::size_t n) { return static_cast<std::size_t>(Next() % n); }

 private:
  std::uint64_t s_;
};

}  // namespace ckstab::testing
