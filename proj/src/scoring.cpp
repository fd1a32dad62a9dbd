#include "ckstab/scoring.hpp"

#include <algorithm>
#include <set>

#include "ckstab/error.hpp"

namespace ckstab::scoring {
namespace {

bool IsSpace(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

void RequireRefs(std::span<const std::string> refs) {
  if (refs.empty()) {
    throw Error(ErrorCode::kEmptyReferences, "at least one reference required");
  }
}

double F1FromCounts(double overlap, double pred_len, double ref_len) {
  if (pred_len == 0 && ref_len == 0) return 1.0;
  if (overlap == 0) return 0.0;
  const double precision = overlap / pred_len;
  const double recall = overlap / ref_len;
  return 2.0 * precision * recall / (precision + recall);
}

double CharF1Single(const std::u32string& pred, std::string_view ref) {
  const std::vector<char32_t> r = DecodeUtf8(Normalize(ref));
  const std::u32string_view rv(r.data(), r.size());
  return F1FromCounts(static_cast<double>(LcsLength(pred, rv)),
                      static_cast<double>(pred.size()),
                      static_cast<double>(r.size()));
}

std::set<std::string> ItemSet(std::string_view text) {
  std::set<std::string> items;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string item = Normalize(text.substr(start, end - start));
    if (!item.empty()) items.insert(std::move(item));
    start = end + 1;
  }
  return items;
}

double SetF1Single(const std::set<std::string>& pred, std::string_view ref) {
  const std::set<std::string> r = ItemSet(ref);
  std::size_t overlap = 0;
  for (const auto& item : pred) overlap += r.count(item);
  return F1FromCounts(static_cast<double>(overlap),
                      static_cast<double>(pred.size()),
                      static_cast<double>(r.size()));
}

}  // namespace

std::string_view KindName(ScoreFnKind kind) {
  switch (kind) {
    case ScoreFnKind::kExactMatch: return "exact_match";
    case ScoreFnKind::kCharF1: return "char_f1";
    case ScoreFnKind::kSetF1: return "set_f1";
  }
  return "exact_match";
}

std::optional<ScoreFnKind> ParseKind(std::string_view name) {
  if (name == "exact_match") return ScoreFnKind::kExactMatch;
  if (name == "char_f1") return ScoreFnKind::kCharF1;
  if (name == "set_f1") return ScoreFnKind::kSetF1;
  return std::nullopt;
}

std::string Normalize(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && IsSpace(text[begin])) ++begin;
  while (end > begin && IsSpace(text[end - 1])) --end;
  return std::string(text.substr(begin, end - begin));
}

std::vector<char32_t> DecodeUtf8(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = s[i];
    std::size_t len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if (c < 0x80) {
      len = 1; cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2; cp = c & 0x1F; min = 0x80;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3; cp = c & 0x0F; min = 0x800;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4; cp = c & 0x07; min = 0x10000;
    }
    bool ok = len > 0 && i + len <= n;
    for (std::size_t k = 1; ok && k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) ok = false;
      else cp = (cp << 6) | (s[i + k] & 0x3F);
    }
    if (ok && len > 1 &&
        (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) {
      ok = false;
    }
    if (!ok) {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::size_t LcsLength(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  // Two-row DP over the shorter string.
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::size_t LcsLength(std::string_view a, std::string_view b) {
  const auto da = DecodeUtf8(a);
  const auto db = DecodeUtf8(b);
  return LcsLength(std::u32string_view(da.data(), da.size()),
                   std::u32string_view(db.data(), db.size()));
}

double ExactMatch(std::string_view pred, std::span<const std::string> refs) {
  RequireRefs(refs);
  const std::string p = Normalize(pred);
  for (const auto& r : refs) {
    if (Normalize(r) == p) return 1.0;
  }
  return 0.0;
}

double CharF1(std::string_view pred, std::span<const std::string> refs) {
  RequireRefs(refs);
  const std::vector<char32_t> decoded = DecodeUtf8(Normalize(pred));
  const std::u32string p(decoded.begin(), decoded.end());
  double best = 0.0;
  for (const auto& r : refs) best = std::max(best, CharF1Single(p, r));
  return best;
}

double SetF1(std::string_view pred, std::span<const std::string> refs) {
  RequireRefs(refs);
  const std::set<std::string> p = ItemSet(pred);
  double best = 0.0;
  for (const auto& r : refs) best = std::max(best, SetF1Single(p, r));
  return best;
}

double Score(ScoreFnKind kind, std::string_view pred,
             std::span<const std::string> refs) {
  switch (kind) {
    case ScoreFnKind::kExactMatch: return ExactMatch(pred, refs);
    case ScoreFnKind::kCharF1: return CharF1(pred, refs);
    case ScoreFnKind::kSetF1: return SetF1(pred, refs);
  }
  return 0.0;
}

double Similarity(ScoreFnKind kind, std::string_view a, std::string_view b) {
  const std::string ref(b);
  return Score(kind, a, std::span<const std::string>(&ref, 1));
}

}  // namespace ckstab::scoring
