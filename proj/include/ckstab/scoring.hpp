#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ckstab::scoring {

enum class ScoreFnKind { kExactMatch, kCharF1, kSetF1 };

std::string_view KindName(ScoreFnKind kind);
// Accepts "exact_match", "char_f1", "set_f1".
std::optional<ScoreFnKind> ParseKind(std::string_view name);

// Strips leading and trailing ASCII whitespace.
std::string Normalize(std::string_view text);

// Decodes UTF-8 into Unicode scalar values. Malformed bytes decode to
// U+FFFD one byte at a time.
std::vector<char32_t> DecodeUtf8(std::string_view text);

std::size_t LcsLength(std::u32string_view a, std::u32string_view b);
std::size_t LcsLength(std::string_view a, std::string_view b);

// Reference-based scorers. Each normalizes its inputs, scores the
// prediction against every reference and returns the best score.
// Throw Error(kEmptyReferences) when refs is empty.
double ExactMatch(std::string_view pred, std::span<const std::string> refs);
double CharF1(std::string_view pred, std::span<const std::string> refs);
double SetF1(std::string_view pred, std::span<const std::string> refs);

double Score(ScoreFnKind kind, std::string_view pred,
             std::span<const std::string> refs);

// Score of `a` against the single reference `b`. Symmetric for every kind.
double Similarity(ScoreFnKind kind, std::string_view a, std::string_view b);

}  // namespace ckstab::scoring
