#include <doctest.h>

#include <string>
#include <vector>

#include "ckstab/error.hpp"
#include "ckstab/scoring.hpp"
#include "oracles.hpp"

using namespace ckstab;
using namespace ckstab::scoring;
using Refs = std::vector<std::string>;

TEST_CASE("normalize strips only the edges") {
  CHECK(Normalize("  A ") == "A");
  CHECK(Normalize("A") == "A");
  CHECK(Normalize("a\nb ") == "a\nb");
  CHECK(Normalize(" \t\r\n") == "");
}

TEST_CASE("exact match") {
  CHECK(ExactMatch("A", Refs{"A"}) == 1.0);
  CHECK(ExactMatch("A", Refs{"B"}) == 0.0);
  CHECK(ExactMatch(" yes", Refs{"yes", "no"}) == 1.0);
  CHECK_THROWS_AS(ExactMatch("A", Refs{}), Error);
}

TEST_CASE("lcs length") {
  CHECK(LcsLength(std::string_view(""), std::string_view("abc")) == 0);
  CHECK(LcsLength(std::string_view("abc"), std::string_view("abc")) == 3);
  CHECK(LcsLength(std::string_view("abcd"), std::string_view("abce")) == 3);
  // Counts scalar values, not bytes.
  CHECK(LcsLength(std::string_view("日本語"), std::string_view("日語")) == 2);
}

TEST_CASE("lcs agrees with subsequence enumeration") {
  testing::TestRng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    std::u32string a, b;
    const std::size_t la = rng.Below(9), lb = rng.Below(9);
    for (std::size_t i = 0; i < la; ++i) a.push_back(U'a' + static_cast<char32_t>(rng.Below(3)));
    for (std::size_t i = 0; i < lb; ++i) b.push_back(U'a' + static_cast<char32_t>(rng.Below(3)));
    CHECK(LcsLength(a, b) == testing::BruteForceLcs(a, b));
  }
}

TEST_CASE("char f1") {
  CHECK(CharF1("abc", Refs{"abc"}) == 1.0);
  CHECK(CharF1("abcd", Refs{"abce"}) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(CharF1("xyz", Refs{"abc"}) == 0.0);
  CHECK(CharF1("", Refs{""}) == 1.0);
  CHECK(CharF1("", Refs{"abc"}) == 0.0);
  CHECK(CharF1(" abc ", Refs{"abc"}) == 1.0);
  CHECK_THROWS_AS(CharF1("a", Refs{}), Error);
}

TEST_CASE("set f1") {
  CHECK(SetF1("a\nb", Refs{"b\nc"}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(SetF1("a\nb", Refs{"a\nb"}) == 1.0);
  CHECK(SetF1("", Refs{""}) == 1.0);
  CHECK(SetF1("a", Refs{""}) == 0.0);
  // Items are normalized and deduplicated; blank lines are ignored.
  CHECK(SetF1(" a \n\nb\nb", Refs{"b\na"}) == 1.0);
  CHECK_THROWS_AS(SetF1("a", Refs{}), Error);
}

TEST_CASE("similarity") {
  CHECK(Similarity(ScoreFnKind::kExactMatch, "x", "x") == 1.0);
  CHECK(Similarity(ScoreFnKind::kCharF1, "abcd", "abce") == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(Similarity(ScoreFnKind::kExactMatch, "x", "y") == 0.0);
}

TEST_CASE("kind names round-trip") {
  for (auto k : {ScoreFnKind::kExactMatch, ScoreFnKind::kCharF1, ScoreFnKind::kSetF1}) {
    CHECK(ParseKind(KindName(k)) == k);
  }
  CHECK_FALSE(ParseKind("bleu").has_value());
}

namespace {

std::string RandomText(testing::TestRng& rng, std::size_t max_len, bool lines) {
  static const std::string alphabet = "abc d";
  std::string s;
  const std::size_t n = rng.Below(max_len + 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (lines && rng.Below(4) == 0) s.push_back('\n');
    else s.push_back(alphabet[rng.Below(alphabet.size())]);
  }
  return s;
}

}  // namespace

TEST_CASE("scores are bounded, symmetric and max over references") {
  testing::TestRng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::string a = RandomText(rng, 10, true);
    const std::string b = RandomText(rng, 10, true);
    const std::string c = RandomText(rng, 10, true);
    for (auto k : {ScoreFnKind::kExactMatch, ScoreFnKind::kCharF1, ScoreFnKind::kSetF1}) {
      const double ab = Similarity(k, a, b);
      CHECK(ab >= 0.0);
      CHECK(ab <= 1.0);
      CHECK(ab == Similarity(k, b, a));
      CHECK(Similarity(k, a, a) == 1.0);
      const double both = Score(k, a, Refs{b, c});
      CHECK(both == std::max(ab, Similarity(k, a, c)));
      CHECK(both >= ab);
    }
  }
}

TEST_CASE("utf-8 decoding") {
  const auto cps = DecodeUtf8("aé日😀");
  REQUIRE(cps.size() == 4);
  CHECK(cps[1] == U'é');
  CHECK(cps[3] == U'\U0001F600');
  // Stray continuation byte and truncated sequence decode to U+FFFD.
  const auto bad = DecodeUtf8(std::string("\x80x\xE6\x97", 4));
  REQUIRE(bad.size() == 4);
  CHECK(bad[0] == U'\uFFFD');
  CHECK(bad[1] == U'x');
}
