#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "debias/ensemble.hpp"
#include "debias/metrics.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace debias;
using gen::seq;

TEST_CASE("lcs matches exhaustive enumeration, is symmetric and bounded") {
  gen::Source g(1);
  for (int i = 0; i < 3000; ++i) {
    const auto x = g.tokens(8, 3);
    const auto y = g.tokens(8, 3);
    const auto l = lcs_length(seq(x), seq(y));
    REQUIRE(l == oracle::lcs_exhaustive(x, y));
    CHECK(l == lcs_length(seq(y), seq(x)));
    CHECK(l <= std::min(x.size(), y.size()));
  }
}

TEST_CASE("clipped n-gram counts match the naive oracle on all short strings") {
  // Every string of length <= 4 over {a,b,c}, against every other.
  std::vector<std::vector<std::string>> all{{}};
  for (std::size_t len = 1; len <= 4; ++len) {
    std::vector<std::vector<std::string>> next;
    for (const auto& s : all) {
      if (s.size() != len - 1) continue;
      for (char c : {'a', 'b', 'c'}) {
        auto t = s;
        t.emplace_back(1, c);
        next.push_back(t);
      }
    }
    all.insert(all.end(), next.begin(), next.end());
  }
  REQUIRE(all.size() == 121);
  for (const auto& c : all) {
    for (const auto& r : all) {
      for (std::size_t n = 1; n <= 4; ++n) {
        const auto got = ngram_counts(seq(c), seq(r), n);
        const auto want = oracle::clipped_counts(c, r, n);
        REQUIRE(got.matched == want.matched);
        REQUIRE(got.total == want.total);
      }
    }
  }
}

TEST_CASE("bleu matches direct evaluation") {
  gen::Source g(2);
  for (int i = 0; i < 3000; ++i) {
    const auto c = g.tokens(8, 3);
    const auto r = g.tokens(8, 3);
    REQUIRE(bleu(seq(c), seq(r)) == doctest::Approx(oracle::bleu_direct(c, r)).epsilon(1e-12));
  }
}

TEST_CASE("meteor alignment matches brute force on short strings") {
  gen::Source g(3);
  for (int i = 0; i < 2000; ++i) {
    const auto c = g.tokens(6, 3);
    const auto r = g.tokens(6, 3);
    const auto got = meteor_align(seq(c), seq(r));
    const auto want = oracle::meteor_bruteforce(c, r);
    REQUIRE(got.matches == want.matches);
    REQUIRE(got.chunks == want.chunks);
    CHECK(got.exact);
    CHECK(meteor(seq(c), seq(r)) == doctest::Approx(oracle::meteor_formula(want, c.size(), r.size())));
  }
}

TEST_CASE("identity cases are exact") {
  gen::Source g(4);
  for (int i = 0; i < 1000; ++i) {
    auto x = g.tokens(8, 3);
    if (x.empty()) x.push_back("a");
    const auto s = seq(x);
    CHECK(bleu(s, s) == 1.0);
    const auto r = rouge_l(s, s);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f1 == 1.0);
    const double m = static_cast<double>(x.size());
    CHECK(meteor(s, s) == 1.0 - 0.5 * std::pow(1.0 / m, 3.0));
  }
}

TEST_CASE("metric ranges and rouge recall monotonicity") {
  gen::Source g(5);
  for (int i = 0; i < 2000; ++i) {
    auto c = g.tokens(8, 4);
    const auto r = g.tokens(8, 4);
    const auto rl = rouge_l(seq(c), seq(r));
    for (double v : {bleu(seq(c), seq(r)), meteor(seq(c), seq(r)), rl.precision, rl.recall, rl.f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (!r.empty()) {
      auto longer = c;
      longer.push_back(r[g.below(r.size())]);
      CHECK(rouge_l(seq(longer), seq(r)).recall >= rl.recall);
    }
  }
}

TEST_CASE("vote_binary permutation invariance and threshold soundness") {
  gen::Source g(6);
  for (int i = 0; i < 2000; ++i) {
    std::vector<BinaryVote> votes;
    for (int e = 1; e <= 6; ++e) {
      if (g.coin(0.15)) continue;
      const auto pick = g.below(3);
      votes.push_back({e, pick == 2 ? std::nullopt : std::optional<bool>(pick == 1), std::nullopt});
    }
    const bool any_cast = std::any_of(votes.begin(), votes.end(), [](const BinaryVote& v) { return v.value; });
    if (!any_cast) {
      CHECK_THROWS_AS(vote_binary(votes, VotingPolicy{}), Error);
      continue;
    }
    const auto base = vote_binary(votes, VotingPolicy{});
    for (int k = 0; k < 5; ++k) {
      std::shuffle(votes.begin(), votes.end(), g.engine());
      CHECK(vote_binary(votes, VotingPolicy{}) == base);
    }
    const int top = std::max(base.tally.yes, base.tally.no);
    CHECK((base.resolved_by == ResolvedBy::Majority) == (top >= 4));
  }
}
