#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "debias/error.hpp"
#include "debias/metrics.hpp"

namespace debias {

void MeteorParams::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::InvalidArgument, "alpha", "METEOR alpha must lie in (0, 1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(Errc::InvalidArgument, "gamma", "METEOR gamma must lie in [0, 1]");
  if (!(beta_exp > 0.0)) throw Error(Errc::InvalidArgument, "beta_exp", "METEOR beta_exp must be > 0");
}

namespace {

// Minimum-chunk search over maximum-cardinality exact alignments. The
// problem contains minimum common string partition (NP-hard), so the
// depth-first search is exact only within its node budget; the first leaf
// it reaches is the greedy "extend the current chunk" alignment.
class ChunkSearch {
 public:
  ChunkSearch(std::vector<int> cand, std::vector<int> ref, std::size_t budget)
      : cand_(std::move(cand)), ref_(std::move(ref)), budget_(std::max(budget, cand_.size() + 2)) {
    int max_id = -1;
    for (int t : cand_) max_id = std::max(max_id, t);
    for (int t : ref_) max_id = std::max(max_id, t);
    const auto n_ids = static_cast<std::size_t>(max_id + 1);
    needed_.assign(n_ids, 0);
    cand_left_.assign(n_ids, 0);
    positions_.assign(n_ids, {});
    std::vector<int> ref_count(n_ids, 0);
    for (std::size_t j = 0; j < ref_.size(); ++j) {
      positions_[static_cast<std::size_t>(ref_[j])].push_back(static_cast<int>(j));
      ++ref_count[static_cast<std::size_t>(ref_[j])];
    }
    for (int t : cand_) ++cand_left_[static_cast<std::size_t>(t)];
    for (std::size_t t = 0; t < n_ids; ++t) {
      needed_[t] = std::min(cand_left_[t], ref_count[t]);
      matches_ += static_cast<std::size_t>(needed_[t]);
    }
    used_.assign(ref_.size(), false);
  }

  MeteorAlignment run() {
    MeteorAlignment out;
    out.matches = matches_;
    if (matches_ == 0) return out;
    best_ = matches_ + 1;
    dfs(0, -1, 0, matches_);
    out.chunks = best_;
    out.exact = !exhausted_;
    return out;
  }

 private:
  void dfs(std::size_t i, int prev_j, std::size_t chunks, std::size_t remaining) {
    if (exhausted_) return;
    if (++nodes_ > budget_) {
      exhausted_ = true;
      return;
    }
    if (chunks >= best_) return;
    if (remaining == 0) {
      best_ = chunks;
      return;
    }
    if (prev_j < 0 && chunks + 1 >= best_) return;

    const auto t = static_cast<std::size_t>(cand_[i]);
    --cand_left_[t];
    if (needed_[t] > 0) {
      const int next = prev_j + 1;
      const bool can_extend = prev_j >= 0 && static_cast<std::size_t>(next) < ref_.size() &&
                              !used_[static_cast<std::size_t>(next)] && static_cast<std::size_t>(ref_[static_cast<std::size_t>(next)]) == t;
      if (can_extend) match(i, next, chunks, remaining);
      for (const int j : positions_[t]) {
        if (exhausted_) break;
        if (used_[static_cast<std::size_t>(j)] || (can_extend && j == next)) continue;
        match(i, j, chunks + 1, remaining);
      }
    }
    if (!exhausted_ && needed_[t] <= cand_left_[t]) dfs(i + 1, -1, chunks, remaining);
    ++cand_left_[t];
  }

  void match(std::size_t i, int j, std::size_t chunks, std::size_t remaining) {
    const auto t = static_cast<std::size_t>(cand_[i]);
    used_[static_cast<std::size_t>(j)] = true;
    --needed_[t];
    dfs(i + 1, j, chunks, remaining - 1);
    ++needed_[t];
    used_[static_cast<std::size_t>(j)] = false;
  }

  std::vector<int> cand_;
  std::vector<int> ref_;
  std::size_t budget_;
  std::vector<int> needed_;
  std::vector<int> cand_left_;
  std::vector<std::vector<int>> positions_;
  std::vector<bool> used_;
  std::size_t matches_ = 0;
  std::size_t best_ = 0;
  std::size_t nodes_ = 0;
  bool exhausted_ = false;
};

}  // namespace

MeteorAlignment meteor_align(const TokenSequence& candidate, const TokenSequence& reference, std::size_t search_budget) {
  std::unordered_map<std::string_view, int> ids;
  auto to_ids = [&](const TokenSequence& s) {
    std::vector<int> out;
    out.reserve(s.size());
    for (const auto& t : s.tokens) out.push_back(ids.try_emplace(t, static_cast<int>(ids.size())).first->second);
    return out;
  };
  auto cand = to_ids(candidate);
  auto ref = to_ids(reference);
  return ChunkSearch(std::move(cand), std::move(ref), search_budget).run();
}

double meteor(const TokenSequence& candidate, const TokenSequence& reference, const MeteorParams& params) {
  params.validate();
  const auto a = meteor_align(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double f_mean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
  const double penalty = params.gamma * std::pow(static_cast<double>(a.chunks) / m, params.beta_exp);
  return f_mean * (1.0 - penalty);
}

}  // namespace debias
