#include "debias/ensemble.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>

#include "debias/error.hpp"

namespace debias {

void VotingPolicy::validate() const {
  if (n_experts < 1) throw Error(Errc::InvalidConfig, "n_experts", "panel needs at least one expert");
  if (threshold > n_experts || 2 * threshold <= n_experts) {
    throw Error(Errc::InvalidConfig, "threshold",
                "threshold must exceed half the panel (" + std::to_string(threshold) + " of " +
                    std::to_string(n_experts) + ")");
  }
}

VotingPolicy VotingPolicy::single_expert(int expert_id) {
  return VotingPolicy{1, 1, FallbackRule::DesignatedExpert, expert_id};
}

std::string_view to_string(ResolvedBy r) noexcept { return r == ResolvedBy::Majority ? "Majority" : "Fallback"; }

VoteOutcome vote_binary(std::span<const BinaryVote> votes, const VotingPolicy& policy) {
  policy.validate();
  if (votes.size() > static_cast<std::size_t>(policy.n_experts)) {
    throw Error(Errc::InvalidArgument, "votes", "more votes than panel members");
  }
  std::set<int> ids;
  VoteOutcome out;
  for (const auto& v : votes) {
    if (!ids.insert(v.expert_id).second) {
      throw Error(Errc::InvalidArgument, std::to_string(v.expert_id), "expert voted twice");
    }
    if (!v.value) ++out.tally.abstain;
    else if (*v.value) ++out.tally.yes;
    else ++out.tally.no;
  }
  out.tally.abstain += policy.n_experts - static_cast<int>(votes.size());

  if (out.tally.yes >= policy.threshold || out.tally.no >= policy.threshold) {
    out.decided = true;
    out.value = out.tally.yes >= policy.threshold;
    out.resolved_by = ResolvedBy::Majority;
    return out;
  }
  if (out.tally.yes + out.tally.no == 0) throw Error(Errc::NoUsableVotes, "", "every expert abstained");

  out.resolved_by = ResolvedBy::Fallback;
  out.decided = true;

  if (policy.fallback == FallbackRule::DesignatedExpert) {
    for (const auto& v : votes) {
      if (v.expert_id == policy.designated_expert && v.value) {
        out.value = *v.value;
        return out;
      }
    }
  } else {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : votes) {
      if (v.value && v.score) {
        sum += *v.score;
        ++n;
      }
    }
    if (n > 0) {
      out.value = sum / n >= 0.5;
      return out;
    }
  }

  if (out.tally.yes != out.tally.no) {
    out.value = out.tally.yes > out.tally.no;
    return out;
  }
  int top = -1;
  for (const auto& v : votes) {
    if (v.value && v.expert_id > top) {
      top = v.expert_id;
      out.value = *v.value;
    }
  }
  return out;
}

MultiLabelOutcome vote_multilabel(std::span<const MultiLabelVote> votes, const VotingPolicy& policy) {
  MultiLabelOutcome out;
  std::vector<BinaryVote> slot_votes(votes.size());
  for (std::size_t slot = 0; slot < 3; ++slot) {
    for (std::size_t i = 0; i < votes.size(); ++i) {
      const auto& v = votes[i];
      slot_votes[i].expert_id = v.expert_id;
      slot_votes[i].value = v.value ? std::optional<bool>(v.value->slot(slot)) : std::nullopt;
      slot_votes[i].score = v.scores ? std::optional<double>((*v.scores)[slot]) : std::nullopt;
    }
    try {
      out.slots[slot] = vote_binary(slot_votes, policy);
    } catch (const Error& e) {
      if (e.code() != Errc::NoUsableVotes) throw;
      throw Error(Errc::NoUsableVotes, std::string(code_of(kBiasTypes[slot])), "every expert abstained");
    }
    out.value.set_slot(slot, *out.slots[slot].value);
    if (out.slots[slot].resolved_by == ResolvedBy::Fallback) out.resolved_by = ResolvedBy::Fallback;
  }
  return out;
}

ResolvedRun resolve_run(std::span<const ExpertPrediction> predictions, Task task, const VotingPolicy& policy) {
  if (task == Task::Mitigate) throw Error(Errc::InvalidArgument, "mitigate", "rewrites are not voted");
  policy.validate();

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<const ExpertPrediction*>> groups;
  for (const auto& p : predictions) {
    if (p.task != task) {
      throw Error(Errc::InvalidArgument, p.sentence_id, "prediction for task " + std::string(to_string(p.task)));
    }
    auto [it, inserted] = groups.try_emplace(p.sentence_id);
    if (inserted) order.push_back(p.sentence_id);
    it->second.push_back(&p);
  }

  ResolvedRun run;
  for (const auto& id : order) {
    const auto& group = groups.at(id);
    try {
      FinalPrediction fp;
      fp.sentence_id = id;
      fp.task = task;
      if (task == Task::Detect) {
        std::vector<BinaryVote> votes;
        for (const auto* p : group) {
          BinaryVote v{p->expert_id, std::nullopt, std::nullopt};
          if (p->parse_ok && p->answer && std::holds_alternative<bool>(*p->answer)) v.value = std::get<bool>(*p->answer);
          votes.push_back(v);
        }
        auto outcome = vote_binary(votes, policy);
        fp.answer = *outcome.value;
        fp.resolved_by = outcome.resolved_by;
        fp.outcome = outcome;
      } else {
        std::vector<MultiLabelVote> votes;
        for (const auto* p : group) {
          MultiLabelVote v{p->expert_id, std::nullopt, std::nullopt};
          if (p->parse_ok && p->answer && std::holds_alternative<BiasVector>(*p->answer)) {
            v.value = std::get<BiasVector>(*p->answer);
          }
          votes.push_back(v);
        }
        auto outcome = vote_multilabel(votes, policy);
        fp.answer = outcome.value;
        fp.resolved_by = outcome.resolved_by;
        fp.outcome = outcome;
      }
      run.decided.push_back(std::move(fp));
    } catch (const Error& e) {
      if (e.code() != Errc::NoUsableVotes) throw;
      run.failed.push_back({id, e.what()});
    }
  }
  return run;
}

}  // namespace debias
