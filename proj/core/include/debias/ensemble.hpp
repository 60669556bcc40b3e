#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "debias/backend.hpp"
#include "debias/corpus.hpp"
#include "debias/prompting.hpp"

namespace debias {

enum class FallbackRule {
  DesignatedExpert,  // defer to one expert (default: the full-data expert 6)
  MeanScore,         // mean of per-answer scores, when the backend supplies them
};

struct VotingPolicy {
  int n_experts = 6;
  int threshold = 4;  // "more than three out of six"
  FallbackRule fallback = FallbackRule::DesignatedExpert;
  int designated_expert = 6;

  /// Throws Error(InvalidConfig) unless threshold > n_experts / 2.
  void validate() const;
  /// A one-member panel: its answer is final.
  static VotingPolicy single_expert(int expert_id);
};

enum class ResolvedBy { Majority, Fallback };
std::string_view to_string(ResolvedBy r) noexcept;

struct BinaryTally {
  int yes = 0;
  int no = 0;
  int abstain = 0;

  friend bool operator==(const BinaryTally&, const BinaryTally&) = default;
};

struct VoteOutcome {
  bool decided = false;
  std::optional<bool> value;
  BinaryTally tally;
  ResolvedBy resolved_by = ResolvedBy::Fallback;

  friend bool operator==(const VoteOutcome&, const VoteOutcome&) = default;
};

struct BinaryVote {
  int expert_id = 0;
  std::optional<bool> value;    // nullopt: abstained
  std::optional<double> score;  // P(true), if the backend reports one
};

/// An option reaching the threshold wins outright. Otherwise the fallback
/// rule decides: the designated expert's vote, or the mean score; when that
/// source is missing, the plurality of cast votes, and on a tie the vote of
/// the highest-numbered responding expert. Abstentions never lower the
/// threshold. Throws Error(NoUsableVotes) when nobody voted and
/// Error(InvalidArgument) for duplicate ids or more votes than the panel.
VoteOutcome vote_binary(std::span<const BinaryVote> votes, const VotingPolicy& policy);

struct MultiLabelVote {
  int expert_id = 0;
  std::optional<BiasVector> value;
  std::optional<std::array<double, 3>> scores;
};

struct MultiLabelOutcome {
  BiasVector value;
  std::array<VoteOutcome, 3> slots;
  ResolvedBy resolved_by = ResolvedBy::Majority;  // Fallback if any slot fell back
};

/// Each slot is voted independently with vote_binary semantics.
MultiLabelOutcome vote_multilabel(std::span<const MultiLabelVote> votes, const VotingPolicy& policy);

struct FinalPrediction {
  std::string sentence_id;
  Task task = Task::Detect;
  Answer answer;
  std::variant<VoteOutcome, MultiLabelOutcome> outcome;
  ResolvedBy resolved_by = ResolvedBy::Majority;
};

struct FailedSentence {
  std::string sentence_id;
  std::string reason;
};

struct ResolvedRun {
  std::vector<FinalPrediction> decided;  // in first-seen sentence order
  std::vector<FailedSentence> failed;    // NoUsableVotes, per sentence
};

/// Groups one task's predictions by sentence and votes each group. Only
/// Detect and Classify are voted. Unparsed predictions abstain.
ResolvedRun resolve_run(std::span<const ExpertPrediction> predictions, Task task, const VotingPolicy& policy);

}  // namespace debias
