#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "debias/corpus.hpp"

namespace debias {

enum class Granularity {
  Character,   // extended grapheme clusters, whitespace dropped
  Whitespace,  // runs of non-whitespace
};

struct TokenSequence {
  std::vector<std::string> tokens;  // never contains an empty token
  Granularity granularity = Granularity::Character;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
};

TokenSequence tokenize(std::string_view utf8, Granularity granularity = Granularity::Character);

// Classification -------------------------------------------------------------

struct ClassificationReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Gold positives per class: detection [biased, non-biased]; multi-label [AC, DI, ANB].
  std::vector<std::size_t> support;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// 2PR/(P+R), or 0 when P+R = 0.
double harmonic_f1(double precision, double recall) noexcept;

/// Biased (true) is the positive class. Throws Error(IdMismatch).
ClassificationReport detection_report(const std::map<std::string, bool>& preds,
                                      const std::map<std::string, bool>& golds);

enum class Averaging {
  Micro,   // pool TP/FP/FN over the three labels
  Macro,   // mean of per-label scores over labels seen in gold or predictions
  Sample,  // mean of per-sentence scores
};

std::string_view to_string(Averaging a) noexcept;

/// Throws Error(IdMismatch).
ClassificationReport multilabel_report(const std::map<std::string, BiasVector>& preds,
                                       const std::map<std::string, BiasVector>& golds, Averaging averaging);

// Generation -----------------------------------------------------------------

struct NgramCounts {
  std::size_t matched = 0;  // clipped
  std::size_t total = 0;    // candidate n-grams
};

NgramCounts ngram_counts(const TokenSequence& candidate, const TokenSequence& reference, std::size_t n);

/// Clipped n-gram precision; 0 when the candidate has no n-grams.
double ngram_precision(const TokenSequence& candidate, const TokenSequence& reference, std::size_t n);

/// 1 if c > r, exp(1 - r/c) otherwise, 0 for an empty candidate.
double brevity_penalty(std::size_t candidate_len, std::size_t reference_len) noexcept;

enum class Smoothing {
  None,          // any zero precision zeroes the score
  AddEpsilon,    // zero match counts become epsilon
};

struct BleuOptions {
  std::size_t max_n = 4;
  Smoothing smoothing = Smoothing::None;
  double epsilon = 0.1;
};

/// Sentence BLEU, BP * exp(sum w_n log p_n) with uniform weights over
/// n = 1..min(max_n, |candidate|).
double bleu(const TokenSequence& candidate, const TokenSequence& reference, const BleuOptions& options = {});

struct TokenPair {
  TokenSequence candidate;
  TokenSequence reference;
};

/// Corpus BLEU over pooled clipped counts and lengths.
double corpus_bleu(std::span<const TokenPair> pairs, const BleuOptions& options = {});

struct MeteorParams {
  double alpha = 0.9;
  double gamma = 0.5;
  double beta_exp = 3.0;

  /// Throws Error(InvalidArgument).
  void validate() const;
};

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  bool exact = true;  // false when the search budget ran out
};

/// Default bound on search nodes when minimising chunks.
inline constexpr std::size_t kMeteorSearchBudget = 200000;

/// Maximum exact-match unigram alignment with the fewest chunks.
MeteorAlignment meteor_align(const TokenSequence& candidate, const TokenSequence& reference,
                             std::size_t search_budget = kMeteorSearchBudget);

/// F_mean * (1 - Penalty); F_mean = PR / (alpha P + (1 - alpha) R),
/// Penalty = gamma (chunks / m)^beta_exp; 0 when nothing matches.
double meteor(const TokenSequence& candidate, const TokenSequence& reference, const MeteorParams& params = {});

/// O(|x| |y|) time, O(min(|x|, |y|)) space.
std::size_t lcs_length(const TokenSequence& x, const TokenSequence& y);

struct RougeParams {
  double beta = 1.2;

  void validate() const;
};

struct RougeScore {
  double precision = 0.0;  // LCS / |candidate|
  double recall = 0.0;     // LCS / |reference|
  double f1 = 0.0;
};

RougeScore rouge_l(const TokenSequence& candidate, const TokenSequence& reference, const RougeParams& params = {});

struct MitigationOptions {
  Granularity granularity = Granularity::Character;
  BleuOptions bleu;
  bool corpus_level_bleu = false;
  MeteorParams meteor;
  RougeParams rouge;
};

struct MitigationScore {
  double bleu = 0.0;
  double meteor = 0.0;
  RougeScore rouge_l;  // corpus means of the per-sentence values
  double average = 0.0;
  std::size_t n_pairs = 0;
};

struct TextPair {
  std::string id;
  std::string candidate;
  std::string reference;
};

/// (bleu + meteor + rouge_l.f1) / 3.
double three_metric_average(double bleu, double meteor, double rouge_f1) noexcept;

/// Per-metric corpus means (fixed summation order), then their average.
/// Throws Error(EmptyCorpus).
MitigationScore mitigation_score(std::span<const TextPair> pairs, const MitigationOptions& options = {});

/// Mean of the three task scores. Throws Error(InvalidArgument) outside [0, 1].
double overall_score(double detection_f1, double classification_f1, double mitigation_average);

}  // namespace debias
