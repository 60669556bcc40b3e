#include "debias/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "debias/error.hpp"

namespace debias {

namespace {

double ratio(std::size_t num, std::size_t den) noexcept {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

template <typename T>
void require_same_ids(const std::map<std::string, T>& preds, const std::map<std::string, T>& golds) {
  std::vector<std::string> offending;
  for (const auto& [id, _] : preds) {
    if (!golds.contains(id)) offending.push_back(id + " (prediction only)");
  }
  for (const auto& [id, _] : golds) {
    if (!preds.contains(id)) offending.push_back(id + " (gold only)");
  }
  if (offending.empty()) return;
  std::string list;
  for (std::size_t i = 0; i < offending.size() && i < 10; ++i) list += (i ? ", " : "") + offending[i];
  if (offending.size() > 10) list += ", ... (" + std::to_string(offending.size()) + " total)";
  throw Error(Errc::IdMismatch, std::to_string(offending.size()) + " id(s)", list);
}

// Maps both sequences onto shared integer ids.
struct Interned {
  std::vector<int> candidate;
  std::vector<int> reference;
};

Interned intern(const TokenSequence& candidate, const TokenSequence& reference) {
  std::unordered_map<std::string_view, int> ids;
  Interned out;
  auto id_of = [&](const std::string& t) {
    return ids.try_emplace(t, static_cast<int>(ids.size())).first->second;
  };
  out.candidate.reserve(candidate.size());
  out.reference.reserve(reference.size());
  for (const auto& t : candidate.tokens) out.candidate.push_back(id_of(t));
  for (const auto& t : reference.tokens) out.reference.push_back(id_of(t));
  return out;
}

std::map<std::vector<int>, std::size_t> ngram_histogram(const std::vector<int>& seq, std::size_t n) {
  std::map<std::vector<int>, std::size_t> hist;
  if (n == 0 || seq.size() < n) return hist;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++hist[std::vector<int>(seq.begin() + static_cast<std::ptrdiff_t>(i), seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return hist;
}

NgramCounts counts_interned(const Interned& s, std::size_t n) {
  NgramCounts out;
  if (n == 0 || s.candidate.size() < n) return out;
  out.total = s.candidate.size() - n + 1;
  const auto ref = ngram_histogram(s.reference, n);
  for (const auto& [gram, count] : ngram_histogram(s.candidate, n)) {
    const auto it = ref.find(gram);
    if (it != ref.end()) out.matched += std::min(count, it->second);
  }
  return out;
}

}  // namespace

double harmonic_f1(double precision, double recall) noexcept {
  const double sum = precision + recall;
  return sum > 0.0 ? 2.0 * precision * recall / sum : 0.0;
}

ClassificationReport detection_report(const std::map<std::string, bool>& preds,
                                      const std::map<std::string, bool>& golds) {
  require_same_ids(preds, golds);
  ClassificationReport r;
  r.support = {0, 0};
  for (const auto& [id, gold] : golds) {
    const bool pred = preds.at(id);
    ++r.support[gold ? 0 : 1];
    if (pred && gold) ++r.tp;
    else if (pred) ++r.fp;
    else if (gold) ++r.fn;
  }
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.f1 = harmonic_f1(r.precision, r.recall);
  return r;
}

std::string_view to_string(Averaging a) noexcept {
  switch (a) {
    case Averaging::Micro: return "micro";
    case Averaging::Macro: return "macro";
    case Averaging::Sample: return "sample";
  }
  return "";
}

ClassificationReport multilabel_report(const std::map<std::string, BiasVector>& preds,
                                       const std::map<std::string, BiasVector>& golds, Averaging averaging) {
  require_same_ids(preds, golds);
  ClassificationReport r;
  r.support = {0, 0, 0};
  std::array<std::size_t, 3> tp{}, fp{}, fn{};
  double sample_p = 0.0, sample_r = 0.0, sample_f = 0.0;

  for (const auto& [id, gold] : golds) {
    const auto& pred = preds.at(id);
    std::size_t s_tp = 0, s_fp = 0, s_fn = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const bool g = gold.slot(i);
      const bool p = pred.slot(i);
      r.support[i] += g ? 1 : 0;
      if (p && g) ++tp[i], ++s_tp;
      else if (p) ++fp[i], ++s_fp;
      else if (g) ++fn[i], ++s_fn;
    }
    if (s_tp + s_fp + s_fn == 0) {
      // Both vectors empty: exact agreement.
      sample_p += 1.0;
      sample_r += 1.0;
      sample_f += 1.0;
    } else {
      const double p = ratio(s_tp, s_tp + s_fp);
      const double rc = ratio(s_tp, s_tp + s_fn);
      sample_p += p;
      sample_r += rc;
      sample_f += harmonic_f1(p, rc);
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    r.tp += tp[i];
    r.fp += fp[i];
    r.fn += fn[i];
  }

  switch (averaging) {
    case Averaging::Micro:
      r.precision = ratio(r.tp, r.tp + r.fp);
      r.recall = ratio(r.tp, r.tp + r.fn);
      r.f1 = harmonic_f1(r.precision, r.recall);
      break;
    case Averaging::Macro: {
      std::size_t seen = 0;
      for (std::size_t i = 0; i < 3; ++i) {
        if (tp[i] + fp[i] + fn[i] == 0) continue;
        ++seen;
        const double p = ratio(tp[i], tp[i] + fp[i]);
        const double rc = ratio(tp[i], tp[i] + fn[i]);
        r.precision += p;
        r.recall += rc;
        r.f1 += harmonic_f1(p, rc);
      }
      if (seen > 0) {
        r.precision /= static_cast<double>(seen);
        r.recall /= static_cast<double>(seen);
        r.f1 /= static_cast<double>(seen);
      }
      break;
    }
    case Averaging::Sample: {
      const auto n = static_cast<double>(golds.size());
      if (n > 0) {
        r.precision = sample_p / n;
        r.recall = sample_r / n;
        r.f1 = sample_f / n;
      }
      break;
    }
  }
  return r;
}

NgramCounts ngram_counts(const TokenSequence& candidate, const TokenSequence& reference, std::size_t n) {
  return counts_interned(intern(candidate, reference), n);
}

double ngram_precision(const TokenSequence& candidate, const TokenSequence& reference, std::size_t n) {
  if (n == 0) throw Error(Errc::InvalidArgument, "n", "n-gram order must be >= 1");
  const auto c = ngram_counts(candidate, reference, n);
  return ratio(c.matched, c.total);
}

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len) noexcept {
  if (candidate_len == 0) return 0.0;
  if (candidate_len > reference_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(reference_len) / static_cast<double>(candidate_len));
}

namespace {

double geometric_term(const NgramCounts& c, const BleuOptions& options, bool& zero) {
  if (c.matched > 0) return std::log(static_cast<double>(c.matched) / static_cast<double>(c.total));
  if (options.smoothing == Smoothing::AddEpsilon) return std::log(options.epsilon / static_cast<double>(c.total));
  zero = true;
  return 0.0;
}

}  // namespace

double bleu(const TokenSequence& candidate, const TokenSequence& reference, const BleuOptions& options) {
  if (options.max_n == 0) throw Error(Errc::InvalidArgument, "max_n", "BLEU order must be >= 1");
  if (candidate.empty()) return 0.0;
  const auto s = intern(candidate, reference);
  const std::size_t n_eff = std::min(options.max_n, candidate.size());
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= n_eff; ++n) {
    log_sum += geometric_term(counts_interned(s, n), options, zero) / static_cast<double>(n_eff);
    if (zero) return 0.0;
  }
  return brevity_penalty(candidate.size(), reference.size()) * std::exp(log_sum);
}

double corpus_bleu(std::span<const TokenPair> pairs, const BleuOptions& options) {
  if (options.max_n == 0) throw Error(Errc::InvalidArgument, "max_n", "BLEU order must be >= 1");
  std::vector<NgramCounts> pooled(options.max_n);
  std::size_t c_len = 0, r_len = 0;
  for (const auto& pair : pairs) {
    const auto s = intern(pair.candidate, pair.reference);
    c_len += pair.candidate.size();
    r_len += pair.reference.size();
    for (std::size_t n = 1; n <= options.max_n; ++n) {
      const auto c = counts_interned(s, n);
      pooled[n - 1].matched += c.matched;
      pooled[n - 1].total += c.total;
    }
  }
  std::size_t n_eff = 0;
  while (n_eff < options.max_n && pooled[n_eff].total > 0) ++n_eff;
  if (n_eff == 0) return 0.0;
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < n_eff; ++n) {
    log_sum += geometric_term(pooled[n], options, zero) / static_cast<double>(n_eff);
    if (zero) return 0.0;
  }
  return brevity_penalty(c_len, r_len) * std::exp(log_sum);
}

std::size_t lcs_length(const TokenSequence& x, const TokenSequence& y) {
  const auto s = intern(x, y);
  const auto& longer = s.candidate.size() >= s.reference.size() ? s.candidate : s.reference;
  const auto& shorter = s.candidate.size() >= s.reference.size() ? s.reference : s.candidate;
  std::vector<std::size_t> row(shorter.size() + 1, 0);
  for (const int a : longer) {
    std::size_t diag = 0;  // row[j - 1] from the previous outer iteration
    for (std::size_t j = 1; j <= shorter.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = a == shorter[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row.back();
}

void RougeParams::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw Error(Errc::InvalidArgument, "beta", "ROUGE-L beta must be > 0");
}

RougeScore rouge_l(const TokenSequence& candidate, const TokenSequence& reference, const RougeParams& params) {
  params.validate();
  RougeScore s;
  const auto lcs = lcs_length(candidate, reference);
  s.recall = ratio(lcs, reference.size());
  s.precision = ratio(lcs, candidate.size());
  const double b2 = params.beta * params.beta;
  const double den = s.recall + b2 * s.precision;
  s.f1 = den > 0.0 ? (1.0 + b2) * s.recall * s.precision / den : 0.0;
  return s;
}

double three_metric_average(double bleu_score, double meteor_score, double rouge_f1) noexcept {
  return (bleu_score + meteor_score + rouge_f1) / 3.0;
}

MitigationScore mitigation_score(std::span<const TextPair> pairs, const MitigationOptions& options) {
  if (pairs.empty()) throw Error(Errc::EmptyCorpus, "", "no (candidate, reference) pairs to score");
  options.meteor.validate();
  options.rouge.validate();

  MitigationScore out;
  out.n_pairs = pairs.size();
  std::vector<TokenPair> tokenized;
  tokenized.reserve(pairs.size());
  for (const auto& p : pairs) {
    tokenized.push_back({tokenize(p.candidate, options.granularity), tokenize(p.reference, options.granularity)});
  }
  double bleu_sum = 0.0, meteor_sum = 0.0, rp = 0.0, rr = 0.0, rf = 0.0;
  for (const auto& t : tokenized) {
    if (!options.corpus_level_bleu) bleu_sum += bleu(t.candidate, t.reference, options.bleu);
    meteor_sum += meteor(t.candidate, t.reference, options.meteor);
    const auto r = rouge_l(t.candidate, t.reference, options.rouge);
    rp += r.precision;
    rr += r.recall;
    rf += r.f1;
  }
  const auto n = static_cast<double>(pairs.size());
  out.bleu = options.corpus_level_bleu ? corpus_bleu(tokenized, options.bleu) : bleu_sum / n;
  out.meteor = meteor_sum / n;
  out.rouge_l = {rp / n, rr / n, rf / n};
  out.average = three_metric_average(out.bleu, out.meteor, out.rouge_l.f1);
  return out;
}

double overall_score(double detection_f1, double classification_f1, double mitigation_average) {
  for (const double v : {detection_f1, classification_f1, mitigation_average}) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::InvalidArgument, std::to_string(v), "task score outside [0, 1]");
  }
  return (detection_f1 + classification_f1 + mitigation_average) / 3.0;
}

}  // namespace debias
