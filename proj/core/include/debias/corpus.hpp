#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace debias {

enum class Label { Biased, NonBiased };

/// The three bias categories, in their fixed slot order.
enum class BiasType : std::size_t { AC = 0, DI = 1, ANB = 2 };

inline constexpr std::array<BiasType, 3> kBiasTypes{BiasType::AC, BiasType::DI, BiasType::ANB};

std::string_view code_of(BiasType type) noexcept;

/// Multi-hot vector over [AC, DI, ANB].
class BiasVector {
 public:
  constexpr BiasVector() = default;
  constexpr BiasVector(bool ac, bool di, bool anb) : slots_{ac, di, anb} {}

  static constexpr BiasVector from_mask(unsigned mask) {
    return {(mask & 1U) != 0, (mask & 2U) != 0, (mask & 4U) != 0};
  }

  constexpr bool operator[](BiasType t) const { return slots_[static_cast<std::size_t>(t)]; }
  constexpr bool slot(std::size_t i) const { return slots_.at(i); }
  constexpr void set(BiasType t, bool on) { slots_[static_cast<std::size_t>(t)] = on; }
  constexpr void set_slot(std::size_t i, bool on) { slots_.at(i) = on; }

  constexpr bool any() const { return slots_[0] || slots_[1] || slots_[2]; }
  constexpr std::size_t count() const {
    return static_cast<std::size_t>(slots_[0]) + slots_[1] + slots_[2];
  }
  constexpr unsigned mask() const {
    return static_cast<unsigned>(slots_[0]) | (static_cast<unsigned>(slots_[1]) << 1U) |
           (static_cast<unsigned>(slots_[2]) << 2U);
  }
  constexpr std::array<int, 3> to_array() const {
    return {slots_[0] ? 1 : 0, slots_[1] ? 1 : 0, slots_[2] ? 1 : 0};
  }

  friend constexpr bool operator==(const BiasVector&, const BiasVector&) = default;

 private:
  std::array<bool, 3> slots_{};
};

/// "[1, 0, 0]"
std::string to_string(const BiasVector& v);

struct SentenceRecord {
  std::string id;
  std::string text;
  Label label = Label::NonBiased;
  std::optional<BiasVector> bias_types;  // present iff label == Biased
  std::optional<std::string> reference;  // gold rewrite, mitigation sets only
};

/// What a dataset file must carry beyond the base record fields.
enum class RecordSchema {
  Classification,  // id, text, label, bias_types
  Mitigation,      // as above, plus a `reference` rewrite on every biased record
};

/// Immutable after construction; ids are unique.
class Dataset {
 public:
  Dataset() = default;
  /// Validates record and uniqueness invariants. Throws Error.
  explicit Dataset(std::vector<SentenceRecord> records);

  const std::vector<SentenceRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const SentenceRecord* find(std::string_view id) const;

 private:
  std::vector<SentenceRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parses one line-delimited record. Throws Error(MalformedLine | LabelVectorMismatch).
SentenceRecord parse_record(std::string_view line, std::size_t line_no,
                            RecordSchema schema = RecordSchema::Classification);
/// Canonical single-line serialisation (no trailing newline).
std::string serialize_record(const SentenceRecord& record);

Dataset read_dataset(std::istream& in, RecordSchema schema = RecordSchema::Classification);
/// Throws Error(IoFailure | MalformedLine | DuplicateId | LabelVectorMismatch).
Dataset load_dataset(const std::filesystem::path& path,
                     RecordSchema schema = RecordSchema::Classification);
void write_dataset(std::ostream& out, const std::vector<const SentenceRecord*>& records);

struct SplitStats {
  std::size_t n_biased = 0;
  std::size_t n_nonbiased = 0;
  std::size_t n_total = 0;
  std::array<std::size_t, 3> per_type_counts{};

  friend bool operator==(const SplitStats&, const SplitStats&) = default;
};

SplitStats dataset_stats(const Dataset& dataset);

struct ExpertDataset {
  int expert_id = 0;  // 1-based
  std::vector<std::string> biased_ids;
  std::vector<std::string> nonbiased_ids;
  std::uint64_t seed = 0;

  double ratio() const {
    return biased_ids.empty() ? 0.0
                              : static_cast<double>(nonbiased_ids.size()) /
                                    static_cast<double>(biased_ids.size());
  }
};

/// Seeded, platform-independent Fisher-Yates shuffle over mt19937_64.
void seeded_shuffle(std::vector<std::string>& items, std::uint64_t seed);

/// Experts 1..k pair the full biased pool with one of k near-equal parts of
/// the shuffled non-biased pool; expert k+1 holds the whole dataset.
/// Throws Error(EmptyClass) and Error(InvalidArgument) for k < 2.
std::vector<ExpertDataset> rebalance(const Dataset& dataset, std::size_t k = 5,
                                     std::uint64_t seed = 0);

struct ExpertFileEntry {
  int expert_id = 0;
  std::string file;  // relative to the output directory
  std::size_t n_biased = 0;
  std::size_t n_nonbiased = 0;
  std::string sha256;
};

struct ExpertManifest {
  std::uint64_t seed = 0;
  std::size_t k = 0;
  std::vector<ExpertFileEntry> experts;
};

/// Writes expert_<id>.jsonl per expert and manifest.json. Output is a pure
/// function of (dataset, experts). Throws Error(IoFailure).
ExpertManifest export_expert_datasets(const Dataset& dataset,
                                      const std::vector<ExpertDataset>& experts,
                                      const std::filesystem::path& out_dir);

}  // namespace debias
