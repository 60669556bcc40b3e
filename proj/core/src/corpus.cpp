#include "debias/corpus.hpp"

#include <istream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <ostream>
#include <random>
#include <sstream>

#include "debias/digest.hpp"
#include "debias/error.hpp"
#include "io_util.hpp"

namespace debias {

using ordered_json = nlohmann::ordered_json;

std::string_view code_of(BiasType type) noexcept {
  switch (type) {
    case BiasType::AC: return "AC";
    case BiasType::DI: return "DI";
    case BiasType::ANB: return "ANB";
  }
  return "";
}

std::string to_string(const BiasVector& v) {
  const auto a = v.to_array();
  return "[" + std::to_string(a[0]) + ", " + std::to_string(a[1]) + ", " + std::to_string(a[2]) + "]";
}

namespace {

void check_record(const SentenceRecord& r, const std::string& where) {
  if (r.id.empty()) throw Error(Errc::MalformedLine, where, "empty id");
  if (r.text.empty()) throw Error(Errc::MalformedLine, where, "empty text");
  const bool biased = r.label == Label::Biased;
  if (biased != r.bias_types.has_value()) {
    throw Error(Errc::LabelVectorMismatch, r.id,
                biased ? "label B requires bias_types" : "label N must not carry bias_types");
  }
  if (biased && !r.bias_types->any()) {
    throw Error(Errc::LabelVectorMismatch, r.id, "label B requires at least one bias type");
  }
}

}  // namespace

Dataset::Dataset(std::vector<SentenceRecord> records) : records_(std::move(records)) {
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    check_record(records_[i], records_[i].id);
    if (!index_.emplace(records_[i].id, i).second) {
      throw Error(Errc::DuplicateId, records_[i].id, "id appears more than once");
    }
  }
}

const SentenceRecord* Dataset::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

SentenceRecord parse_record(std::string_view line, std::size_t line_no, RecordSchema schema) {
  const std::string where = std::to_string(line_no);
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedLine, where, e.what());
  }
  if (!j.is_object()) throw Error(Errc::MalformedLine, where, "record is not an object");

  auto string_field = [&](const char* name) -> std::string {
    const auto it = j.find(name);
    if (it == j.end() || !it->is_string()) {
      throw Error(Errc::MalformedLine, where, std::string("missing string field '") + name + "'");
    }
    return it->get<std::string>();
  };

  SentenceRecord r;
  r.id = string_field("id");
  r.text = string_field("text");
  const auto label = string_field("label");
  if (label == "B") {
    r.label = Label::Biased;
  } else if (label == "N") {
    r.label = Label::NonBiased;
  } else {
    throw Error(Errc::MalformedLine, where, "label must be \"B\" or \"N\", got \"" + label + "\"");
  }

  if (const auto it = j.find("bias_types"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 3) {
      throw Error(Errc::MalformedLine, where, "bias_types must be an array of three 0/1 integers");
    }
    BiasVector v;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& slot = (*it)[i];
      if (!slot.is_number_integer() || (slot.get<long long>() != 0 && slot.get<long long>() != 1)) {
        throw Error(Errc::MalformedLine, where, "bias_types slots must be 0 or 1");
      }
      v.set_slot(i, slot.get<long long>() == 1);
    }
    r.bias_types = v;
  }

  if (const auto it = j.find("reference"); it != j.end() && !it->is_null()) {
    if (!it->is_string() || it->get<std::string>().empty()) {
      throw Error(Errc::MalformedLine, where, "reference must be a non-empty string");
    }
    r.reference = it->get<std::string>();
  }
  if (schema == RecordSchema::Mitigation && r.label == Label::Biased && !r.reference) {
    throw Error(Errc::MalformedLine, where, "biased record in a mitigation set needs a reference");
  }

  check_record(r, where);
  return r;
}

std::string serialize_record(const SentenceRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["text"] = r.text;
  j["label"] = r.label == Label::Biased ? "B" : "N";
  if (r.bias_types) j["bias_types"] = r.bias_types->to_array();
  if (r.reference) j["reference"] = *r.reference;
  return j.dump();
}

Dataset read_dataset(std::istream& in, RecordSchema schema) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::vector<SentenceRecord> records;
  detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    records.push_back(parse_record(line, line_no, schema));
  });
  return Dataset(std::move(records));
}

Dataset load_dataset(const std::filesystem::path& path, RecordSchema schema) {
  std::istringstream in(detail::read_file(path));
  return read_dataset(in, schema);
}

void write_dataset(std::ostream& out, const std::vector<const SentenceRecord*>& records) {
  for (const auto* r : records) out << serialize_record(*r) << '\n';
}

SplitStats dataset_stats(const Dataset& dataset) {
  SplitStats s;
  for (const auto& r : dataset.records()) {
    if (r.label == Label::Biased) {
      ++s.n_biased;
      for (std::size_t i = 0; i < 3; ++i) s.per_type_counts[i] += r.bias_types->slot(i) ? 1 : 0;
    } else {
      ++s.n_nonbiased;
    }
  }
  s.n_total = s.n_biased + s.n_nonbiased;
  return s;
}

namespace {

// Unbiased draw from [0, bound) using only the standardised mt19937_64
// output sequence (std::uniform_int_distribution is implementation-defined).
std::uint64_t draw_below(std::mt19937_64& gen, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = gen();
    if (r >= threshold) return r % bound;
  }
}

}  // namespace

void seeded_shuffle(std::vector<std::string>& items, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(draw_below(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

std::vector<ExpertDataset> rebalance(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::InvalidArgument, "k", "subset count must be at least 2");
  std::vector<std::string> biased;
  std::vector<std::string> nonbiased;
  for (const auto& r : dataset.records()) {
    (r.label == Label::Biased ? biased : nonbiased).push_back(r.id);
  }
  if (biased.empty()) throw Error(Errc::EmptyClass, "B", "no biased records");
  if (nonbiased.empty()) throw Error(Errc::EmptyClass, "N", "no non-biased records");

  std::vector<std::string> pool = nonbiased;
  seeded_shuffle(pool, seed);

  std::vector<ExpertDataset> experts;
  experts.reserve(k + 1);
  const std::size_t base = pool.size() / k;
  const std::size_t extra = pool.size() % k;
  std::size_t offset = 0;
  for (std::size_t part = 0; part < k; ++part) {
    const std::size_t len = base + (part < extra ? 1 : 0);
    ExpertDataset e;
    e.expert_id = static_cast<int>(part + 1);
    e.biased_ids = biased;
    e.nonbiased_ids.assign(pool.begin() + static_cast<std::ptrdiff_t>(offset),
                           pool.begin() + static_cast<std::ptrdiff_t>(offset + len));
    e.seed = seed;
    experts.push_back(std::move(e));
    offset += len;
  }

  ExpertDataset full;
  full.expert_id = static_cast<int>(k + 1);
  full.biased_ids = std::move(biased);
  full.nonbiased_ids = std::move(nonbiased);
  full.seed = seed;
  experts.push_back(std::move(full));
  return experts;
}

ExpertManifest export_expert_datasets(const Dataset& dataset,
                                      const std::vector<ExpertDataset>& experts,
                                      const std::filesystem::path& out_dir) {
  ExpertManifest manifest;
  manifest.seed = experts.empty() ? 0 : experts.front().seed;
  manifest.k = experts.empty() ? 0 : experts.size() - 1;

  for (const auto& e : experts) {
    std::vector<const SentenceRecord*> rows;
    rows.reserve(e.biased_ids.size() + e.nonbiased_ids.size());
    if (static_cast<std::size_t>(e.expert_id) == experts.size()) {
      // The combined set keeps the original corpus order.
      for (const auto& r : dataset.records()) rows.push_back(&r);
    } else {
      for (const auto* ids : {&e.biased_ids, &e.nonbiased_ids}) {
        for (const auto& id : *ids) {
          const auto* r = dataset.find(id);
          if (!r) throw Error(Errc::InvalidArgument, id, "expert references an unknown id");
          rows.push_back(r);
        }
      }
    }
    std::ostringstream body;
    write_dataset(body, rows);
    const std::string content = body.str();

    ExpertFileEntry entry;
    entry.expert_id = e.expert_id;
    entry.file = "expert_" + std::to_string(e.expert_id) + ".jsonl";
    entry.n_biased = e.biased_ids.size();
    entry.n_nonbiased = e.nonbiased_ids.size();
    entry.sha256 = sha256_hex(content);
    detail::write_file_atomic(out_dir / entry.file, content);
    manifest.experts.push_back(std::move(entry));
  }

  ordered_json j;
  j["seed"] = manifest.seed;
  j["k"] = manifest.k;
  j["experts"] = ordered_json::array();
  for (const auto& e : manifest.experts) {
    ordered_json row;
    row["expert_id"] = e.expert_id;
    row["file"] = e.file;
    row["n_biased"] = e.n_biased;
    row["n_nonbiased"] = e.n_nonbiased;
    row["ratio"] = e.n_biased == 0 ? 0.0
                                   : static_cast<double>(e.n_nonbiased) / static_cast<double>(e.n_biased);
    row["sha256"] = e.sha256;
    j["experts"].push_back(std::move(row));
  }
  detail::write_file_atomic(out_dir / "manifest.json", j.dump(2) + "\n");
  return manifest;
}

}  // namespace debias
