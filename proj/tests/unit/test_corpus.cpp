#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "debias/corpus.hpp"
#include "debias/digest.hpp"
#include "debias/error.hpp"
#include "generators.hpp"
#include "test_paths.hpp"

using namespace debias;
using testing_paths::TempDir;

namespace {

Errc code_of_throw(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::InvalidArgument;
}

Dataset synthetic(std::size_t n_biased, std::size_t n_nonbiased) {
  std::vector<SentenceRecord> records;
  for (std::size_t i = 0; i < n_biased; ++i) {
    SentenceRecord r;
    r.id = "b" + std::to_string(i);
    r.text = "biased " + std::to_string(i);
    r.label = Label::Biased;
    r.bias_types = BiasVector::from_mask(1U + static_cast<unsigned>(i % 7));
    records.push_back(r);
  }
  for (std::size_t i = 0; i < n_nonbiased; ++i) {
    SentenceRecord r;
    r.id = "n" + std::to_string(i);
    r.text = "plain " + std::to_string(i);
    records.push_back(r);
  }
  return Dataset(std::move(records));
}

}  // namespace

TEST_CASE("minimal well-formed file loads two records in order") {
  std::istringstream in(
      R"({"id":"s1","text":"她是女生。","label":"B","bias_types":[1,0,0]})"
      "\n"
      R"({"id":"s2","text":"他去上班。","label":"N"})"
      "\n");
  const auto ds = read_dataset(in);
  REQUIRE(ds.size() == 2);
  CHECK(ds.records()[0].id == "s1");
  CHECK(ds.records()[0].bias_types == BiasVector(true, false, false));
  CHECK(ds.records()[1].label == Label::NonBiased);
  CHECK(ds.find("s2") == &ds.records()[1]);
  CHECK(ds.find("s3") == nullptr);
}

TEST_CASE("label and vector presence must agree") {
  CHECK(code_of_throw([] { parse_record(R"({"id":"s","text":"x","label":"N","bias_types":[1,0,0]})", 1); }) ==
        Errc::LabelVectorMismatch);
  CHECK(code_of_throw([] { parse_record(R"({"id":"s","text":"x","label":"B"})", 1); }) ==
        Errc::LabelVectorMismatch);
  CHECK(code_of_throw([] { parse_record(R"({"id":"s","text":"x","label":"B","bias_types":[0,0,0]})", 1); }) ==
        Errc::LabelVectorMismatch);
}

TEST_CASE("malformed lines carry their line number") {
  std::istringstream in("{\"id\":\"a\",\"text\":\"x\",\"label\":\"N\"}\n\nnot json\n");
  try {
    read_dataset(in);
    FAIL("expected MalformedLine");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MalformedLine);
    CHECK(e.subject() == "3");
  }
  CHECK(code_of_throw([] { parse_record(R"({"id":"s","text":"x","label":"maybe"})", 1); }) == Errc::MalformedLine);
  CHECK(code_of_throw([] { parse_record(R"({"id":"s","text":"x","label":"B","bias_types":[2,0,0]})", 1); }) ==
        Errc::MalformedLine);
  CHECK(code_of_throw([] { parse_record(R"({"id":"s","label":"N"})", 1); }) == Errc::MalformedLine);
  CHECK(code_of_throw([] { parse_record(R"({"id":"s","text":"","label":"N"})", 1); }) == Errc::MalformedLine);
}

TEST_CASE("duplicate ids are rejected") {
  std::istringstream in("{\"id\":\"a\",\"text\":\"x\",\"label\":\"N\"}\n{\"id\":\"a\",\"text\":\"y\",\"label\":\"N\"}\n");
  CHECK(code_of_throw([&] { read_dataset(in); }) == Errc::DuplicateId);
}

TEST_CASE("mitigation schema needs references on biased records") {
  const std::string line = R"({"id":"s","text":"x","label":"B","bias_types":[0,1,0]})";
  CHECK_NOTHROW(parse_record(line, 1, RecordSchema::Classification));
  CHECK(code_of_throw([&] { parse_record(line, 1, RecordSchema::Mitigation); }) == Errc::MalformedLine);
  const auto r = parse_record(R"({"id":"s","text":"x","label":"B","bias_types":[0,1,0],"reference":"y"})", 1,
                              RecordSchema::Mitigation);
  CHECK(r.reference == "y");
}

TEST_CASE("missing file is an IoFailure") {
  CHECK(code_of_throw([] { load_dataset("/nonexistent/path.jsonl"); }) == Errc::IoFailure);
}

TEST_CASE("serialisation round trips") {
  SentenceRecord r{"s9", "他\"说\"", Label::Biased, BiasVector(false, true, true), std::string("改写")};
  const auto line = serialize_record(r);
  const auto back = parse_record(line, 1);
  CHECK(back.id == r.id);
  CHECK(back.text == r.text);
  CHECK(back.bias_types == r.bias_types);
  CHECK(back.reference == r.reference);
  CHECK(serialize_record(back) == line);
  CHECK(to_string(BiasVector(true, false, true)) == "[1, 0, 1]");
}

TEST_CASE("dataset_stats") {
  CHECK(dataset_stats(Dataset{}) == SplitStats{});

  std::vector<SentenceRecord> rs;
  const BiasVector vs[] = {{true, false, false}, {true, true, false}, {false, false, true}};
  for (int i = 0; i < 3; ++i) rs.push_back({"b" + std::to_string(i), "t", Label::Biased, vs[i], std::nullopt});
  const auto s = dataset_stats(Dataset(rs));
  CHECK(s.n_biased == 3);
  CHECK(s.per_type_counts == std::array<std::size_t, 3>{2, 1, 1});

  const auto dev = dataset_stats(synthetic(516, 516));
  CHECK(dev.n_biased == 516);
  CHECK(dev.n_nonbiased == 516);
  CHECK(dev.n_total == 1032);
}

TEST_CASE("official-shaped rebalance") {
  const auto ds = synthetic(4172, 21418);
  CHECK(dataset_stats(ds).n_total == 25590);
  const auto experts = rebalance(ds, 5, 2025);
  REQUIRE(experts.size() == 6);
  std::vector<std::size_t> sizes;
  for (int i = 0; i < 5; ++i) {
    sizes.push_back(experts[i].nonbiased_ids.size());
    CHECK(experts[i].biased_ids.size() == 4172);
    CHECK(experts[i].ratio() >= 0.9);
    CHECK(experts[i].ratio() <= 1.1);
  }
  CHECK(sizes == std::vector<std::size_t>{4284, 4284, 4284, 4283, 4283});
  CHECK(experts[5].biased_ids.size() + experts[5].nonbiased_ids.size() == 25590);
  CHECK(experts[0].ratio() == doctest::Approx(4284.0 / 4172.0));
}

TEST_CASE("rebalance preconditions") {
  CHECK(code_of_throw([] { rebalance(synthetic(3, 0), 5, 1); }) == Errc::EmptyClass);
  CHECK(code_of_throw([] { rebalance(synthetic(0, 3), 5, 1); }) == Errc::EmptyClass);
  CHECK(code_of_throw([] { rebalance(synthetic(3, 3), 1, 1); }) == Errc::InvalidArgument);
}

TEST_CASE("partition property over random small fixtures") {
  gen::Source g(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto nb = 1 + g.below(20);
    const auto nn = 1 + g.below(80);
    const auto k = 2 + g.below(6);
    const auto seed = g.engine()();
    const auto ds = synthetic(nb, nn);
    const auto experts = rebalance(ds, k, seed);
    REQUIRE(experts.size() == k + 1);

    std::multiset<std::string> pooled;
    std::size_t lo = SIZE_MAX, hi = 0;
    for (std::size_t e = 0; e < k; ++e) {
      CHECK(experts[e].expert_id == static_cast<int>(e + 1));
      CHECK(experts[e].biased_ids.size() == nb);
      pooled.insert(experts[e].nonbiased_ids.begin(), experts[e].nonbiased_ids.end());
      lo = std::min(lo, experts[e].nonbiased_ids.size());
      hi = std::max(hi, experts[e].nonbiased_ids.size());
      if (e > 0) CHECK(experts[e].nonbiased_ids.size() <= experts[e - 1].nonbiased_ids.size());
    }
    CHECK(hi - lo <= 1);
    CHECK(pooled.size() == nn);
    std::set<std::string> unique(pooled.begin(), pooled.end());
    CHECK(unique.size() == nn);
    for (std::size_t i = 0; i < nn; ++i) CHECK(unique.count("n" + std::to_string(i)) == 1);

    const auto& full = experts[k];
    CHECK(full.biased_ids.size() == nb);
    CHECK(full.nonbiased_ids.size() == nn);
  }
}

TEST_CASE("seeded shuffle is a deterministic permutation") {
  std::vector<std::string> base;
  for (int i = 0; i < 50; ++i) base.push_back(std::to_string(i));
  auto a = base, b = base, c = base;
  seeded_shuffle(a, 7);
  seeded_shuffle(b, 7);
  seeded_shuffle(c, 8);
  CHECK(a == b);
  CHECK(a != c);
  std::sort(a.begin(), a.end());
  auto sorted = base;
  std::sort(sorted.begin(), sorted.end());
  CHECK(a == sorted);
}

TEST_CASE("export is byte-identical per seed and expert k+1 is seed-independent") {
  TempDir dir;
  const auto ds = synthetic(12, 57);
  const auto m1 = export_expert_datasets(ds, rebalance(ds, 5, 1), dir / "a");
  const auto m2 = export_expert_datasets(ds, rebalance(ds, 5, 1), dir / "b");
  const auto m3 = export_expert_datasets(ds, rebalance(ds, 5, 2), dir / "c");
  REQUIRE(m1.experts.size() == 6);
  CHECK(sha256_file(dir / "a/manifest.json") == sha256_file(dir / "b/manifest.json"));
  std::size_t total = 0;
  bool any_differs = false;
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(m1.experts[i].sha256 == m2.experts[i].sha256);
    CHECK(m1.experts[i].sha256 == sha256_file(dir / "a" / m1.experts[i].file));
    if (i < 5) {
      total += m1.experts[i].n_nonbiased;
      any_differs |= m1.experts[i].sha256 != m3.experts[i].sha256;
    }
  }
  CHECK(total == 57);
  CHECK(any_differs);
  CHECK(m1.experts[5].sha256 == m3.experts[5].sha256);

  const auto reloaded = load_dataset(dir / "a/expert_6.jsonl");
  CHECK(reloaded.size() == ds.size());
}
