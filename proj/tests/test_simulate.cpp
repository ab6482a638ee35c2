#include <catch2/catch_amalgamated.hpp>

#include <crowdq/simulate.hpp>

#include <map>
#include <set>
#include <sstream>

using namespace crowdq;

namespace {

CrowdSpec base_spec() {
  CrowdSpec spec;
  spec.n_workers = 4;
  spec.n_units = 6;
  spec.judgments_per_unit = 3;
  spec.vocabulary = {"A", "B", "C"};
  spec.worker_reliabilities = {1.0, 1.0, 1.0, 1.0};
  spec.unit_distributions.assign(6, {1.0, 0.0, 0.0});
  spec.seed = 42;
  return spec;
}

}  // namespace

TEST_CASE("fully reliable workers on degenerate units always follow the plant") {
  auto corpus = generate(base_spec());
  REQUIRE(corpus.judgments.size() == 18);
  for (const auto& j : corpus.judgments)
    CHECK(j.annotations == std::vector<std::string>{"A"});
}

TEST_CASE("each unit is staffed with distinct workers, round-robin") {
  auto spec = base_spec();
  auto corpus = generate(spec);
  std::map<std::string, std::set<std::string>> staff;
  for (const auto& j : corpus.judgments) staff[j.unit].insert(j.worker);
  REQUIRE(staff.size() == 6);
  for (const auto& [unit, workers] : staff)
    CHECK(workers.size() == static_cast<std::size_t>(spec.judgments_per_unit));
}

TEST_CASE("identical seeds give byte-identical corpora") {
  auto a = generate(base_spec());
  auto b = generate(base_spec());
  std::ostringstream ja, jb;
  write_judgments_jsonl(a.judgments, ja);
  write_judgments_jsonl(b.judgments, jb);
  CHECK(ja.str() == jb.str());
  CHECK(a.plant == b.plant);

  // With real randomness in play, the seed must matter.
  auto noisy = base_spec();
  noisy.worker_reliabilities.assign(4, 0.5);
  std::ostringstream jc, jd;
  write_judgments_jsonl(generate(noisy).judgments, jc);
  noisy.seed = 43;
  write_judgments_jsonl(generate(noisy).judgments, jd);
  CHECK(jc.str() != jd.str());
}

TEST_CASE("zero-reliability draws are uniform over the vocabulary") {
  CrowdSpec spec;
  spec.n_workers = 2;
  spec.n_units = 5000;
  spec.judgments_per_unit = 2;
  spec.vocabulary = {"A", "B", "C", "D"};
  spec.worker_reliabilities = {0.0, 0.0};
  spec.unit_distributions.assign(5000, {1.0, 0.0, 0.0, 0.0});
  spec.seed = 7;

  auto corpus = generate(spec);
  std::map<std::string, long> counts;
  for (const auto& j : corpus.judgments) counts[j.annotations.front()] += 1;
  const double expected = 10000.0 / 4.0;
  double chi_square = 0.0;
  for (const auto& label : spec.vocabulary) {
    const double diff = static_cast<double>(counts[label]) - expected;
    chi_square += diff * diff / expected;
  }
  // df = 3, alpha = 0.001 critical value.
  CHECK(chi_square < 16.266);
}

TEST_CASE("planted distributions are sampled with the right frequencies") {
  CrowdSpec spec;
  spec.n_workers = 2;
  spec.n_units = 5000;
  spec.judgments_per_unit = 2;
  spec.vocabulary = {"A", "B", "C", "D"};
  spec.worker_reliabilities = {1.0, 1.0};
  spec.unit_distributions.assign(5000, {0.5, 0.25, 0.125, 0.125});
  spec.seed = 11;

  auto corpus = generate(spec);
  std::map<std::string, long> counts;
  for (const auto& j : corpus.judgments) counts[j.annotations.front()] += 1;
  const double n = 10000.0;
  double chi_square = 0.0;
  const std::vector<double> expected{0.5, 0.25, 0.125, 0.125};
  for (std::size_t a = 0; a < 4; ++a) {
    const double e = expected[a] * n;
    const double diff = static_cast<double>(counts[spec.vocabulary[a]]) - e;
    chi_square += diff * diff / e;
  }
  CHECK(chi_square < 16.266);
}

TEST_CASE("invalid specs are rejected") {
  auto spec = base_spec();
  spec.judgments_per_unit = 5;  // exceeds n_workers
  CHECK_THROWS_AS(generate(spec), SpecError);

  spec = base_spec();
  spec.unit_distributions[0] = {0.7, 0.7, 0.0};
  CHECK_THROWS_AS(generate(spec), SpecError);

  spec = base_spec();
  spec.worker_reliabilities[2] = 1.5;
  CHECK_THROWS_AS(generate(spec), SpecError);

  spec = base_spec();
  spec.unit_distributions.pop_back();
  CHECK_THROWS_AS(generate(spec), SpecError);
}

TEST_CASE("crowd specs parse from JSON with scalar broadcasts") {
  auto doc = nlohmann::json::parse(R"({
    "n_workers": 3,
    "n_units": 4,
    "judgments_per_unit": 3,
    "vocabulary": ["A", "B"],
    "worker_reliabilities": 0.9,
    "unit_distributions": [1.0, 0.0],
    "seed": 5
  })");
  auto spec = crowd_spec_from_json(doc);
  CHECK(spec.worker_reliabilities == std::vector<double>(3, 0.9));
  REQUIRE(spec.unit_distributions.size() == 4);
  CHECK(spec.unit_distributions[3] == std::vector<double>{1.0, 0.0});

  doc["judgments_per_unit"] = 99;
  CHECK_THROWS_AS(crowd_spec_from_json(doc), SpecError);
  doc.erase("seed");
  CHECK_THROWS_AS(crowd_spec_from_json(doc), SpecError);
}

TEST_CASE("plant record mirrors the resolved spec") {
  auto spec = base_spec();
  auto corpus = generate(spec);
  CHECK(corpus.plant.at("seed").get<std::uint64_t>() == 42);
  CHECK(corpus.plant.at("workers").size() == 4);
  CHECK(corpus.plant.at("units").size() == 6);
  CHECK(corpus.plant.at("workers").at("w0").get<double>() == 1.0);
  CHECK(corpus.plant.at("units").at("u0").at("A").get<double>() == 1.0);
}
