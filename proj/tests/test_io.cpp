#include <catch2/catch_amalgamated.hpp>

#include <crowdq/io.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fuzz.hpp"

using namespace crowdq;

namespace {

CorpusConfig closed_ab() {
  CorpusConfig config;
  config.task_type = TaskType::Closed;
  config.vocabulary = {"A", "B"};
  return config;
}

}  // namespace

TEST_CASE("JSONL rows parse into judgments") {
  std::istringstream in(R"({"worker":"w1","unit":"u1","annotations":["A"]})"
                        "\n"
                        R"({"worker":"w2","unit":"u1","annotations":["B","A"]})"
                        "\n");
  auto parsed = parse_judgments(in, InputFormat::Jsonl, closed_ab());
  REQUIRE(parsed.judgments.size() == 2);
  CHECK(parsed.judgments[0].worker == "w1");
  CHECK(parsed.judgments[0].unit == "u1");
  CHECK(parsed.judgments[0].annotations == std::vector<std::string>{"A"});
  CHECK(parsed.judgments[1].annotations == std::vector<std::string>{"A", "B"});
  CHECK(parsed.judgments[1].line == 2);
  CHECK(parsed.warnings.empty());
}

TEST_CASE("CSV rows parse with pipe-separated labels") {
  std::istringstream in("worker,unit,annotations\nw2,u1,A|B\nw3,u1,B\n");
  auto parsed = parse_judgments(in, InputFormat::Csv, closed_ab());
  REQUIRE(parsed.judgments.size() == 2);
  CHECK(parsed.judgments[0].worker == "w2");
  CHECK(parsed.judgments[0].annotations == std::vector<std::string>{"A", "B"});
}

TEST_CASE("CSV requires the exact header") {
  std::istringstream in("unit,worker,annotations\nw1,u1,A\n");
  CHECK_THROWS_AS(parse_judgments(in, InputFormat::Csv, closed_ab()), ParseError);
}

TEST_CASE("malformed rows report their line number") {
  std::istringstream in(R"({"worker":"w1","unit":"u1","annotations":["A"]})"
                        "\nnot json\n");
  try {
    parse_judgments(in, InputFormat::Jsonl, closed_ab());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }
}

TEST_CASE("empty annotation arrays are rejected with their line") {
  std::istringstream in(R"({"worker":"w1","unit":"u1","annotations":[]})"
                        "\n");
  try {
    parse_judgments(in, InputFormat::Jsonl, closed_ab());
    FAIL("expected EmptyAnnotationsError");
  } catch (const EmptyAnnotationsError& e) {
    CHECK(e.line == 1);
  }
}

TEST_CASE("closed-task parsing checks the vocabulary per row") {
  std::istringstream in(R"({"worker":"w1","unit":"u1","annotations":["A"]})"
                        "\n"
                        R"({"worker":"w2","unit":"u1","annotations":["C"]})"
                        "\n");
  try {
    parse_judgments(in, InputFormat::Jsonl, closed_ab());
    FAIL("expected UnknownLabelError");
  } catch (const UnknownLabelError& e) {
    CHECK(e.label == "C");
    CHECK(e.line == 2);
  }
}

TEST_CASE("duplicate judgments merge by union under the default policy") {
  std::istringstream in(R"({"worker":"w1","unit":"u1","annotations":["A"]})"
                        "\n"
                        R"({"worker":"w1","unit":"u1","annotations":["B"]})"
                        "\n");
  auto parsed = parse_judgments(in, InputFormat::Jsonl, closed_ab());
  REQUIRE(parsed.judgments.size() == 1);
  CHECK(parsed.judgments[0].annotations == std::vector<std::string>{"A", "B"});
  REQUIRE(parsed.warnings.size() == 1);
  CHECK(parsed.warnings[0].find("merged duplicate") != std::string::npos);
}

TEST_CASE("duplicate judgments throw under the reject policy") {
  auto config = closed_ab();
  config.duplicates = DuplicatePolicy::Reject;
  std::istringstream in(R"({"worker":"w1","unit":"u1","annotations":["A"]})"
                        "\n"
                        R"({"worker":"w1","unit":"u1","annotations":["B"]})"
                        "\n");
  CHECK_THROWS_AS(parse_judgments(in, InputFormat::Jsonl, config), DuplicateJudgmentError);
}

TEST_CASE("validation drops under-staffed units and records them") {
  std::vector<Judgment> judgments{
      make_judgment("w1", "u1", {"A"}), make_judgment("w2", "u1", {"B"}),
      make_judgment("w1", "u2", {"A"})};  // u2 has one worker
  auto validated = validate_corpus(judgments, closed_ab());
  CHECK(validated.judgments.size() == 2);
  CHECK(validated.excluded_units == std::vector<std::string>{"u2"});
  CHECK(validated.unit_worker_counts.at("u1") == 2);
  REQUIRE(validated.warnings.size() == 1);
  CHECK(validated.warnings[0].find("u2") != std::string::npos);
}

TEST_CASE("validation fails when nothing survives") {
  std::vector<Judgment> judgments{make_judgment("w1", "u1", {"A"})};
  CHECK_THROWS_AS(validate_corpus(judgments, closed_ab()), EmptyCorpusError);
}

TEST_CASE("validation rejects stray labels") {
  std::vector<Judgment> judgments{make_judgment("w1", "u1", {"A"}),
                                  make_judgment("w2", "u1", {"Z"})};
  CHECK_THROWS_AS(validate_corpus(judgments, closed_ab()), UnknownLabelError);
}

TEST_CASE("report JSON round-trips every score exactly") {
  auto fuzz = testutil::fuzz_corpus(42);
  auto corpus = vectorize_corpus(fuzz.judgments, fuzz.schema);
  auto report = solve(corpus);

  std::stringstream buffer;
  write_report_json(report, buffer);
  auto back = read_report_json(buffer);

  CHECK(back.task_type == report.task_type);
  CHECK(back.iterations_used == report.iterations_used);
  CHECK(back.converged == report.converged);
  CHECK(back.convergence_trace == report.convergence_trace);
  CHECK(back.units == report.units);
  CHECK(back.annotations == report.annotations);
  CHECK(back.uas == report.uas);
  CHECK(back.warnings == report.warnings);
  for (const auto& [worker, q] : report.workers) {
    CHECK(back.workers.at(worker).wqs == q.wqs);
    CHECK(back.workers.at(worker).wwa == q.wwa);
    CHECK(back.workers.at(worker).wua == q.wua);
  }
}

TEST_CASE("CSV report directory carries the fixed headers") {
  auto fuzz = testutil::fuzz_corpus(43);
  auto corpus = vectorize_corpus(fuzz.judgments, fuzz.schema);
  auto report = solve(corpus);

  auto dir = std::filesystem::temp_directory_path() / "crowdq_csv_test";
  std::filesystem::remove_all(dir);
  write_report_csv(report, dir);

  auto first_line = [&](const char* name) {
    std::ifstream f(dir / name);
    std::string line;
    std::getline(f, line);
    return line;
  };
  CHECK(first_line("units.csv") == "unit,uqs");
  CHECK(first_line("workers.csv") == "worker,wqs,wwa,wua");
  CHECK(first_line("annotations.csv") == "annotation,aqs");
  CHECK(first_line("uas.csv") == "unit,annotation,uas");

  // Row counts match the report contents (plus one header line each).
  auto line_count = [&](const char* name) {
    std::ifstream f(dir / name);
    std::string line;
    std::size_t n = 0;
    while (std::getline(f, line)) ++n;
    return n;
  };
  CHECK(line_count("units.csv") == report.units.size() + 1);
  CHECK(line_count("workers.csv") == report.workers.size() + 1);
  CHECK(line_count("annotations.csv") == report.annotations.size() + 1);
  std::size_t uas_rows = 0;
  for (const auto& [unit, scores] : report.uas) uas_rows += scores.size();
  CHECK(line_count("uas.csv") == uas_rows + 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("CSV scores parse back to the exact stored doubles") {
  CHECK(format_score(1.0) == "1");
  CHECK(format_score(0.5) == "0.5");
  const double value = 0.123456789012345678;
  CHECK(std::stod(format_score(value)) == value);
}

TEST_CASE("analyze runs the full pipeline and merges warnings") {
  std::istringstream in(R"({"worker":"w1","unit":"u1","annotations":["A"]})"
                        "\n"
                        R"({"worker":"w2","unit":"u1","annotations":["A"]})"
                        "\n"
                        R"({"worker":"w1","unit":"u2","annotations":["B"]})"
                        "\n");
  auto report = analyze(in, InputFormat::Jsonl, closed_ab());
  CHECK(report.converged);
  CHECK(report.units.count("u1") == 1);
  CHECK(report.units.count("u2") == 0);  // excluded: single worker
  bool mentions_excluded = false;
  for (const auto& w : report.warnings)
    if (w.find("excluded unit: u2") != std::string::npos) mentions_excluded = true;
  CHECK(mentions_excluded);
  for (const auto& [worker, q] : report.workers) CHECK(q.wqs == 1.0);
}

TEST_CASE("open-task reports pin every annotation to quality 1") {
  std::istringstream in(R"({"worker":"w1","unit":"u1","annotations":["cat"]})"
                        "\n"
                        R"({"worker":"w2","unit":"u1","annotations":["cat","dog"]})"
                        "\n");
  CorpusConfig config;
  config.task_type = TaskType::Open;
  auto report = analyze(in, InputFormat::Jsonl, config);
  REQUIRE(report.annotations.size() == 2);
  CHECK(report.annotations.at("cat") == 1.0);
  CHECK(report.annotations.at("dog") == 1.0);
}
