/**
 * Corpus ingestion (JSONL / CSV), validation against a task schema, and
 * quality-report serialization.
 *
 * JSONL is the canonical input format: one object per line with string
 * fields "worker" and "unit" and a non-empty string array "annotations".
 * CSV is a convenience alias with the fixed header `worker,unit,annotations`
 * and pipe-separated labels; labels containing '|' or ',' need JSONL.
 */
#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "crowdq/metrics.hpp"
#include "crowdq/model.hpp"

namespace crowdq {

enum class InputFormat { Jsonl, Csv };
enum class DuplicatePolicy { MergeUnion, Reject };

struct ParseError : Error {
  ParseError(std::size_t line_, const std::string& reason)
      : Error("parse error on line " + std::to_string(line_) + ": " + reason),
        line(line_) {}

  std::size_t line;
};

struct DuplicateJudgmentError : Error {
  DuplicateJudgmentError(std::string worker_, std::string unit_, std::size_t line_)
      : Error("duplicate judgment for worker '" + worker_ + "' on unit '" + unit_ +
              "' (line " + std::to_string(line_) + ")"),
        worker(std::move(worker_)),
        unit(std::move(unit_)),
        line(line_) {}

  std::string worker;
  std::string unit;
  std::size_t line;
};

struct CorpusConfig {
  TaskType task_type = TaskType::Closed;
  std::vector<std::string> vocabulary;  // Closed only
  int min_workers_per_unit = 2;
  DuplicatePolicy duplicates = DuplicatePolicy::MergeUnion;

  TaskSchema schema() const { return TaskSchema{task_type, vocabulary}; }
};

struct ParsedJudgments {
  std::vector<Judgment> judgments;  // input order, duplicates already merged
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (true) {
    auto pos = s.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline bool blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

inline Judgment parse_jsonl_row(const std::string& line, std::size_t lineno) {
  nlohmann::json row;
  try {
    row = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
  }
  if (!row.is_object()) throw ParseError(lineno, "expected a JSON object");
  if (!row.contains("worker") || !row["worker"].is_string())
    throw ParseError(lineno, "missing or non-string field 'worker'");
  if (!row.contains("unit") || !row["unit"].is_string())
    throw ParseError(lineno, "missing or non-string field 'unit'");
  if (!row.contains("annotations") || !row["annotations"].is_array())
    throw ParseError(lineno, "missing or non-array field 'annotations'");

  std::vector<std::string> labels;
  for (const auto& item : row["annotations"]) {
    if (!item.is_string())
      throw ParseError(lineno, "'annotations' must contain only strings");
    labels.push_back(item.get<std::string>());
  }
  if (labels.empty()) throw EmptyAnnotationsError(lineno);
  const auto worker = row["worker"].get<std::string>();
  const auto unit = row["unit"].get<std::string>();
  if (worker.empty()) throw ParseError(lineno, "empty 'worker' identifier");
  if (unit.empty()) throw ParseError(lineno, "empty 'unit' identifier");
  for (const auto& label : labels)
    if (label.empty()) throw ParseError(lineno, "empty annotation label");
  return make_judgment(worker, unit, std::move(labels), lineno);
}

inline Judgment parse_csv_row(const std::string& line, std::size_t lineno) {
  const auto fields = split(line, ',');
  if (fields.size() != 3)
    throw ParseError(lineno, "expected 3 comma-separated fields, got " +
                                 std::to_string(fields.size()));
  if (fields[0].empty()) throw ParseError(lineno, "empty 'worker' identifier");
  if (fields[1].empty()) throw ParseError(lineno, "empty 'unit' identifier");
  if (fields[2].empty()) throw EmptyAnnotationsError(lineno);
  auto labels = split(fields[2], '|');
  for (const auto& label : labels)
    if (label.empty()) throw ParseError(lineno, "empty annotation label");
  return make_judgment(fields[0], fields[1], std::move(labels), lineno);
}

}  // namespace detail

/// Reads one judgment per row. Duplicate (worker, unit) rows are merged by
/// annotation union (with a warning) or rejected, per the configured policy.
/// Closed-task labels are checked against the vocabulary as rows are read,
/// so errors carry the offending line.
inline ParsedJudgments parse_judgments(std::istream& in, InputFormat format,
                                       const CorpusConfig& config) {
  ParsedJudgments out;
  std::set<std::string> vocabulary(config.vocabulary.begin(), config.vocabulary.end());
  std::map<std::pair<std::string, std::string>, std::size_t> index_of;
  std::string line;
  std::size_t lineno = 0;
  bool saw_header = false;

  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (format == InputFormat::Csv && !saw_header) {
      if (line != "worker,unit,annotations")
        throw ParseError(lineno, "expected header 'worker,unit,annotations'");
      saw_header = true;
      continue;
    }
    if (detail::blank(line)) continue;

    Judgment j = format == InputFormat::Jsonl ? detail::parse_jsonl_row(line, lineno)
                                              : detail::parse_csv_row(line, lineno);
    if (config.task_type == TaskType::Closed)
      for (const auto& label : j.annotations)
        if (!vocabulary.count(label)) throw UnknownLabelError(label, j.unit, lineno);

    const auto key = std::make_pair(j.worker, j.unit);
    auto it = index_of.find(key);
    if (it == index_of.end()) {
      index_of.emplace(key, out.judgments.size());
      out.judgments.push_back(std::move(j));
      continue;
    }
    if (config.duplicates == DuplicatePolicy::Reject)
      throw DuplicateJudgmentError(j.worker, j.unit, lineno);
    Judgment& existing = out.judgments[it->second];
    std::vector<std::string> merged = existing.annotations;
    merged.insert(merged.end(), j.annotations.begin(), j.annotations.end());
    existing = make_judgment(existing.worker, existing.unit, std::move(merged),
                             existing.line);
    out.warnings.push_back("merged duplicate judgment: worker=" + existing.worker +
                           " unit=" + existing.unit + " (line " +
                           std::to_string(lineno) + ")");
  }
  return out;
}

struct ValidatedCorpus {
  TaskSchema schema;
  std::vector<Judgment> judgments;  // surviving judgments, input order
  std::map<std::string, int> unit_worker_counts;  // surviving units
  std::vector<std::string> excluded_units;        // sorted
  std::vector<std::string> warnings;
};

/// Drops units with fewer than min_workers_per_unit distinct workers
/// (each exclusion is recorded) and re-checks labels and duplicates.
inline ValidatedCorpus validate_corpus(std::vector<Judgment> judgments,
                                       const CorpusConfig& config) {
  check_schema(config.schema());
  if (config.min_workers_per_unit < 2)
    throw ValidationError("min_workers_per_unit must be at least 2");

  ValidatedCorpus out;
  out.schema = config.schema();

  std::set<std::string> vocabulary(config.vocabulary.begin(), config.vocabulary.end());
  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, std::set<std::string>> unit_workers;
  for (const auto& j : judgments) {
    if (j.annotations.empty()) throw EmptyAnnotationsError(j.line);
    if (config.task_type == TaskType::Closed)
      for (const auto& label : j.annotations)
        if (!vocabulary.count(label)) throw UnknownLabelError(label, j.unit, j.line);
    if (!seen.insert({j.worker, j.unit}).second) {
      if (config.duplicates == DuplicatePolicy::Reject)
        throw DuplicateJudgmentError(j.worker, j.unit, j.line);
      throw ValidationError("duplicate judgment for worker '" + j.worker +
                            "' on unit '" + j.unit +
                            "': merge duplicates before validation");
    }
    unit_workers[j.unit].insert(j.worker);
  }

  std::set<std::string> excluded;
  for (const auto& [unit, workers] : unit_workers) {
    if (static_cast<int>(workers.size()) < config.min_workers_per_unit) {
      excluded.insert(unit);
      out.warnings.push_back("excluded unit: " + unit + " (" +
                             std::to_string(workers.size()) + " worker(s), minimum " +
                             std::to_string(config.min_workers_per_unit) + ")");
    } else {
      out.unit_worker_counts[unit] = static_cast<int>(workers.size());
    }
  }
  out.excluded_units.assign(excluded.begin(), excluded.end());

  for (auto& j : judgments)
    if (!excluded.count(j.unit)) out.judgments.push_back(std::move(j));
  if (out.judgments.empty())
    throw EmptyCorpusError("no units survived validation");
  return out;
}

/// Shortest round-trip decimal rendering, as used in the CSV reports.
inline std::string format_score(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string quoted = "\"";
  for (char c : field) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

}  // namespace detail

inline void write_report_json(const QualityReport& report, std::ostream& out) {
  nlohmann::json doc;
  for (const auto& [unit, score] : report.units) doc["units"][unit] = score;
  for (const auto& [worker, q] : report.workers)
    doc["workers"][worker] = {{"wqs", q.wqs}, {"wwa", q.wwa}, {"wua", q.wua}};
  for (const auto& [label, score] : report.annotations)
    doc["annotations"][label] = score;
  for (const auto& [unit, scores] : report.uas)
    for (const auto& [label, score] : scores) doc["uas"][unit][label] = score;
  doc["meta"] = {{"task_type", report.task_type == TaskType::Closed ? "closed" : "open"},
                 {"iterations", report.iterations_used},
                 {"converged", report.converged},
                 {"convergence_trace", report.convergence_trace},
                 {"warnings", report.warnings}};
  out << doc.dump(2) << '\n';
}

inline QualityReport read_report_json(std::istream& in) {
  QualityReport report;
  try {
    const auto doc = nlohmann::json::parse(in);
    const auto& meta = doc.at("meta");
    report.task_type = meta.at("task_type").get<std::string>() == "open"
                           ? TaskType::Open
                           : TaskType::Closed;
    report.iterations_used = meta.at("iterations").get<int>();
    report.converged = meta.at("converged").get<bool>();
    report.convergence_trace = meta.at("convergence_trace").get<std::vector<double>>();
    report.warnings = meta.at("warnings").get<std::vector<std::string>>();
    for (const auto& [unit, score] : doc.at("units").items())
      report.units[unit] = score.get<double>();
    for (const auto& [worker, q] : doc.at("workers").items())
      report.workers[worker] = WorkerQuality{q.at("wqs").get<double>(),
                                             q.at("wwa").get<double>(),
                                             q.at("wua").get<double>()};
    for (const auto& [label, score] : doc.at("annotations").items())
      report.annotations[label] = score.get<double>();
    if (doc.contains("uas"))
      for (const auto& [unit, scores] : doc.at("uas").items())
        for (const auto& [label, score] : scores.items())
          report.uas[unit][label] = score.get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid report JSON: ") + e.what());
  }
  return report;
}

/// Writes units.csv, workers.csv, annotations.csv, and uas.csv into dir.
inline void write_report_csv(const QualityReport& report,
                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw Error(std::string("cannot open ") + (dir / name).string() +
                        " for writing");
    return f;
  };

  {
    auto f = open("units.csv");
    f << "unit,uqs\n";
    for (const auto& [unit, score] : report.units)
      f << detail::csv_escape(unit) << ',' << format_score(score) << '\n';
  }
  {
    auto f = open("workers.csv");
    f << "worker,wqs,wwa,wua\n";
    for (const auto& [worker, q] : report.workers)
      f << detail::csv_escape(worker) << ',' << format_score(q.wqs) << ','
        << format_score(q.wwa) << ',' << format_score(q.wua) << '\n';
  }
  {
    auto f = open("annotations.csv");
    f << "annotation,aqs\n";
    for (const auto& [label, score] : report.annotations)
      f << detail::csv_escape(label) << ',' << format_score(score) << '\n';
  }
  {
    auto f = open("uas.csv");
    f << "unit,annotation,uas\n";
    for (const auto& [unit, scores] : report.uas)
      for (const auto& [label, score] : scores)
        f << detail::csv_escape(unit) << ',' << detail::csv_escape(label) << ','
          << format_score(score) << '\n';
  }
}

/// Full pipeline: parse, validate, vectorize, solve. Parse and validation
/// warnings are prepended to the solver's warnings in the final report.
inline QualityReport analyze(std::istream& in, InputFormat format,
                             const CorpusConfig& corpus_config,
                             const SolverConfig& solver_config = {},
                             const IterationObserver& observer = {}) {
  auto parsed = parse_judgments(in, format, corpus_config);
  auto validated = validate_corpus(std::move(parsed.judgments), corpus_config);
  auto corpus = vectorize_corpus(validated.judgments, validated.schema);
  SolverConfig effective = solver_config;
  effective.min_workers_per_unit = corpus_config.min_workers_per_unit;
  auto report = solve(corpus, effective, observer);

  std::vector<std::string> warnings = std::move(parsed.warnings);
  warnings.insert(warnings.end(), validated.warnings.begin(), validated.warnings.end());
  warnings.insert(warnings.end(), report.warnings.begin(), report.warnings.end());
  report.warnings = std::move(warnings);
  return report;
}

}  // namespace crowdq
