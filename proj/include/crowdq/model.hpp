/**
 * Corpus data model: raw judgments, per-unit answer spaces, and the
 * binary vector representation the metrics operate on.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crowdq {

enum class TaskType { Closed, Open };

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A closed-task judgment used a label that is not in the vocabulary.
struct UnknownLabelError : Error {
  UnknownLabelError(std::string label_, std::string unit_, std::size_t line_ = 0)
      : Error(message(label_, unit_, line_)),
        label(std::move(label_)),
        unit(std::move(unit_)),
        line(line_) {}

  std::string label;
  std::string unit;
  std::size_t line;

 private:
  static std::string message(const std::string& label, const std::string& unit,
                             std::size_t line) {
    std::string m = "unknown label '" + label + "' (unit '" + unit + "'";
    if (line > 0) m += ", line " + std::to_string(line);
    return m + "): not in the task vocabulary";
  }
};

struct DimensionMismatchError : Error {
  DimensionMismatchError(std::size_t expected_, std::size_t got_)
      : Error("vector length mismatch: expected " + std::to_string(expected_) +
              ", got " + std::to_string(got_)),
        expected(expected_),
        got(got_) {}

  std::size_t expected;
  std::size_t got;
};

/// A judgment with an empty annotation set. Tasks that allow "no answer"
/// must model it as an explicit label.
struct EmptyAnnotationsError : Error {
  explicit EmptyAnnotationsError(std::size_t line_ = 0)
      : Error(line_ > 0 ? "empty annotation set (line " + std::to_string(line_) + ")"
                        : "empty annotation set"),
        line(line_) {}

  std::size_t line;
};

struct ValidationError : Error {
  using Error::Error;
};

struct EmptyCorpusError : Error {
  using Error::Error;
};

/// One worker's submission on one media unit. Annotations are kept
/// sorted and deduplicated.
struct Judgment {
  std::string worker;
  std::string unit;
  std::vector<std::string> annotations;  // sorted, distinct, non-empty
  std::size_t line = 0;                  // 1-based source line, 0 when synthetic
};

inline Judgment make_judgment(std::string worker, std::string unit,
                              std::vector<std::string> annotations,
                              std::size_t line = 0) {
  std::sort(annotations.begin(), annotations.end());
  annotations.erase(std::unique(annotations.begin(), annotations.end()),
                    annotations.end());
  if (annotations.empty()) throw EmptyAnnotationsError(line);
  for (const auto& label : annotations)
    if (label.empty())
      throw ValidationError(line > 0
                                ? "empty annotation label (line " + std::to_string(line) + ")"
                                : "empty annotation label");
  return Judgment{std::move(worker), std::move(unit), std::move(annotations), line};
}

struct TaskSchema {
  TaskType type = TaskType::Closed;
  std::vector<std::string> vocabulary;  // Closed: >= 2 distinct labels; Open: empty
};

inline void check_schema(const TaskSchema& schema) {
  if (schema.type == TaskType::Closed) {
    if (schema.vocabulary.size() < 2)
      throw ValidationError("closed tasks need a vocabulary of at least 2 labels");
    std::set<std::string> distinct(schema.vocabulary.begin(), schema.vocabulary.end());
    if (distinct.size() != schema.vocabulary.size())
      throw ValidationError("closed-task vocabulary contains duplicate labels");
    if (distinct.count(std::string{}))
      throw ValidationError("closed-task vocabulary contains an empty label");
  } else if (!schema.vocabulary.empty()) {
    throw ValidationError("open tasks must not declare a vocabulary");
  }
}

/// The ordered annotation vocabulary of one unit. Closed tasks share the
/// template vocabulary verbatim; open tasks get the sorted union of all
/// labels submitted on the unit.
struct AnswerSpace {
  std::string unit;
  std::vector<std::string> labels;

  int index_of(const std::string& label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
  }
};

/// WorkVec(i, u): one worker's selections on one unit as 0/1 bits in
/// answer-space order.
struct WorkerVector {
  std::string worker;
  std::string unit;
  std::vector<std::uint8_t> bits;
};

/// MediaUnitVec(u): element-wise sum of all worker vectors on the unit.
struct MediaUnitVector {
  std::string unit;
  std::vector<std::int32_t> counts;
};

inline AnswerSpace build_answer_space(std::span<const Judgment> judgments,
                                      const TaskSchema& schema) {
  if (judgments.empty())
    throw ValidationError("cannot build an answer space from zero judgments");
  const std::string& unit = judgments.front().unit;
  for (const auto& j : judgments)
    if (j.unit != unit)
      throw ValidationError("answer space input mixes units '" + unit + "' and '" +
                            j.unit + "'");

  if (schema.type == TaskType::Closed) {
    for (const auto& j : judgments)
      for (const auto& label : j.annotations)
        if (std::find(schema.vocabulary.begin(), schema.vocabulary.end(), label) ==
            schema.vocabulary.end())
          throw UnknownLabelError(label, unit, j.line);
    return AnswerSpace{unit, schema.vocabulary};
  }

  std::set<std::string> labels;
  for (const auto& j : judgments)
    labels.insert(j.annotations.begin(), j.annotations.end());
  return AnswerSpace{unit, std::vector<std::string>(labels.begin(), labels.end())};
}

inline WorkerVector vectorize_judgment(const Judgment& judgment,
                                       const AnswerSpace& space) {
  if (judgment.annotations.empty()) throw EmptyAnnotationsError(judgment.line);
  WorkerVector v{judgment.worker, judgment.unit,
                 std::vector<std::uint8_t>(space.labels.size(), 0)};
  for (const auto& label : judgment.annotations) {
    int k = space.index_of(label);
    if (k < 0) throw UnknownLabelError(label, judgment.unit, judgment.line);
    v.bits[static_cast<std::size_t>(k)] = 1;
  }
  return v;
}

inline MediaUnitVector unit_vector(std::span<const WorkerVector> vectors) {
  if (vectors.empty()) throw ValidationError("unit_vector: no worker vectors");
  MediaUnitVector m{vectors.front().unit,
                    std::vector<std::int32_t>(vectors.front().bits.size(), 0)};
  for (const auto& v : vectors) {
    if (v.unit != m.unit)
      throw ValidationError("unit_vector input mixes units '" + m.unit + "' and '" +
                            v.unit + "'");
    if (v.bits.size() != m.counts.size())
      throw DimensionMismatchError(m.counts.size(), v.bits.size());
    for (std::size_t k = 0; k < v.bits.size(); ++k) m.counts[k] += v.bits[k];
  }
  return m;
}

/// Per-unit slice of a vectorized corpus. Workers are listed by ascending
/// worker index; bits[k] is the vector of workers[k].
struct UnitData {
  std::string id;
  AnswerSpace space;
  std::vector<std::size_t> workers;
  std::vector<std::vector<std::uint8_t>> bits;
  std::vector<std::int32_t> counts;

  // Position of a worker within this unit; the worker must be on the unit.
  std::size_t worker_slot(std::size_t worker) const {
    auto it = std::lower_bound(workers.begin(), workers.end(), worker);
    if (it == workers.end() || *it != worker)
      throw ValidationError("worker is not on unit '" + id + "'");
    return static_cast<std::size_t>(it - workers.begin());
  }
};

/// The whole corpus in vector form. Identifier lists are sorted so that
/// every downstream summation has a fixed, reproducible order.
struct VectorizedCorpus {
  TaskType task_type = TaskType::Closed;
  std::vector<std::string> workers;  // sorted unique worker ids
  std::vector<std::string> units;    // sorted unique unit ids
  std::vector<std::string> labels;   // closed: vocabulary order; open: sorted union
  std::vector<UnitData> unit_data;   // parallel to units
  std::vector<std::vector<std::size_t>> worker_units;  // ascending unit indices
  std::vector<double> open_weights;  // all-ones buffer, sized to the largest space

  int worker_index(const std::string& id) const {
    auto it = std::lower_bound(workers.begin(), workers.end(), id);
    if (it == workers.end() || *it != id) return -1;
    return static_cast<int>(it - workers.begin());
  }

  int unit_index(const std::string& id) const {
    auto it = std::lower_bound(units.begin(), units.end(), id);
    if (it == units.end() || *it != id) return -1;
    return static_cast<int>(it - units.begin());
  }

  bool workers_share_units(std::size_t i, std::size_t j) const {
    const auto& a = worker_units[i];
    const auto& b = worker_units[j];
    std::size_t x = 0, y = 0;
    while (x < a.size() && y < b.size()) {
      if (a[x] == b[y]) return true;
      if (a[x] < b[y]) ++x; else ++y;
    }
    return false;
  }
};

inline VectorizedCorpus vectorize_corpus(std::span<const Judgment> judgments,
                                         const TaskSchema& schema) {
  check_schema(schema);
  if (judgments.empty()) throw EmptyCorpusError("corpus has no judgments");

  std::set<std::string> worker_ids, unit_ids;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& j : judgments) {
    if (j.annotations.empty()) throw EmptyAnnotationsError(j.line);
    if (!seen.insert({j.worker, j.unit}).second)
      throw ValidationError("duplicate judgment for worker '" + j.worker +
                            "' on unit '" + j.unit + "' (merge or reject upstream)");
    worker_ids.insert(j.worker);
    unit_ids.insert(j.unit);
  }

  VectorizedCorpus corpus;
  corpus.task_type = schema.type;
  corpus.workers.assign(worker_ids.begin(), worker_ids.end());
  corpus.units.assign(unit_ids.begin(), unit_ids.end());

  std::map<std::string, std::vector<Judgment>> per_unit;
  for (const auto& j : judgments) per_unit[j.unit].push_back(j);

  corpus.worker_units.resize(corpus.workers.size());
  corpus.unit_data.reserve(corpus.units.size());
  std::set<std::string> all_labels;
  std::size_t max_space = 0;

  for (std::size_t u = 0; u < corpus.units.size(); ++u) {
    auto& group = per_unit[corpus.units[u]];
    std::sort(group.begin(), group.end(),
              [](const Judgment& a, const Judgment& b) { return a.worker < b.worker; });

    UnitData ud;
    ud.id = corpus.units[u];
    ud.space = build_answer_space(group, schema);
    std::vector<WorkerVector> vectors;
    vectors.reserve(group.size());
    for (const auto& j : group) {
      const auto w = static_cast<std::size_t>(corpus.worker_index(j.worker));
      ud.workers.push_back(w);
      vectors.push_back(vectorize_judgment(j, ud.space));
      ud.bits.push_back(vectors.back().bits);
      corpus.worker_units[w].push_back(u);
    }
    ud.counts = unit_vector(vectors).counts;
    all_labels.insert(ud.space.labels.begin(), ud.space.labels.end());
    max_space = std::max(max_space, ud.space.labels.size());
    corpus.unit_data.push_back(std::move(ud));
  }

  if (schema.type == TaskType::Closed)
    corpus.labels = schema.vocabulary;
  else
    corpus.labels.assign(all_labels.begin(), all_labels.end());
  corpus.open_weights.assign(max_space, 1.0);
  return corpus;
}

}  // namespace crowdq
