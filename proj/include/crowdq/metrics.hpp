/**
 * Disagreement metrics over a vectorized corpus, plus the fixed-point
 * solver that mutually weights worker, media-unit, and annotation quality.
 *
 * Every score lives in [0, 1]. The solver initializes all scores to 1 and
 * re-evaluates the full set each iteration from the previous iteration's
 * snapshot only (Jacobi update), stopping once the summed L1 change of
 * UQS, WQS, and AQS drops below the configured threshold.
 *
 * Degenerate denominators never abort a run: the affected score retains
 * its previous value (or 0 for a zero-norm cosine) and a diagnostic is
 * recorded in the report warnings.
 */
#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "crowdq/model.hpp"

namespace crowdq {

struct SolverConfig {
  double threshold = 1e-4;      // stop once total variation drops below this
  int max_iterations = 1000;
  int min_workers_per_unit = 2;
  int threads = 1;              // results are bit-identical for any value
};

/// One Jacobi snapshot, index-aligned with the VectorizedCorpus id lists.
struct SolverState {
  std::vector<double> uqs;  // per unit
  std::vector<double> wqs;  // per worker
  std::vector<double> wwa;
  std::vector<double> wua;
  std::vector<double> aqs;  // per label (corpus.labels order)
};

inline SolverState initial_state(const VectorizedCorpus& corpus) {
  SolverState s;
  s.uqs.assign(corpus.units.size(), 1.0);
  s.wqs.assign(corpus.workers.size(), 1.0);
  s.wwa.assign(corpus.workers.size(), 1.0);
  s.wua.assign(corpus.workers.size(), 1.0);
  s.aqs.assign(corpus.labels.size(), 1.0);
  return s;
}

struct WorkerQuality {
  double wqs = 1.0;
  double wwa = 1.0;
  double wua = 1.0;
};

struct QualityReport {
  TaskType task_type = TaskType::Closed;
  std::map<std::string, double> units;                          // UQS
  std::map<std::string, WorkerQuality> workers;                 // WQS, WWA, WUA
  std::map<std::string, double> annotations;                    // AQS
  std::map<std::string, std::map<std::string, double>> uas;     // unit x label
  int iterations_used = 0;
  bool converged = false;
  std::vector<double> convergence_trace;  // total variation per iteration
  std::vector<std::string> warnings;
};

/// Called after each iteration with the snapshot that was read and the
/// freshly computed state.
using IterationObserver = std::function<void(
    int iteration, const SolverState& previous, const SolverState& current,
    double total_variation)>;

namespace detail {

inline void warn(std::vector<std::string>* sink, std::string message) {
  if (sink) sink->push_back(std::move(message));
}

/// Wcos weights for one unit: the AQS values for closed tasks, all ones
/// for open tasks (where annotation quality is 1 by definition).
inline std::span<const double> wcos_weights(const VectorizedCorpus& corpus,
                                            std::size_t unit, const SolverState& state) {
  if (corpus.task_type == TaskType::Closed) return {state.aqs};
  const std::size_t n = corpus.unit_data[unit].space.labels.size();
  return std::span<const double>(corpus.open_weights).first(n);
}

/// Runs fn(0..n-1); each index writes only its own output slot, so the
/// result does not depend on the thread count.
template <class Fn>
inline void parallel_for(std::size_t n, int threads, Fn&& fn) {
  std::size_t t = std::min<std::size_t>(std::max(threads, 1), n);
  if (t <= 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t w = 0; w < t; ++w)
    pool.emplace_back([&] {
      for (std::size_t k = next.fetch_add(1); k < n; k = next.fetch_add(1)) fn(k);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Wcos: cosine similarity with a per-coordinate weight applied to both
/// the dot product and the norms. Returns 0 (and sets *degenerate) when
/// either weighted norm vanishes.
template <class V1, class V2>
inline double weighted_cosine(const V1& v1, const V2& v2,
                              std::span<const double> weights,
                              bool* degenerate = nullptr) {
  if (v1.size() != weights.size()) throw DimensionMismatchError(weights.size(), v1.size());
  if (v2.size() != weights.size()) throw DimensionMismatchError(weights.size(), v2.size());
  double dot = 0.0, norm1 = 0.0, norm2 = 0.0;
  for (std::size_t a = 0; a < weights.size(); ++a) {
    const double x = static_cast<double>(v1[a]);
    const double y = static_cast<double>(v2[a]);
    const double w = weights[a];
    dot += x * y * w;
    norm1 += x * x * w;
    norm2 += y * y * w;
  }
  if (norm1 <= 0.0 || norm2 <= 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return std::min(1.0, dot / std::sqrt(norm1 * norm2));
}

/// UQS(u): average pairwise Wcos between the unit's workers, each pair
/// weighted by the product of the workers' quality scores.
inline double unit_quality(const VectorizedCorpus& corpus, std::size_t unit,
                           const SolverState& prev,
                           std::vector<std::string>* warnings = nullptr) {
  const UnitData& ud = corpus.unit_data[unit];
  const auto weights = detail::wcos_weights(corpus, unit, prev);
  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < ud.workers.size(); ++a) {
    for (std::size_t b = a + 1; b < ud.workers.size(); ++b) {
      bool degenerate = false;
      const double cos = weighted_cosine(ud.bits[a], ud.bits[b], weights, &degenerate);
      if (degenerate)
        detail::warn(warnings, "wcos degenerate: unit=" + ud.id + " workers=" +
                                   corpus.workers[ud.workers[a]] + "," +
                                   corpus.workers[ud.workers[b]]);
      const double pair_weight = prev.wqs[ud.workers[a]] * prev.wqs[ud.workers[b]];
      num += cos * pair_weight;
      den += pair_weight;
    }
  }
  if (den <= 0.0) {
    detail::warn(warnings, "degenerate weights: uqs unit=" + ud.id +
                               " (retained previous value)");
    return prev.uqs[unit];
  }
  return std::min(1.0, num / den);
}

/// WWA(i): average Wcos between worker i and every co-worker on every
/// shared unit, each (co-worker, unit) pair weighted by WQS(j) * UQS(u).
inline double worker_worker_agreement(const VectorizedCorpus& corpus, std::size_t worker,
                                      const SolverState& prev,
                                      std::vector<std::string>* warnings = nullptr) {
  double num = 0.0, den = 0.0;
  for (std::size_t u : corpus.worker_units[worker]) {
    const UnitData& ud = corpus.unit_data[u];
    const auto weights = detail::wcos_weights(corpus, u, prev);
    const auto& own = ud.bits[ud.worker_slot(worker)];
    for (std::size_t b = 0; b < ud.workers.size(); ++b) {
      const std::size_t other = ud.workers[b];
      if (other == worker) continue;
      bool degenerate = false;
      const double cos = weighted_cosine(own, ud.bits[b], weights, &degenerate);
      if (degenerate)
        detail::warn(warnings, "wcos degenerate: unit=" + ud.id + " workers=" +
                                   corpus.workers[worker] + "," +
                                   corpus.workers[other]);
      const double pair_weight = prev.wqs[other] * prev.uqs[u];
      num += cos * pair_weight;
      den += pair_weight;
    }
  }
  if (den <= 0.0) {
    detail::warn(warnings, "degenerate weights: wwa worker=" + corpus.workers[worker] +
                               " (retained previous value)");
    return prev.wwa[worker];
  }
  return std::min(1.0, num / den);
}

/// WUA(i): average Wcos between worker i and the rest-of-crowd vector
/// MediaUnitVec(u) - WorkVec(i, u), weighted per unit by UQS(u).
inline double worker_unit_agreement(const VectorizedCorpus& corpus, std::size_t worker,
                                    const SolverState& prev,
                                    std::vector<std::string>* warnings = nullptr) {
  double num = 0.0, den = 0.0;
  std::vector<std::int32_t> rest;
  for (std::size_t u : corpus.worker_units[worker]) {
    const UnitData& ud = corpus.unit_data[u];
    const auto weights = detail::wcos_weights(corpus, u, prev);
    const auto& own = ud.bits[ud.worker_slot(worker)];
    rest.assign(ud.counts.begin(), ud.counts.end());
    for (std::size_t k = 0; k < own.size(); ++k) rest[k] -= own[k];
    bool degenerate = false;
    const double cos = weighted_cosine(own, rest, weights, &degenerate);
    if (degenerate)
      detail::warn(warnings, "wcos degenerate: unit=" + ud.id + " worker=" +
                                 corpus.workers[worker] + " vs rest of crowd");
    num += cos * prev.uqs[u];
    den += prev.uqs[u];
  }
  if (den <= 0.0) {
    detail::warn(warnings, "degenerate weights: wua worker=" + corpus.workers[worker] +
                               " (retained previous value)");
    return prev.wua[worker];
  }
  return std::min(1.0, num / den);
}

/// WQS(i) = WUA(i) * WWA(i).
inline double worker_quality(double wwa, double wua) { return wua * wwa; }

/// P_a(i | j): probability that worker i also selects label a on the units
/// they share with worker j, where j selected it. UQS-weighted; undefined
/// (nullopt) when j never selected a on a shared unit.
inline std::optional<double> annotation_pair_prob(const VectorizedCorpus& corpus,
                                                  std::size_t label, std::size_t worker_i,
                                                  std::size_t worker_j,
                                                  const SolverState& prev) {
  const auto& units_i = corpus.worker_units[worker_i];
  const auto& units_j = corpus.worker_units[worker_j];
  double num = 0.0, den = 0.0;
  std::size_t x = 0, y = 0;
  while (x < units_i.size() && y < units_j.size()) {
    if (units_i[x] < units_j[y]) { ++x; continue; }
    if (units_j[y] < units_i[x]) { ++y; continue; }
    const std::size_t u = units_i[x];
    const UnitData& ud = corpus.unit_data[u];
    const double vi = ud.bits[ud.worker_slot(worker_i)][label];
    const double vj = ud.bits[ud.worker_slot(worker_j)][label];
    num += prev.uqs[u] * vi * vj;
    den += prev.uqs[u] * vj;
    ++x;
    ++y;
  }
  if (den <= 0.0) return std::nullopt;
  return std::min(1.0, num / den);
}

/// AQS(a): weighted average of P_a(i | j) over all ordered worker pairs
/// with a defined probability, weighted by WQS(i) * WQS(j). Closed tasks
/// only; retains the previous value when no pair is defined.
inline double annotation_quality(const VectorizedCorpus& corpus, std::size_t label,
                                 const SolverState& prev,
                                 std::vector<std::string>* warnings = nullptr) {
  const std::size_t n_workers = corpus.workers.size();
  double num = 0.0, den = 0.0;
  bool any_defined = false;
  int undefined_pairs = 0;
  for (std::size_t i = 0; i < n_workers; ++i) {
    for (std::size_t j = 0; j < n_workers; ++j) {
      if (i == j) continue;
      const auto p = annotation_pair_prob(corpus, label, i, j, prev);
      if (!p) {
        if (corpus.workers_share_units(i, j)) ++undefined_pairs;
        continue;
      }
      any_defined = true;
      const double pair_weight = prev.wqs[i] * prev.wqs[j];
      num += *p * pair_weight;
      den += pair_weight;
    }
  }
  if (undefined_pairs > 0 && any_defined)
    detail::warn(warnings, "aqs pairs undefined: label=" + corpus.labels[label] + " (" +
                               std::to_string(undefined_pairs) +
                               " ordered pair(s) excluded from the average)");
  if (!any_defined || den <= 0.0) {
    detail::warn(warnings, "degenerate weights: aqs label=" + corpus.labels[label] +
                               " (retained previous value)");
    return prev.aqs[label];
  }
  return std::min(1.0, num / den);
}

/// UAS(u, a): worker-quality-weighted fraction of the unit's workers that
/// selected the label. label_pos indexes the unit's answer space.
inline double unit_annotation_score(const VectorizedCorpus& corpus, std::size_t unit,
                                    std::size_t label_pos, const SolverState& state,
                                    std::vector<std::string>* warnings = nullptr) {
  const UnitData& ud = corpus.unit_data[unit];
  double num = 0.0, den = 0.0;
  for (std::size_t b = 0; b < ud.workers.size(); ++b) {
    const double wqs = state.wqs[ud.workers[b]];
    num += static_cast<double>(ud.bits[b][label_pos]) * wqs;
    den += wqs;
  }
  if (den <= 0.0) {
    detail::warn(warnings, "degenerate weights: uas unit=" + ud.id + " label=" +
                               ud.space.labels[label_pos] + " (all worker quality zero)");
    return 0.0;
  }
  return std::min(1.0, num / den);
}

namespace detail {

inline void check_config(const SolverConfig& config) {
  if (!(config.threshold > 0.0) || !std::isfinite(config.threshold))
    throw ValidationError("solver threshold must be positive and finite");
  if (config.max_iterations < 1)
    throw ValidationError("max_iterations must be at least 1");
  if (config.min_workers_per_unit < 2)
    throw ValidationError("min_workers_per_unit must be at least 2");
  if (config.threads < 1) throw ValidationError("threads must be at least 1");
}

inline void check_corpus(const VectorizedCorpus& corpus, const SolverConfig& config) {
  if (corpus.units.empty() || corpus.workers.empty())
    throw ValidationError("corpus is empty");
  for (const auto& ud : corpus.unit_data)
    if (static_cast<int>(ud.workers.size()) < config.min_workers_per_unit)
      throw ValidationError("unit '" + ud.id + "' has " +
                            std::to_string(ud.workers.size()) +
                            " worker(s), below the minimum of " +
                            std::to_string(config.min_workers_per_unit) +
                            "; run corpus validation first");
}

inline void merge_warnings(std::set<std::string>& sink,
                           const std::vector<std::vector<std::string>>& buffers) {
  for (const auto& buf : buffers) sink.insert(buf.begin(), buf.end());
}

}  // namespace detail

/// Runs the fixed-point iteration and assembles the final report. The
/// observer, when given, sees every iteration (used by property tests and
/// for convergence tracing).
inline QualityReport solve(const VectorizedCorpus& corpus,
                           const SolverConfig& config = {},
                           const IterationObserver& observer = {}) {
  detail::check_config(config);
  detail::check_corpus(corpus, config);

  const std::size_t n_units = corpus.units.size();
  const std::size_t n_workers = corpus.workers.size();
  const std::size_t n_labels = corpus.labels.size();
  const bool closed = corpus.task_type == TaskType::Closed;

  SolverState prev = initial_state(corpus);
  SolverState cur = prev;
  std::set<std::string> solver_warnings;
  std::vector<double> trace;
  std::vector<std::vector<std::string>> buffers;
  bool converged = false;
  int iterations = 0;

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    // Annotation quality first (closed tasks only; open tasks stay at 1),
    // then unit quality, then the worker metrics. All phases read `prev`.
    if (closed) {
      buffers.assign(n_labels, {});
      detail::parallel_for(n_labels, config.threads, [&](std::size_t a) {
        cur.aqs[a] = annotation_quality(corpus, a, prev, &buffers[a]);
      });
      detail::merge_warnings(solver_warnings, buffers);
    }

    buffers.assign(n_units, {});
    detail::parallel_for(n_units, config.threads, [&](std::size_t u) {
      cur.uqs[u] = unit_quality(corpus, u, prev, &buffers[u]);
    });
    detail::merge_warnings(solver_warnings, buffers);

    buffers.assign(n_workers, {});
    detail::parallel_for(n_workers, config.threads, [&](std::size_t i) {
      cur.wwa[i] = worker_worker_agreement(corpus, i, prev, &buffers[i]);
      cur.wua[i] = worker_unit_agreement(corpus, i, prev, &buffers[i]);
      cur.wqs[i] = worker_quality(cur.wwa[i], cur.wua[i]);
    });
    detail::merge_warnings(solver_warnings, buffers);

    double total_variation = 0.0;
    for (std::size_t u = 0; u < cur.uqs.size(); ++u)
      total_variation += std::abs(cur.uqs[u] - prev.uqs[u]);
    for (std::size_t i = 0; i < cur.wqs.size(); ++i)
      total_variation += std::abs(cur.wqs[i] - prev.wqs[i]);
    for (std::size_t a = 0; a < cur.aqs.size(); ++a)
      total_variation += std::abs(cur.aqs[a] - prev.aqs[a]);

    iterations = iter;
    trace.push_back(total_variation);
    if (observer) observer(iter, prev, cur, total_variation);
    std::swap(prev, cur);
    if (total_variation < config.threshold) {
      converged = true;
      break;
    }
  }

  if (!converged)
    solver_warnings.insert(
        "non-convergence: total variation " + std::to_string(trace.back()) +
        " after " + std::to_string(iterations) + " iteration(s)");

  // UAS is computed once, from the final state.
  std::vector<std::map<std::string, double>> uas(n_units);
  buffers.assign(n_units, {});
  detail::parallel_for(n_units, config.threads, [&](std::size_t u) {
    const UnitData& ud = corpus.unit_data[u];
    for (std::size_t pos = 0; pos < ud.space.labels.size(); ++pos)
      uas[u][ud.space.labels[pos]] =
          unit_annotation_score(corpus, u, pos, prev, &buffers[u]);
  });
  detail::merge_warnings(solver_warnings, buffers);

  QualityReport report;
  report.task_type = corpus.task_type;
  for (std::size_t u = 0; u < corpus.units.size(); ++u) {
    report.units[corpus.units[u]] = prev.uqs[u];
    report.uas[corpus.units[u]] = std::move(uas[u]);
  }
  for (std::size_t i = 0; i < corpus.workers.size(); ++i)
    report.workers[corpus.workers[i]] =
        WorkerQuality{prev.wqs[i], prev.wwa[i], prev.wua[i]};
  for (std::size_t a = 0; a < corpus.labels.size(); ++a)
    report.annotations[corpus.labels[a]] = prev.aqs[a];
  report.iterations_used = iterations;
  report.converged = converged;
  report.convergence_trace = std::move(trace);
  report.warnings.assign(solver_warnings.begin(), solver_warnings.end());
  return report;
}

}  // namespace crowdq
