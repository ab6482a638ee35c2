/**
 * Seed-deterministic synthetic corpora with planted worker reliabilities
 * and unit ambiguities, for validating that the metrics can tell noisy
 * workers apart from genuinely ambiguous units.
 *
 * Draws use a fixed mapping over std::mt19937_64 raw output, so identical
 * seeds give byte-identical corpora on every platform.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdq/model.hpp"

namespace crowdq {

struct SpecError : Error {
  using Error::Error;
};

struct CrowdSpec {
  int n_workers = 0;
  int n_units = 0;
  int judgments_per_unit = 0;
  std::vector<std::string> vocabulary;
  std::vector<double> worker_reliabilities;             // per worker, in [0, 1]
  std::vector<std::vector<double>> unit_distributions;  // per unit, over vocabulary
  std::uint64_t seed = 0;
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return k < n ? k : n - 1;
}

inline std::size_t sample_discrete(std::span<const double> distribution,
                                   std::mt19937_64& rng) {
  const double x = uniform01(rng);
  double cumulative = 0.0;
  for (std::size_t k = 0; k + 1 < distribution.size(); ++k) {
    cumulative += distribution[k];
    if (x < cumulative) return k;
  }
  return distribution.size() - 1;
}

inline std::string indexed_id(char prefix, int index, int count) {
  int width = 1;
  for (int v = count - 1; v >= 10; v /= 10) ++width;
  std::string digits = std::to_string(index);
  std::string id(1, prefix);
  id.append(static_cast<std::size_t>(width) - digits.size(), '0');
  return id + digits;
}

}  // namespace detail

inline void check_spec(const CrowdSpec& spec) {
  if (spec.n_workers < 2) throw SpecError("n_workers must be at least 2");
  if (spec.n_units < 1) throw SpecError("n_units must be at least 1");
  if (spec.judgments_per_unit < 2)
    throw SpecError("judgments_per_unit must be at least 2");
  if (spec.judgments_per_unit > spec.n_workers)
    throw SpecError("judgments_per_unit cannot exceed n_workers");
  check_schema(TaskSchema{TaskType::Closed, spec.vocabulary});
  if (static_cast<int>(spec.worker_reliabilities.size()) != spec.n_workers)
    throw SpecError("worker_reliabilities must have one entry per worker");
  for (double r : spec.worker_reliabilities)
    if (!(r >= 0.0 && r <= 1.0)) throw SpecError("reliabilities must lie in [0, 1]");
  if (static_cast<int>(spec.unit_distributions.size()) != spec.n_units)
    throw SpecError("unit_distributions must have one row per unit");
  for (const auto& dist : spec.unit_distributions) {
    if (dist.size() != spec.vocabulary.size())
      throw SpecError("every unit distribution must cover the vocabulary");
    double total = 0.0;
    for (double p : dist) {
      if (!(p >= 0.0)) throw SpecError("distribution entries must be non-negative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw SpecError("unit distributions must sum to 1");
  }
}

struct SimulatedCorpus {
  std::vector<Judgment> judgments;
  nlohmann::json plant;  // ground-truth record: seed, reliabilities, distributions
};

/// Units are staffed round-robin with judgments_per_unit distinct workers.
/// Each judgment draws the unit's planted label distribution with
/// probability equal to the worker's reliability, else a uniform label.
inline SimulatedCorpus generate(const CrowdSpec& spec) {
  check_spec(spec);
  std::mt19937_64 rng(spec.seed);

  SimulatedCorpus out;
  out.judgments.reserve(static_cast<std::size_t>(spec.n_units) *
                        static_cast<std::size_t>(spec.judgments_per_unit));
  const std::size_t vocab_size = spec.vocabulary.size();

  int cursor = 0;
  for (int u = 0; u < spec.n_units; ++u) {
    const std::string unit_id = detail::indexed_id('u', u, spec.n_units);
    const auto& dist = spec.unit_distributions[static_cast<std::size_t>(u)];
    for (int k = 0; k < spec.judgments_per_unit; ++k) {
      const int w = (cursor + k) % spec.n_workers;
      const double reliability = spec.worker_reliabilities[static_cast<std::size_t>(w)];
      std::size_t label;
      if (detail::uniform01(rng) < reliability)
        label = detail::sample_discrete(dist, rng);
      else
        label = detail::uniform_index(rng, vocab_size);
      out.judgments.push_back(Judgment{detail::indexed_id('w', w, spec.n_workers),
                                       unit_id,
                                       {spec.vocabulary[label]},
                                       0});
    }
    cursor = (cursor + spec.judgments_per_unit) % spec.n_workers;
  }

  out.plant["seed"] = spec.seed;
  out.plant["vocabulary"] = spec.vocabulary;
  out.plant["judgments_per_unit"] = spec.judgments_per_unit;
  for (int w = 0; w < spec.n_workers; ++w)
    out.plant["workers"][detail::indexed_id('w', w, spec.n_workers)] =
        spec.worker_reliabilities[static_cast<std::size_t>(w)];
  for (int u = 0; u < spec.n_units; ++u) {
    nlohmann::json dist;
    for (std::size_t a = 0; a < vocab_size; ++a)
      dist[spec.vocabulary[a]] = spec.unit_distributions[static_cast<std::size_t>(u)][a];
    out.plant["units"][detail::indexed_id('u', u, spec.n_units)] = std::move(dist);
  }
  return out;
}

/// Accepts scalar broadcast forms: a single reliability for all workers,
/// and a single distribution row for all units.
inline CrowdSpec crowd_spec_from_json(const nlohmann::json& doc) {
  CrowdSpec spec;
  try {
    spec.n_workers = doc.at("n_workers").get<int>();
    spec.n_units = doc.at("n_units").get<int>();
    spec.judgments_per_unit = doc.at("judgments_per_unit").get<int>();
    spec.vocabulary = doc.at("vocabulary").get<std::vector<std::string>>();
    spec.seed = doc.at("seed").get<std::uint64_t>();

    const auto& rel = doc.at("worker_reliabilities");
    if (rel.is_number())
      spec.worker_reliabilities.assign(static_cast<std::size_t>(spec.n_workers),
                                       rel.get<double>());
    else
      spec.worker_reliabilities = rel.get<std::vector<double>>();

    const auto& dists = doc.at("unit_distributions");
    if (dists.is_array() && !dists.empty() && dists.front().is_number())
      spec.unit_distributions.assign(static_cast<std::size_t>(spec.n_units),
                                     dists.get<std::vector<double>>());
    else
      spec.unit_distributions = dists.get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("invalid crowd spec: ") + e.what());
  }
  check_spec(spec);
  return spec;
}

/// One JSONL row per judgment, in generation order.
inline void write_judgments_jsonl(std::span<const Judgment> judgments,
                                  std::ostream& out) {
  for (const auto& j : judgments) {
    nlohmann::json row;
    row["worker"] = j.worker;
    row["unit"] = j.unit;
    row["annotations"] = j.annotations;
    out << row.dump() << '\n';
  }
}

}  // namespace crowdq
