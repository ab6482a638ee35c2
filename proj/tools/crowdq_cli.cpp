/**
 * crowdq command line front end.
 *
 *   crowdq run       aggregate a judgment file into a quality report
 *   crowdq simulate  generate a synthetic corpus from a crowd spec
 *   crowdq report    re-render an existing JSON report as CSV
 *
 * Exit codes: 0 success (including flagged non-convergence),
 *             1 parse/validation/IO failure, 2 bad flags.
 */
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <crowdq/crowdq.hpp>

namespace fs = std::filesystem;

namespace {

struct RunOptions {
  std::string input;
  std::string format = "jsonl";
  std::string task_type;
  std::vector<std::string> vocabulary;
  double threshold = 1e-4;
  int max_iter = 1000;
  int min_workers_per_unit = 2;
  std::string duplicates = "merge";
  std::string output;
  std::string report_format = "json";
  int threads = 1;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw crowdq::Error("cannot open input file: " + path);
  return in;
}

int run_command(const RunOptions& opt) {
  crowdq::CorpusConfig corpus_config;
  corpus_config.task_type = opt.task_type == "open" ? crowdq::TaskType::Open
                                                    : crowdq::TaskType::Closed;
  corpus_config.vocabulary = opt.vocabulary;
  corpus_config.min_workers_per_unit = opt.min_workers_per_unit;
  corpus_config.duplicates = opt.duplicates == "reject"
                                 ? crowdq::DuplicatePolicy::Reject
                                 : crowdq::DuplicatePolicy::MergeUnion;

  crowdq::SolverConfig solver_config;
  solver_config.threshold = opt.threshold;
  solver_config.max_iterations = opt.max_iter;
  solver_config.min_workers_per_unit = opt.min_workers_per_unit;
  solver_config.threads = opt.threads;

  auto in = open_input(opt.input);
  const auto format = opt.format == "csv" ? crowdq::InputFormat::Csv
                                          : crowdq::InputFormat::Jsonl;
  auto report = crowdq::analyze(in, format, corpus_config, solver_config);

  for (const auto& warning : report.warnings)
    std::cerr << "warning: " << warning << '\n';
  if (!report.converged)
    std::cerr << "warning: solver hit the iteration limit; scores are the last "
                 "iterate, not a fixed point\n";

  fs::create_directories(opt.output);
  if (opt.report_format == "csv") {
    crowdq::write_report_csv(report, opt.output);
    std::cout << "wrote " << (fs::path(opt.output) / "units.csv").string()
              << " and siblings";
  } else {
    const auto path = fs::path(opt.output) / "report.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw crowdq::Error("cannot open " + path.string() + " for writing");
    crowdq::write_report_json(report, out);
    std::cout << "wrote " << path.string();
  }
  std::cout << " (" << (report.converged ? "converged" : "iteration limit") << " after "
            << report.iterations_used << " iteration(s))\n";
  return 0;
}

int simulate_command(const std::string& spec_path, const std::string& output,
                     bool seed_given, std::uint64_t seed) {
  auto in = open_input(spec_path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw crowdq::SpecError(std::string("invalid crowd spec JSON: ") + e.what());
  }
  if (seed_given) doc["seed"] = seed;
  auto spec = crowdq::crowd_spec_from_json(doc);
  auto corpus = crowdq::generate(spec);

  std::ofstream out(output, std::ios::binary);
  if (!out) throw crowdq::Error("cannot open " + output + " for writing");
  crowdq::write_judgments_jsonl(corpus.judgments, out);

  const std::string plant_path = output + ".plant.json";
  std::ofstream plant(plant_path, std::ios::binary);
  if (!plant) throw crowdq::Error("cannot open " + plant_path + " for writing");
  plant << corpus.plant.dump(2) << '\n';

  std::cout << "wrote " << corpus.judgments.size() << " judgments to " << output
            << " (plant record: " << plant_path << ")\n";
  return 0;
}

int report_command(const std::string& input, const std::string& output) {
  auto in = open_input(input);
  auto report = crowdq::read_report_json(in);
  crowdq::write_report_csv(report, output);
  std::cout << "wrote CSV report to " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"disagreement-aware quality metrics for crowdsourced annotation"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "aggregate judgments into a quality report");
  run_cmd->add_option("--input", run.input, "judgment file (JSONL or CSV)")->required();
  run_cmd->add_option("--format", run.format, "input format")
      ->check(CLI::IsMember({"jsonl", "csv"}))
      ->capture_default_str();
  run_cmd->add_option("--task-type", run.task_type, "closed or open")
      ->check(CLI::IsMember({"closed", "open"}))
      ->required();
  run_cmd->add_option("--vocabulary", run.vocabulary,
                      "comma-separated labels (closed tasks only)")
      ->delimiter(',');
  run_cmd->add_option("--threshold", run.threshold, "convergence threshold")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run_cmd->add_option("--max-iter", run.max_iter, "iteration limit")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run_cmd->add_option("--min-workers-per-unit", run.min_workers_per_unit,
                      "units with fewer distinct workers are dropped")
      ->check(CLI::Range(2, 1 << 20))
      ->capture_default_str();
  run_cmd->add_option("--duplicates", run.duplicates, "duplicate judgment policy")
      ->check(CLI::IsMember({"merge", "reject"}))
      ->capture_default_str();
  run_cmd->add_option("--output", run.output, "output directory")->required();
  run_cmd->add_option("--report-format", run.report_format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  run_cmd->add_option("--threads", run.threads, "solver threads (output is identical)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::string spec_path, sim_output;
  std::uint64_t seed = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic corpus");
  sim_cmd->add_option("--spec", spec_path, "crowd spec JSON file")->required();
  auto* seed_opt = sim_cmd->add_option("--seed", seed, "overrides the spec's seed");
  sim_cmd->add_option("--output", sim_output, "corpus JSONL path")->required();

  std::string report_input, report_output;
  auto* report_cmd = app.add_subcommand("report", "re-render a JSON report as CSV");
  report_cmd->add_option("--input", report_input, "report.json path")->required();
  report_cmd->add_option("--output", report_output, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run_cmd->parsed()) {
      if (run.task_type == "closed" && run.vocabulary.empty()) {
        std::cerr << "error: --task-type closed requires --vocabulary\n";
        return 2;
      }
      if (run.task_type == "open" && !run.vocabulary.empty()) {
        std::cerr << "error: --vocabulary is only valid for closed tasks\n";
        return 2;
      }
      return run_command(run);
    }
    if (sim_cmd->parsed())
      return simulate_command(spec_path, sim_output, seed_opt->count() > 0, seed);
    if (report_cmd->parsed()) return report_command(report_input, report_output);
  } catch (const crowdq::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
