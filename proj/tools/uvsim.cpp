// uvsim: run scenarios and campaigns, validate a scenario database, and
// recompute metrics from stored logs.

#include "uvsim/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uvsim: fixed-step multirotor simulator with fault injection"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> decimation;
  std::string json_path;
  bool quiet = false;

  // run
  auto* run = app.add_subcommand("run", "Run one scenario file and evaluate it");
  std::string scenario_path;
  std::string log_path;
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--decimation", decimation, "Log every Nth tick")->check(CLI::PositiveNumber);
  run->add_option("--log", log_path, "Write the time-series log (.bin for binary, else CSV)");
  run->add_option("--json", json_path, "Write the JSON report ('-' for stdout)");
  run->add_flag("-q,--quiet", quiet, "No text report");
  std::optional<double> pace;
  run->add_option("--realtime", pace, "Pace to wall clock at this many simulated seconds per second")
      ->check(CLI::PositiveNumber);

  // campaign
  auto* camp = app.add_subcommand("campaign", "Run every case listed in <dir>/index.json");
  std::string db_dir;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string log_dir;
  bool binary = false;
  camp->add_option("dir", db_dir, "Scenario directory")->required()->check(CLI::ExistingDirectory);
  camp->add_option("-j,--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  camp->add_option("--seed", seed, "Override every scenario seed");
  camp->add_option("--decimation", decimation, "Log every Nth tick")->check(CLI::PositiveNumber);
  camp->add_option("--log-dir", log_dir, "Write one log per case into this directory");
  camp->add_flag("--binary", binary, "Binary logs instead of CSV");
  camp->add_option("--json", json_path, "Write the JSON report ('-' for stdout)");
  camp->add_flag("-q,--quiet", quiet, "No text report");

  // validate
  auto* val = app.add_subcommand("validate", "Check every case of a scenario database without running it");
  val->add_option("dir", db_dir, "Scenario directory")->required()->check(CLI::ExistingDirectory);

  // metrics
  auto* met = app.add_subcommand("metrics", "Compute every registered metric from a stored log");
  std::string stored_log;
  double from = 0.0;
  double to = std::numeric_limits<double>::infinity();
  met->add_option("log", stored_log, "CSV or binary log")->required()->check(CLI::ExistingFile);
  met->add_option("--from", from, "Window start, s");
  met->add_option("--to", to, "Window end, s");

  app.add_subcommand("list-metrics", "Print the metric registry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    uvsim::CampaignOptions opt;
    opt.seed_override = seed;
    opt.log_decimation = decimation;

    if (app.got_subcommand(run)) {
      opt.pace = pace;
      const uvsim::Scenario sc = uvsim::load_scenario(scenario_path);
      uvsim::SimLog log;
      uvsim::TestReport report;
      report.cases.push_back(uvsim::run_case(sc, opt, &log));
      const auto v = report.cases.back().verdict;
      report.passed = v == uvsim::Verdict::pass;
      report.failed = v == uvsim::Verdict::fail;
      report.errors = v == uvsim::Verdict::error;
      if (!log_path.empty() && v != uvsim::Verdict::error) uvsim::write_log(log, log_path);
      if (!quiet) std::cout << uvsim::report_text(report);
      write_text(json_path, uvsim::report_json(report));
      return report.all_passed() ? 0 : 1;
    }

    if (app.got_subcommand(camp)) {
      opt.parallelism = jobs;
      if (!log_dir.empty()) opt.log_dir = log_dir;
      opt.binary_logs = binary;
      const auto db = uvsim::open_database(db_dir);
      const auto report = uvsim::run_campaign(db, opt);
      if (!quiet) std::cout << uvsim::report_text(report);
      write_text(json_path, uvsim::report_json(report));
      return report.all_passed() ? 0 : 1;
    }

    if (app.got_subcommand(val)) {
      const auto db = uvsim::open_database(db_dir);
      const auto issues = uvsim::validate_database(db);
      for (const auto& i : issues) std::cout << i.message << "\n";
      std::cout << db.files.size() << " cases, " << issues.size() << " problems\n";
      return issues.empty() ? 0 : 1;
    }

    if (app.got_subcommand(met)) {
      const auto log = uvsim::read_log(stored_log);
      std::cout << "termination " << uvsim::to_string(log.termination) << "\n";
      for (const auto& m : uvsim::metric_registry()) {
        std::cout << std::left << std::setw(30) << m.name << std::setprecision(6)
                  << uvsim::compute_metric(log, m.name, from, to) << " " << m.unit << "\n";
      }
      return 0;
    }

    for (const auto& m : uvsim::metric_registry()) {
      std::cout << std::left << std::setw(30) << m.name << std::setw(6) << m.unit << m.description << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "uvsim: " << e.what() << "\n";
    return 2;
  }
}
