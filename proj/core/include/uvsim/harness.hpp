#pragma once

// Scenario database, automatic evaluation and campaign execution.

#include "uvsim/simloop.hpp"

#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace uvsim {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One expected-performance bound: min <= metric(window) <= max.
struct MetricBound {
  std::string metric;
  double from = 0.0;  // s
  double to = std::numeric_limits<double>::infinity();
  std::optional<double> min;
  std::optional<double> max;
  std::optional<double> band;  // settling_time only, m; default kSettlingBand
};

struct Scenario {
  std::string name;
  std::string description;
  std::string vehicle_ref;  // path relative to the scenario file, or "builtin:f450"
  RunSpec spec;
  std::vector<MetricBound> expected;
  std::filesystem::path source;  // file it was loaded from, if any
};

// --- configuration files ----------------------------------------------------

/// Parses a vehicle configuration document. Missing keys keep their
/// defaults; unknown keys are rejected.
VehicleConfig vehicle_from_json(const std::string& text);
VehicleConfig load_vehicle(const std::filesystem::path& path);
VehicleConfig builtin_vehicle(const std::string& name);  // "f450"

/// Parses a scenario. Relative vehicle paths resolve against base_dir.
Scenario scenario_from_json(const std::string& text, const std::filesystem::path& base_dir);
Scenario load_scenario(const std::filesystem::path& path);

/// A scenario directory with an index.json listing the case files.
struct ScenarioDatabase {
  std::filesystem::path root;
  std::vector<std::filesystem::path> files;
};

ScenarioDatabase open_database(const std::filesystem::path& dir);

struct ValidationIssue {
  std::filesystem::path file;
  std::string message;
};

/// Loads and validates every listed case; returns the problems found.
std::vector<ValidationIssue> validate_database(const ScenarioDatabase& db);

// --- metrics ---------------------------------------------------------------------

struct MetricInfo {
  std::string name;
  std::string unit;
  std::string description;
};

/// Registered metric names, in report order.
const std::vector<MetricInfo>& metric_registry();
bool is_registered_metric(const std::string& name);

/// Default error band of settling_time, m.
inline constexpr double kSettlingBand = 0.2;

/// Computes one registered metric over rows with from <= t <= to. Empty
/// windows give NaN. Throws ScenarioError for an unknown name.
double compute_metric(const SimLog& log, const std::string& name, double from = 0.0,
                      double to = std::numeric_limits<double>::infinity(), double band = kSettlingBand);

enum class Verdict : std::uint8_t { pass, fail, error };
std::string_view to_string(Verdict v);

struct MetricResult {
  MetricBound bound;
  double value = 0.0;
  bool pass = false;
};

struct Evaluation {
  std::vector<MetricResult> metrics;
  Termination termination = Termination::completed;
  Verdict verdict = Verdict::fail;
};

/// Conjunctive verdict: pass iff every bound holds and the run completed.
Evaluation evaluate(const SimLog& log, const std::vector<MetricBound>& expected);

// --- campaigns ---------------------------------------------------------------------

struct CaseReport {
  std::string name;
  std::filesystem::path source;
  Verdict verdict = Verdict::error;
  std::optional<Termination> termination;
  std::vector<MetricResult> metrics;
  std::vector<LogEvent> fault_timeline;  // fault and crash events
  std::string log_path;
  std::string error;
  double runtime_s = 0.0;
  double sim_time = 0.0;
};

struct TestReport {
  std::vector<CaseReport> cases;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::size_t errors = 0;

  bool all_passed() const { return failed == 0 && errors == 0; }
};

struct CampaignOptions {
  unsigned parallelism = 1;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::uint64_t> log_decimation;
  std::optional<std::filesystem::path> log_dir;  // write <name>.csv (or .bin) per case
  bool binary_logs = false;
  /// Wall-clock pacing as simulated seconds per real second; empty runs
  /// flat out. Results never depend on it.
  std::optional<double> pace;
};

/// Runs one scenario in a fresh world and evaluates it. Never throws;
/// failures become an error verdict.
CaseReport run_case(const Scenario& scenario, const CampaignOptions& opt, SimLog* log_out = nullptr);

/// Loads every case of the database and runs them on a bounded worker
/// pool. Per-case results do not depend on the parallelism.
TestReport run_campaign(const ScenarioDatabase& db, const CampaignOptions& opt);
TestReport run_campaign(const std::vector<Scenario>& scenarios, const CampaignOptions& opt);

std::string report_json(const TestReport& report);
std::string report_text(const TestReport& report);

}  // namespace uvsim
