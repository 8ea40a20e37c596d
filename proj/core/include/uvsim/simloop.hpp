#pragma once

// Fixed-step scheduler. One tick, in order:
//   1 environment at the current pose
//   2 fault triggers and active effects
//   3 sensors: truth -> error model -> sensor faults -> bus chips / GPS UART
//   4 reference controller (every controller_divider ticks)
//   5 PWM -> throttle
//   6 actuators (stuck faults override the output)
//   7 wrench aggregation
//   8 rigid-body RK4 step
//   9 log row (pre-step truth, everything else as used during the tick)

#include "uvsim/actuator.hpp"
#include "uvsim/buscodec.hpp"
#include "uvsim/environment.hpp"
#include "uvsim/faults.hpp"
#include "uvsim/forcemoment.hpp"
#include "uvsim/refctrl.hpp"
#include "uvsim/rigidbody.hpp"
#include "uvsim/sensors.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace uvsim {

struct VehicleConfig {
  std::string name = "f450";
  double mass = 1.4;
  Mat3 inertia = Vec3(0.0211, 0.0219, 0.0366).asDiagonal();
  double arm_length = 0.225;
  double thrust_coeff = 1.105e-5;
  double torque_coeff = 1.489e-7;
  ActuatorParams actuator;
  AeroParams aero;
  ContactParams contact;
  SensorSuiteConfig sensors;
  ControllerConfig controller;

  void validate() const;
  RotorGeometry rotors() const { return quad_x_geometry(arm_length, thrust_coeff, torque_coeff); }
};

struct SimConfig {
  double physics_rate = 1000.0;  // Hz
  std::uint64_t controller_divider = 4;
  SensorRates sensor_rates;
  double stop_time = 10.0;  // s
  std::uint64_t seed = 1;
  std::uint64_t log_decimation = 1;
  double crash_speed = 2.0;  // m/s, touchdown faster than this ends the run

  static constexpr double kMaxPhysicsRate = 5000.0;
  void validate() const;
  double dt() const { return 1.0 / physics_rate; }
};

struct Command {
  double t = 0.0;
  Setpoint setpoint;
};

/// Everything needed to build a world from scratch.
struct RunSpec {
  VehicleConfig vehicle;
  EnvironmentConfig environment;
  SimConfig sim;
  std::vector<Command> commands;  // sorted by t
  std::vector<FaultSpec> faults;
  /// Starting pose. Empty: resting on the ground at the origin.
  std::optional<Vec3> initial_position;
  double initial_yaw = 0.0;

  void validate() const;
};

enum class Termination : std::uint8_t { completed, crashed, diverged };
std::string_view to_string(Termination t);
std::optional<Termination> termination_from_string(std::string_view s);

struct LogEvent {
  double t = 0.0;
  std::string kind;    // fault_on, fault_off, touchdown, crash, diverged
  std::string detail;

  friend bool operator==(const LogEvent&, const LogEvent&) = default;
};

/// Columnar time-series, row-major doubles with a fixed schema.
struct SimLog {
  std::vector<std::string> columns;
  std::vector<double> values;
  std::vector<LogEvent> events;
  Termination termination = Termination::completed;

  std::size_t rows() const { return columns.empty() ? 0 : values.size() / columns.size(); }
  std::size_t column(std::string_view name) const;  // throws std::out_of_range
  double at(std::size_t row, std::size_t col) const { return values[row * columns.size() + col]; }
  std::vector<double> series(std::string_view name) const;
};

inline constexpr std::string_view kCsvSchemaLine = "# uvsim-log v1";
inline constexpr std::uint32_t kBinaryVersion = 1;

void write_csv(const SimLog& log, std::ostream& out);
SimLog read_csv(std::istream& in);
/// Little-endian binary: "UVSL", version, column names, rows, events, cause.
void write_binary(const SimLog& log, std::ostream& out);
SimLog read_binary(std::istream& in);
/// Picks the format from the first bytes.
SimLog read_log(const std::string& path);
void write_log(const SimLog& log, const std::string& path);  // .bin -> binary, else CSV

/// Names of the columns emitted by Simulation, in order.
const std::vector<std::string>& log_schema();

/// A complete vehicle + environment + controller world.
class Simulation {
 public:
  explicit Simulation(const RunSpec& spec);
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  /// Advances one tick. Returns false once the run has terminated.
  bool tick();
  /// Ticks until stop time or termination and hands over the log.
  SimLog run();

  std::uint64_t tick_count() const { return tick_; }
  double time() const;
  const VehicleState& state() const;
  const Estimate& estimate() const;
  std::optional<Termination> terminated() const { return terminated_; }
  const SimLog& log() const { return log_; }

 private:
  struct World;
  std::unique_ptr<World> w_;
  RunSpec spec_;
  std::uint64_t tick_ = 0;
  std::uint64_t stop_tick_ = 0;
  std::optional<Termination> terminated_;
  SimLog log_;
};

/// Convenience: build and run.
SimLog run(const RunSpec& spec);

}  // namespace uvsim
