#pragma once

// Scheduled fault injection. Faults never modify the configured baseline;
// each tick the engine publishes the set of active effects and the
// simulation derives shadow parameters and signals from them.

#include "uvsim/environment.hpp"
#include "uvsim/rigidbody.hpp"
#include "uvsim/sensors.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uvsim {

enum class FaultTargetKind : std::uint8_t { actuator, sensor, wind, payload };

struct FaultTarget {
  FaultTargetKind kind = FaultTargetKind::actuator;
  std::size_t actuator = 0;                   // kind == actuator
  SensorChannel sensor = SensorChannel::accel;  // kind == sensor

  friend bool operator==(const FaultTarget&, const FaultTarget&) = default;
};

enum class FaultKind : std::uint8_t {
  loss_of_effectiveness,
  stuck_at,
  signal_loss,
  bias_jump,
  noise_scale,
  gust_override,
  mass_change,
};

enum class LossPolicy : std::uint8_t { hold_last, zero };

enum class TriggerKind : std::uint8_t { time, altitude_above, altitude_below, speed_above, speed_below };

struct Trigger {
  TriggerKind kind = TriggerKind::time;
  double value = 0.0;  // t_on in s, altitude in m (up, relative to origin), speed in m/s
};

/// Deterministic wind components applied while the fault is active. The
/// gust amplitude is shaped as a 1 - cosine over the fault window.
struct GustOverride {
  std::optional<Vec3> constant_e;
  Vec3 gust_amplitude_e = Vec3::Zero();
};

struct FaultSpec {
  std::string name;
  FaultTarget target;
  FaultKind kind = FaultKind::loss_of_effectiveness;
  Trigger trigger;
  std::optional<double> duration;  // s; empty = permanent

  double factor = 1.0;          // loss_of_effectiveness in [0, 1], noise_scale >= 1
  Vec3 value = Vec3::Zero();    // stuck_at: rad/s in x for actuators, channel units for sensors
                                // (lat deg, lon deg, alt m for gps)
  LossPolicy policy = LossPolicy::hold_last;
  Vec3 offset = Vec3::Zero();   // bias_jump, channel units (x only for baro, NED m for gps)
  double mass_delta = 0.0;      // kg
  GustOverride gust;
};

/// Keeps the active-fault bit mask exactly representable as a double log column.
inline constexpr std::size_t kMaxFaults = 52;

class FaultScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Checks kind/target compatibility, value ranges and overlapping faults on
/// the same (target, kind). Throws FaultScheduleError.
void validate_schedule(std::span<const FaultSpec> schedule, std::size_t rotor_count, double vehicle_mass);

std::string_view to_string(FaultKind k);
std::string_view to_string(SensorChannel c);

struct SensorFaultEffect {
  bool lost = false;
  LossPolicy policy = LossPolicy::hold_last;
  std::optional<Vec3> stuck;
  Vec3 bias_offset = Vec3::Zero();
  bool bias_active = false;
  double noise_scale = 1.0;
};

struct ActiveEffects {
  std::vector<double> effectiveness;               // per rotor
  std::vector<std::optional<double>> stuck_speed;  // per rotor, rad/s
  std::array<SensorFaultEffect, kSensorChannelCount> sensors{};
  std::optional<GustOverride> wind;
  double wind_start = 0.0;
  std::optional<double> wind_duration;
  double mass_delta = 0.0;
  std::uint64_t active_mask = 0;  // bit i = schedule entry i is active
  bool any_actuator = false;
  bool any_sensor = false;
};

struct FaultEvent {
  double t;
  std::size_t index;
  bool activated;
};

class FaultEngine {
 public:
  FaultEngine() = default;
  FaultEngine(std::vector<FaultSpec> schedule, std::size_t rotor_count);

  /// Evaluates triggers at a tick boundary and rebuilds the active effects.
  /// Returns activation/deactivation events that happened at this tick.
  std::vector<FaultEvent> update(double t, const VehicleState& s);

  const ActiveEffects& effects() const { return effects_; }
  std::span<const FaultSpec> schedule() const { return schedule_; }

 private:
  struct Status {
    bool fired = false;
    bool active = false;
    double t_on = 0.0;
  };

  std::vector<FaultSpec> schedule_;
  std::vector<Status> status_;
  std::size_t rotor_count_ = 0;
  ActiveEffects effects_;
};

/// Sensor-path faults, applied downstream of the error model. last_good
/// keeps the most recent healthy outputs for hold-last signal loss.
class SensorFaultStage {
 public:
  explicit SensorFaultStage(const GeoPosition& origin) : origin_(origin) {}

  void apply(const ActiveEffects& effects, SensorReadings& readings);

 private:
  GeoPosition origin_;
  SensorReadings last_good_;
  bool have_last_ = false;
};

}  // namespace uvsim
