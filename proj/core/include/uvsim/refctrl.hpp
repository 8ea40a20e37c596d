#pragma once

// Reference autopilot used as the device under test when no external
// controller is attached. Everything it knows comes off the emulated bus:
// SPI burst reads of the IMU, magnetometer and barometer chips and the GPS
// UART byte stream.

#include "uvsim/buscodec.hpp"
#include "uvsim/frames.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace uvsim {

struct ControllerConfig {
  // position -> velocity
  Vec3 pos_kp{1.0, 1.0, 1.2};
  double max_horizontal_speed = 5.0;  // m/s
  double max_climb = 2.5;             // m/s
  double max_descent = 1.5;           // m/s

  // velocity -> acceleration
  Vec3 vel_kp{1.8, 1.8, 3.5};
  Vec3 vel_ki{0.4, 0.4, 1.5};
  Vec3 vel_kd{0.0, 0.0, 0.0};  // on the estimated acceleration
  Vec3 vel_i_limit{2.0, 2.0, 3.0};

  // attitude -> body rate
  Vec3 att_kp{7.0, 7.0, 2.5};
  Vec3 max_rate{3.5, 3.5, 1.5};  // rad/s
  double max_tilt = 35.0 * kDegToRad;

  // body rate -> normalized torque
  Vec3 rate_kp{0.06, 0.06, 0.25};
  Vec3 rate_ki{0.10, 0.10, 0.10};
  Vec3 rate_kd{0.0012, 0.0012, 0.0};
  Vec3 rate_i_limit{0.1, 0.1, 0.1};

  double hover_throttle = 0.62;
  double thrust_gain = 0.25;  // throttle per g of extra collective acceleration
  double min_throttle = 0.05;

  // estimator
  double filter_tau = 1.0;     // attitude complementary filter time constant, s
  double accel_weight = 1.0;   // 0 disables tilt correction
  double mag_weight = 1.0;     // 0 disables heading correction
  double gyro_bias_ki = 0.02;  // 0 disables gyro bias estimation
  std::optional<double> mag_declination;  // rad, east positive; empty: dipole field at home
  double gravity = 9.80665;
  double horizontal_tau = 1.5;  // GPS position filter time constant, s
  double vertical_tau = 2.0;    // baro altitude filter time constant, s
  double gps_delay = 0.1;       // s, receiver latency compensated by the filter
  double gps_timeout = 0.5;     // s without a fix before the estimate is degraded
  double accel_ref_tau = 0.2;   // s, low-pass on GPS-derived acceleration; 0 disables compensation
  bool init_from_sensors = true;

  void validate() const;
};

struct DecodedFrames {
  bus::ImuSample imu;
  Vec3 mag = Vec3::Zero();  // uT
  bus::BaroSample baro{0.0, 0.0};
  std::vector<GpsFix> gps;  // fixes completed since the last read
};

/// Drains the bus: one IMU burst, one magnetometer and one barometer data
/// read, plus whatever GPS bytes arrived.
DecodedFrames read_frames(bus::SpiDevice& imu, bus::SpiDevice& mag, bus::SpiDevice& baro,
                          bus::GpsStreamParser& gps_parser, std::span<const std::uint8_t> uart_rx);

struct Estimate {
  Rotation attitude;
  Vec3 rates = Vec3::Zero();     // body, bias-corrected
  Vec3 position = Vec3::Zero();  // NED relative to home
  Vec3 velocity = Vec3::Zero();  // NED
  Vec3 accel = Vec3::Zero();     // NED kinematic acceleration
  Vec3 gyro_bias = Vec3::Zero();
  bool degraded = true;  // no recent GPS fix: horizontal channel is dead-reckoned
  bool initialized = false;
};

class Estimator {
 public:
  Estimator(const ControllerConfig& cfg, const GeoPosition& home);

  const Estimate& update(const DecodedFrames& frames, double dt);
  const Estimate& estimate() const { return est_; }
  /// Forces the attitude and skips sensor initialization.
  void set_attitude(const Rotation& r);

 private:
  void initialize(const DecodedFrames& frames);
  void update_attitude(const DecodedFrames& frames, double dt);
  void update_translation(const DecodedFrames& frames, double dt);

  ControllerConfig cfg_;
  GeoPosition home_;
  double declination_ = 0.0;
  Estimate est_;
  Vec3 accel_bias_e_ = Vec3::Zero();
  std::deque<Vec3> history_;  // past position estimates, newest at back
  std::size_t delay_steps_ = 0;
  double time_ = 0.0;
  std::optional<double> last_fix_time_;
  bool have_fix_ = false;
  // Manoeuvre compensation: GPS velocity differences give the kinematic
  // acceleration over a past window; the estimator compares it with its own
  // earth-frame specific force averaged over the same window.
  std::optional<Vec3> last_gps_velocity_;
  std::deque<Vec3> sf_history_;
  std::size_t steps_since_fix_ = 0;
  Vec3 accel_ref_ = Vec3::Zero();
  Vec3 sf_ref_ = Vec3::Zero();
  std::optional<Vec3> tilt_error_e_;
};

enum class SetpointMode : std::uint8_t { idle, position, attitude };

struct Setpoint {
  SetpointMode mode = SetpointMode::idle;
  Vec3 position = Vec3::Zero();  // NED relative to home
  double yaw = 0.0;              // rad
  Vec3 attitude = Vec3::Zero();  // roll, pitch, yaw (attitude mode)
  double throttle = 0.0;         // attitude mode collective

  friend bool operator==(const Setpoint&, const Setpoint&) = default;
};

/// Per-motor throttle in X-quad order FR, RL, FL, RR from a collective and
/// a normalized body torque command.
std::array<double, 4> mix_x(double collective, const Vec3& torque);

class Controller {
 public:
  explicit Controller(const ControllerConfig& cfg);

  bus::PwmCommand control(const Estimate& est, const Setpoint& sp, double dt);
  void reset();

  const Vec3& rate_setpoint() const { return rate_sp_; }
  const Rotation& attitude_setpoint() const { return att_sp_; }

 private:
  ControllerConfig cfg_;
  Vec3 vel_int_ = Vec3::Zero();
  Vec3 rate_int_ = Vec3::Zero();
  std::optional<Vec3> last_rates_;
  Vec3 rate_sp_ = Vec3::Zero();
  Rotation att_sp_;
};

/// Estimator + controller + bus drivers for one vehicle.
class ReferenceAutopilot {
 public:
  ReferenceAutopilot(const ControllerConfig& cfg, const GeoPosition& home);

  bus::PwmCommand step(bus::SpiDevice& imu, bus::SpiDevice& mag, bus::SpiDevice& baro,
                       std::span<const std::uint8_t> uart_rx, const Setpoint& sp, double dt);

  const Estimate& estimate() const { return estimator_.estimate(); }
  Estimator& estimator() { return estimator_; }
  const Controller& controller() const { return controller_; }

 private:
  bus::GpsStreamParser gps_parser_;
  Estimator estimator_;
  Controller controller_;
};

}  // namespace uvsim
