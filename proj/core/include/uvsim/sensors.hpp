#pragma once

// Sensor data and product models: ideal readings from truth, then noise,
// bias random walk, vibration-coupled noise and installation errors
//
//   x'  = x + b + n,        b' = n_b
//   x'' = T_e K_e (x' + p)
//
// where p is the lever-arm acceleration for accelerometers and zero for
// every other channel.

#include "uvsim/environment.hpp"
#include "uvsim/rigidbody.hpp"

#include <cstdint>
#include <deque>
#include <optional>
#include <random>

namespace uvsim {

struct ProductErrorModel {
  double noise_std = 0.0;        // sigma_a, channel units
  double bias_walk = 0.0;        // sigma_b, channel units / sqrt(s)
  Vec3 initial_bias = Vec3::Zero();
  Vec3 misalignment = Vec3::Zero();  // small-angle roll/pitch/yaw of T_e, rad
  Vec3 scale = Vec3::Ones();         // diagonal of K_e
  Vec3 lever_arm = Vec3::Zero();     // m, accelerometer only
  double vibration_gain = 0.0;       // extra noise std per rad/s of mean rotor speed

  void validate() const;
  /// True when the model adds nothing: zero noise, bias, misalignment,
  /// lever arm and unit scale.
  bool transparent() const;
};

Vec3 ideal_accel(const VehicleState& s, const EnvSample& env);
inline Vec3 ideal_gyro(const VehicleState& s) { return s.w_b; }
Vec3 ideal_mag(const VehicleState& s, const EnvSample& env);
/// Static pressure at the vehicle altitude, Pa.
double ideal_baro(const VehicleState& s, const GeoPosition& origin);

struct GpsFix {
  GeoPosition position;
  Vec3 v_e = Vec3::Zero();
};

GpsFix ideal_gps(const VehicleState& s, const GeoPosition& origin);

/// omega x (omega x p) + omega_dot x p
Vec3 lever_arm_acceleration(const Vec3& w, const Vec3& w_dot, const Vec3& lever_arm);

/// One stateful error channel (bias state plus its own RNG stream).
class ErrorChannel {
 public:
  ErrorChannel(const ProductErrorModel& model, std::uint64_t seed);

  const ProductErrorModel& model() const { return model_; }
  const Vec3& bias() const { return bias_; }

  /// Multiplies the white-noise std (noise_scale faults). Does not change
  /// the number of random draws.
  void set_noise_scale(double s) { noise_scale_ = s; }

  Vec3 corrupt(const Vec3& ideal, double rotor_mean_speed, double dt, const Vec3& additive = Vec3::Zero());
  /// Scalar degeneration: uses the x components of bias, scale.
  double corrupt(double ideal, double rotor_mean_speed, double dt);

 private:
  double noise_std(double rotor_mean_speed) const;
  bool draws_noise() const { return model_.noise_std > 0.0 || model_.vibration_gain > 0.0; }

  ProductErrorModel model_;
  Mat3 transform_;  // T_e K_e
  bool transparent_;
  Vec3 bias_;
  double noise_scale_ = 1.0;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

struct GpsConfig {
  double latency = 0.1;  // s
  ProductErrorModel position;  // m, NED
  ProductErrorModel velocity;  // m/s, NED
};

struct SensorSuiteConfig {
  ProductErrorModel accel;  // m/s^2
  ProductErrorModel gyro;   // rad/s
  ProductErrorModel mag;    // uT
  ProductErrorModel baro;   // Pa
  GpsConfig gps;

  void validate() const;
  static SensorSuiteConfig ideal();
};

struct SensorRates {
  double imu = 1000.0;
  double mag = 100.0;
  double baro = 50.0;
  double gps = 10.0;
};

/// Latest corrupted readings. *_updated flags are set for channels that
/// sampled on the current tick.
struct SensorReadings {
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
  Vec3 mag = Vec3::Zero();
  double baro = isa::kP0;
  double temperature = isa::kT0;
  std::optional<GpsFix> gps;  // latest released fix, if any

  bool imu_updated = false;
  bool mag_updated = false;
  bool baro_updated = false;
  bool gps_updated = false;
};

enum class SensorChannel : std::uint8_t { accel, gyro, mag, baro, gps };
inline constexpr std::size_t kSensorChannelCount = 5;

/// Owns every channel for one vehicle. Channels sample on integer tick
/// dividers of the physics rate; GPS output goes through a whole-tick
/// delay queue.
class SensorSuite {
 public:
  SensorSuite(const SensorSuiteConfig& cfg, const SensorRates& rates, double physics_rate,
              const GeoPosition& origin, std::uint64_t seed);

  const SensorReadings& sample(std::uint64_t tick, const VehicleState& s, const EnvSample& env,
                               double rotor_mean_speed);

  const SensorReadings& readings() const { return readings_; }
  void set_noise_scale(SensorChannel ch, double scale);

 private:
  struct Pending {
    std::uint64_t release_tick;
    GpsFix fix;
  };

  SensorSuiteConfig cfg_;
  GeoPosition origin_;
  double physics_rate_;
  std::uint64_t imu_div_, mag_div_, baro_div_, gps_div_, gps_delay_;
  ErrorChannel accel_, gyro_, mag_, baro_, gps_pos_, gps_vel_;
  std::deque<Pending> gps_queue_;
  SensorReadings readings_;
};

/// splitmix64 finalizer: decorrelated stream seeds from one global seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Integer divider rate_hz -> physics_rate. Throws std::invalid_argument
/// unless it divides evenly.
std::uint64_t rate_divider(double physics_rate, double rate_hz, const char* what);

}  // namespace uvsim
