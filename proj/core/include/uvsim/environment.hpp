#pragma once

// Environment: WGS84 normal gravity, ISA troposphere, tilted-dipole
// geomagnetic field, and composite wind (turbulence + prevailing + shear +
// gust).

#include "uvsim/frames.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace uvsim {

struct EnvSample {
  double g = 9.80665;        // m/s^2, down-positive
  double rho = 1.225;        // kg/m^3
  double temperature = 288.15;  // K
  double pressure = 101325.0;   // Pa
  Vec3 mag_e = Vec3::Zero();    // uT, NED
  Vec3 wind_e = Vec3::Zero();   // m/s, NED
};

namespace isa {
inline constexpr double kT0 = 288.15;      // K
inline constexpr double kP0 = 101325.0;    // Pa
inline constexpr double kRho0 = 1.225;     // kg/m^3
inline constexpr double kLapse = 0.0065;   // K/m
inline constexpr double kRAir = 287.05287; // J/(kg K)
inline constexpr double kG0 = 9.80665;     // m/s^2
inline constexpr double kMinAltitude = -1000.0;
inline constexpr double kMaxAltitude = 11000.0;
}  // namespace isa

struct Atmosphere {
  double rho;
  double temperature;
  double pressure;
};

/// Somigliana normal gravity with second-order free-air correction.
double gravity_at(const GeoPosition& p);

/// Troposphere only. Throws std::out_of_range outside [-1000, 11000] m.
Atmosphere isa_at(double altitude_m);

/// Pressure altitude for a static pressure reading (inverse of isa_at).
double isa_pressure_altitude(double pressure_pa);

/// Degree-1 geomagnetic coefficients, nT. Defaults: IGRF-13, epoch 2020.0.
struct DipoleModel {
  double g10 = -29404.8;
  double g11 = -1450.9;
  double h11 = 4652.5;
};

/// Tilted-dipole field at p, uT in the local NED frame.
Vec3 mag_at(const GeoPosition& p, const DipoleModel& model = {});

struct WindConfig {
  Vec3 constant_e = Vec3::Zero();

  // Power-law shear: speed = ref_speed * (h / ref_height)^exponent, h above ground.
  double shear_ref_speed = 0.0;
  double shear_ref_height = 6.096;
  double shear_exponent = 1.0 / 7.0;
  double shear_heading_deg = 0.0;  // direction the shear wind blows toward

  // "1 - cosine" gust over [start, start + duration].
  Vec3 gust_amplitude_e = Vec3::Zero();
  double gust_start = 0.0;
  double gust_duration = 0.0;

  // Dryden turbulence along the earth axes (u: north, v: east, w: down).
  Vec3 turbulence_sigma = Vec3::Zero();
  Vec3 turbulence_length = Vec3(200.0, 200.0, 50.0);
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

inline constexpr double kTurbulenceMinAirspeed = 1.0;

/// Stateful Dryden shaping filters. Discretized exactly for the current
/// airspeed and step so sample statistics match the continuous process.
class DrydenTurbulence {
 public:
  DrydenTurbulence(const Vec3& sigma, const Vec3& length, std::uint64_t seed);

  /// Advances by dt and returns (u, v, w). airspeed floors at 1 m/s.
  Vec3 step(double airspeed, double dt);

  bool enabled() const { return enabled_; }

 private:
  struct Discretization {
    double airspeed = -1.0;
    double dt = -1.0;
    double phi_u = 0.0, gain_u = 0.0;
    Eigen::Matrix2d phi_v, chol_v, phi_w, chol_w;
  };
  void rediscretize(double airspeed, double dt);

  Vec3 sigma_;
  Vec3 length_;
  bool enabled_;
  double u_ = 0.0;
  Eigen::Vector2d v_ = Eigen::Vector2d::Zero();
  Eigen::Vector2d w_ = Eigen::Vector2d::Zero();
  Discretization disc_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Composite wind for one vehicle. Call step() exactly once per tick.
class WindModel {
 public:
  explicit WindModel(const WindConfig& cfg);

  const WindConfig& config() const { return cfg_; }

  /// Replaces the deterministic components (constant, shear, gust) without
  /// touching the turbulence filter state.
  void set_deterministic(const WindConfig& cfg);

  Vec3 step(const Vec3& p_e, double airspeed, double t, double dt);

  Vec3 shear(const Vec3& p_e) const;
  Vec3 gust(double t) const;

 private:
  WindConfig cfg_;
  DrydenTurbulence turbulence_;
};

/// Stateless functional form: a fresh filter per call is meaningless, so
/// this takes the owning model explicitly.
inline Vec3 wind_at(WindModel& model, const Vec3& p_e, double airspeed, double t, double dt) {
  return model.step(p_e, airspeed, t, dt);
}

struct EnvironmentConfig {
  GeoPosition origin{47.397742, 8.545594, 488.0};
  DipoleModel dipole;
  WindConfig wind;
};

/// Samples gravity, atmosphere, magnetic field and wind at the vehicle pose.
class Environment {
 public:
  explicit Environment(const EnvironmentConfig& cfg);

  const EnvironmentConfig& config() const { return cfg_; }
  WindModel& wind() { return wind_; }

  EnvSample sample(const Vec3& p_e, const Vec3& v_e, double t, double dt);

 private:
  EnvironmentConfig cfg_;
  WindModel wind_;
};

}  // namespace uvsim
