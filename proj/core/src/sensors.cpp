#include "uvsim/sensors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace uvsim {

void ProductErrorModel::validate() const {
  if (!(noise_std >= 0.0) || !(bias_walk >= 0.0) || !(vibration_gain >= 0.0)) {
    throw std::invalid_argument("ProductErrorModel: noise, bias walk and vibration gain must be >= 0");
  }
  if (!(scale.array() >= 0.9).all() || !(scale.array() <= 1.1).all()) {
    throw std::invalid_argument("ProductErrorModel: scale factors must lie in [0.9, 1.1]");
  }
  if (!misalignment.allFinite() || misalignment.norm() > 5.0 * kDegToRad) {
    throw std::invalid_argument("ProductErrorModel: misalignment must be within 5 deg");
  }
  if (!initial_bias.allFinite() || !lever_arm.allFinite()) {
    throw std::invalid_argument("ProductErrorModel: non-finite bias or lever arm");
  }
}

bool ProductErrorModel::transparent() const {
  return noise_std == 0.0 && bias_walk == 0.0 && vibration_gain == 0.0 && initial_bias.isZero(0.0) &&
         misalignment.isZero(0.0) && scale == Vec3::Ones() && lever_arm.isZero(0.0);
}

Vec3 ideal_accel(const VehicleState& s, const EnvSample& env) {
  // Inertial acceleration in body axes is v_b' + w x v_b.
  const Vec3 inertial = s.a_b + s.w_b.cross(s.v_b);
  return inertial - s.att.apply_inverse(Vec3(0.0, 0.0, env.g));
}

Vec3 ideal_mag(const VehicleState& s, const EnvSample& env) { return s.att.apply_inverse(env.mag_e); }

double ideal_baro(const VehicleState& s, const GeoPosition& origin) {
  return isa_at(origin.altitude_m - s.p_e.z()).pressure;
}

GpsFix ideal_gps(const VehicleState& s, const GeoPosition& origin) {
  return {ned_to_lla(origin, s.p_e), s.att.apply(s.v_b)};
}

Vec3 lever_arm_acceleration(const Vec3& w, const Vec3& w_dot, const Vec3& lever_arm) {
  return w.cross(w.cross(lever_arm)) + w_dot.cross(lever_arm);
}

ErrorChannel::ErrorChannel(const ProductErrorModel& model, std::uint64_t seed)
    : model_(model), transparent_(model.transparent()), bias_(model.initial_bias), rng_(seed) {
  model_.validate();
  transform_ = Rotation::from_rotation_vector(model_.misalignment).matrix() * model_.scale.asDiagonal();
}

double ErrorChannel::noise_std(double rotor_mean_speed) const {
  return (model_.noise_std + model_.vibration_gain * std::abs(rotor_mean_speed)) * noise_scale_;
}

Vec3 ErrorChannel::corrupt(const Vec3& ideal, double rotor_mean_speed, double dt, const Vec3& additive) {
  if (transparent_ && additive.isZero(0.0)) {
    return ideal;
  }
  if (model_.bias_walk > 0.0) {
    const double k = model_.bias_walk * std::sqrt(dt);
    for (int i = 0; i < 3; ++i) bias_(i) += k * normal_(rng_);
  }
  Vec3 noise = Vec3::Zero();
  if (draws_noise()) {
    const double sd = noise_std(rotor_mean_speed);
    for (int i = 0; i < 3; ++i) noise(i) = sd * normal_(rng_);
  }
  return transform_ * (ideal + bias_ + noise + additive);
}

double ErrorChannel::corrupt(double ideal, double rotor_mean_speed, double dt) {
  if (transparent_) {
    return ideal;
  }
  if (model_.bias_walk > 0.0) {
    bias_.x() += model_.bias_walk * std::sqrt(dt) * normal_(rng_);
  }
  double noise = 0.0;
  if (draws_noise()) {
    noise = noise_std(rotor_mean_speed) * normal_(rng_);
  }
  return model_.scale.x() * (ideal + bias_.x() + noise);
}

void SensorSuiteConfig::validate() const {
  accel.validate();
  gyro.validate();
  mag.validate();
  baro.validate();
  gps.position.validate();
  gps.velocity.validate();
  if (!(gps.latency >= 0.0)) {
    throw std::invalid_argument("GpsConfig: latency must be >= 0");
  }
}

SensorSuiteConfig SensorSuiteConfig::ideal() {
  SensorSuiteConfig c;
  c.gps.latency = 0.0;
  return c;
}

std::uint64_t rate_divider(double physics_rate, double rate_hz, const char* what) {
  if (!(rate_hz > 0.0) || rate_hz > physics_rate) {
    throw std::invalid_argument(std::string(what) + ": rate must be in (0, physics rate]");
  }
  const double ratio = physics_rate / rate_hz;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * ratio) {
    throw std::invalid_argument(std::string(what) + ": rate must divide the physics rate evenly");
  }
  return static_cast<std::uint64_t>(rounded);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

SensorSuite::SensorSuite(const SensorSuiteConfig& cfg, const SensorRates& rates, double physics_rate,
                         const GeoPosition& origin, std::uint64_t seed)
    : cfg_(cfg),
      origin_(origin),
      physics_rate_(physics_rate),
      imu_div_(rate_divider(physics_rate, rates.imu, "imu")),
      mag_div_(rate_divider(physics_rate, rates.mag, "mag")),
      baro_div_(rate_divider(physics_rate, rates.baro, "baro")),
      gps_div_(rate_divider(physics_rate, rates.gps, "gps")),
      gps_delay_(static_cast<std::uint64_t>(std::llround(cfg.gps.latency * physics_rate))),
      accel_(cfg.accel, mix_seed(seed, 1)),
      gyro_(cfg.gyro, mix_seed(seed, 2)),
      mag_(cfg.mag, mix_seed(seed, 3)),
      baro_(cfg.baro, mix_seed(seed, 4)),
      gps_pos_(cfg.gps.position, mix_seed(seed, 5)),
      gps_vel_(cfg.gps.velocity, mix_seed(seed, 6)) {
  cfg_.validate();
}

void SensorSuite::set_noise_scale(SensorChannel ch, double scale) {
  switch (ch) {
    case SensorChannel::accel: accel_.set_noise_scale(scale); break;
    case SensorChannel::gyro: gyro_.set_noise_scale(scale); break;
    case SensorChannel::mag: mag_.set_noise_scale(scale); break;
    case SensorChannel::baro: baro_.set_noise_scale(scale); break;
    case SensorChannel::gps:
      gps_pos_.set_noise_scale(scale);
      gps_vel_.set_noise_scale(scale);
      break;
  }
}

const SensorReadings& SensorSuite::sample(std::uint64_t tick, const VehicleState& s, const EnvSample& env,
                                          double rotor_mean_speed) {
  auto& r = readings_;
  r.imu_updated = r.mag_updated = r.baro_updated = r.gps_updated = false;

  if (tick % imu_div_ == 0) {
    const double dt = static_cast<double>(imu_div_) / physics_rate_;
    const Vec3 lever = cfg_.accel.lever_arm.isZero(0.0)
                           ? Vec3::Zero()
                           : lever_arm_acceleration(s.w_b, s.w_dot_b, cfg_.accel.lever_arm);
    r.accel = accel_.corrupt(ideal_accel(s, env), rotor_mean_speed, dt, lever);
    r.gyro = gyro_.corrupt(ideal_gyro(s), rotor_mean_speed, dt);
    r.temperature = env.temperature;
    r.imu_updated = true;
  }
  if (tick % mag_div_ == 0) {
    const double dt = static_cast<double>(mag_div_) / physics_rate_;
    r.mag = mag_.corrupt(ideal_mag(s, env), rotor_mean_speed, dt);
    r.mag_updated = true;
  }
  if (tick % baro_div_ == 0) {
    const double dt = static_cast<double>(baro_div_) / physics_rate_;
    r.baro = baro_.corrupt(env.pressure, rotor_mean_speed, dt);
    r.baro_updated = true;
  }
  if (tick % gps_div_ == 0) {
    const double dt = static_cast<double>(gps_div_) / physics_rate_;
    const Vec3 p = gps_pos_.corrupt(s.p_e, 0.0, dt);
    const Vec3 v = gps_vel_.corrupt(s.att.apply(s.v_b), 0.0, dt);
    gps_queue_.push_back({tick + gps_delay_, GpsFix{ned_to_lla(origin_, p), v}});
  }
  while (!gps_queue_.empty() && gps_queue_.front().release_tick <= tick) {
    r.gps = gps_queue_.front().fix;
    r.gps_updated = true;
    gps_queue_.pop_front();
  }
  return r;
}

}  // namespace uvsim
