#include "uvsim/refctrl.hpp"

#include "uvsim/environment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uvsim {

void ControllerConfig::validate() const {
  const auto nonneg = [](const Vec3& v) { return v.allFinite() && (v.array() >= 0.0).all(); };
  if (!nonneg(pos_kp) || !nonneg(vel_kp) || !nonneg(vel_ki) || !nonneg(vel_kd) || !nonneg(vel_i_limit) ||
      !nonneg(att_kp) || !nonneg(rate_kp) || !nonneg(rate_ki) || !nonneg(rate_kd) || !nonneg(rate_i_limit)) {
    throw std::invalid_argument("ControllerConfig: gains must be finite and >= 0");
  }
  if (!(max_horizontal_speed > 0.0) || !(max_climb > 0.0) || !(max_descent > 0.0) ||
      !((max_rate.array() > 0.0).all()) || !(max_tilt > 0.0 && max_tilt < 0.5 * kPi)) {
    throw std::invalid_argument("ControllerConfig: limits must be positive (tilt below 90 deg)");
  }
  if (!(hover_throttle > 0.0 && hover_throttle < 1.0) || !(thrust_gain > 0.0) ||
      !(min_throttle >= 0.0 && min_throttle < hover_throttle)) {
    throw std::invalid_argument("ControllerConfig: throttle model out of range");
  }
  if (!(filter_tau > 0.0) || !(horizontal_tau > 0.0) || !(vertical_tau > 0.0) || !(accel_weight >= 0.0) ||
      !(mag_weight >= 0.0) || !(gyro_bias_ki >= 0.0) || !(gps_delay >= 0.0) || !(gps_timeout > 0.0) ||
      !(gravity > 0.0) || !(accel_ref_tau >= 0.0) || (mag_declination && !std::isfinite(*mag_declination))) {
    throw std::invalid_argument("ControllerConfig: estimator parameters out of range");
  }
}

DecodedFrames read_frames(bus::SpiDevice& imu, bus::SpiDevice& mag, bus::SpiDevice& baro,
                          bus::GpsStreamParser& gps_parser, std::span<const std::uint8_t> uart_rx) {
  DecodedFrames f;
  const auto imu_bytes = imu.read_burst(bus::imu::kAccelXoutH, bus::imu::kBurstLength);
  f.imu = bus::decode_imu_burst(std::span<const std::uint8_t, bus::imu::kBurstLength>(imu_bytes.data(),
                                                                                      bus::imu::kBurstLength));
  const auto mag_bytes = mag.read_burst(bus::mag::kHxl, bus::mag::kDataLength);
  f.mag = bus::decode_mag(std::span<const std::uint8_t, bus::mag::kDataLength>(mag_bytes.data(),
                                                                               bus::mag::kDataLength));
  const auto baro_bytes = baro.read_burst(bus::baro::kPressMsb, bus::baro::kDataLength);
  f.baro = bus::decode_baro(std::span<const std::uint8_t, bus::baro::kDataLength>(baro_bytes.data(),
                                                                                  bus::baro::kDataLength));
  f.gps = gps_parser.feed(uart_rx);
  return f;
}

// --- estimator --------------------------------------------------------------

Estimator::Estimator(const ControllerConfig& cfg, const GeoPosition& home) : cfg_(cfg), home_(home) {
  cfg_.validate();
  if (!home_.valid()) {
    throw std::invalid_argument("Estimator: invalid home position");
  }
  if (cfg_.mag_declination) {
    declination_ = *cfg_.mag_declination;
  } else {
    const Vec3 m = mag_at(home_);
    declination_ = std::atan2(m.y(), m.x());
  }
}

void Estimator::set_attitude(const Rotation& r) {
  est_.attitude = r;
  est_.initialized = true;
}

void Estimator::initialize(const DecodedFrames& frames) {
  est_.initialized = true;
  if (frames.baro.pressure > 1000.0) {
    est_.position.z() = -(isa_pressure_altitude(frames.baro.pressure) - home_.altitude_m);
  }
  if (!cfg_.init_from_sensors) return;
  const Vec3& f = frames.imu.accel;
  if (f.norm() < 0.5 * cfg_.gravity) return;
  const double roll = std::atan2(-f.y(), -f.z());
  const double pitch = std::atan2(f.x(), std::hypot(f.y(), f.z()));
  double yaw = 0.0;
  if (frames.mag.squaredNorm() > 0.0) {
    const Vec3 h = Rotation::from_euler(roll, pitch, 0.0).apply(frames.mag);
    yaw = wrap_pi(declination_ - std::atan2(h.y(), h.x()));
  }
  est_.attitude = Rotation::from_euler(roll, pitch, yaw);
}

constexpr double kBiasLearnMaxError = 0.05;  // rad

void Estimator::update_attitude(const DecodedFrames& frames, double dt) {
  const Vec3& gyro = frames.imu.gyro;
  Vec3 e = Vec3::Zero();

  const Vec3& f = frames.imu.accel;
  const double fn = f.norm();
  if (cfg_.accel_weight > 0.0) {
    if (tilt_error_e_ && !est_.degraded) {
      e += cfg_.accel_weight * est_.attitude.apply_inverse(*tilt_error_e_);
    } else if (fn > 0.5 * cfg_.gravity && fn < 1.5 * cfg_.gravity) {
      const Vec3 up_b = est_.attitude.apply_inverse(Vec3(0.0, 0.0, -1.0));
      e += cfg_.accel_weight * (f / fn).cross(up_b);
    }
  }
  if (cfg_.mag_weight > 0.0) {
    const Vec3 h = est_.attitude.apply(frames.mag);
    if (std::hypot(h.x(), h.y()) > 1e-3) {
      const double yaw_err = -wrap_pi(std::atan2(h.y(), h.x()) - declination_);
      e += cfg_.mag_weight * est_.attitude.apply_inverse(Vec3(0.0, 0.0, yaw_err));
    }
  }

  // Large errors are attitude transients, not bias; learning through them
  // winds the integrator up.
  if (cfg_.gyro_bias_ki > 0.0 && e.norm() < kBiasLearnMaxError) {
    est_.gyro_bias -= cfg_.gyro_bias_ki * e * dt;
  }
  const Vec3 w = gyro - est_.gyro_bias;
  const Vec3 w_corr = w + e / cfg_.filter_tau;
  est_.attitude = est_.attitude * Rotation::from_rotation_vector(w_corr * dt);
  est_.rates = w;
}

void Estimator::update_translation(const DecodedFrames& frames, double dt) {
  const Vec3 a = est_.attitude.apply(frames.imu.accel) + Vec3(0.0, 0.0, cfg_.gravity) + accel_bias_e_;
  est_.accel = a;
  sf_history_.push_back(est_.attitude.apply(frames.imu.accel));
  while (sf_history_.size() > delay_steps_ + 64) sf_history_.pop_front();
  ++steps_since_fix_;
  est_.position += est_.velocity * dt + 0.5 * a * dt * dt;
  est_.velocity += a * dt;

  // Baro altitude, continuous correction of the vertical channel.
  if (frames.baro.pressure > 1000.0) {
    const double z_meas = -(isa_pressure_altitude(frames.baro.pressure) - home_.altitude_m);
    const double ez = z_meas - est_.position.z();
    const double tau = cfg_.vertical_tau;
    est_.position.z() += 3.0 / tau * ez * dt;
    est_.velocity.z() += 3.0 / (tau * tau) * ez * dt;
    accel_bias_e_.z() += 1.0 / (tau * tau * tau) * ez * dt;
  }

  history_.push_back(est_.position);
  while (history_.size() > delay_steps_ + 1) history_.pop_front();

  for (const auto& fix : frames.gps) {
    const Vec3 meas = lla_to_ned(home_, fix.position);
    Vec3 dp = Vec3::Zero();
    if (!have_fix_) {
      dp.head<2>() = meas.head<2>() + fix.v_e.head<2>() * cfg_.gps_delay - est_.position.head<2>();
      est_.velocity.head<2>() = fix.v_e.head<2>();
      have_fix_ = true;
    } else {
      const double tg = std::clamp(time_ - last_fix_time_.value_or(time_), dt, 1.0);
      const Vec3 e(meas.x() - history_.front().x(), meas.y() - history_.front().y(), 0.0);
      const double tau = cfg_.horizontal_tau;
      dp = 3.0 / tau * tg * e;
      est_.velocity += 3.0 / (tau * tau) * tg * e;
      accel_bias_e_ += 1.0 / (tau * tau * tau) * tg * e;
    }
    est_.position += dp;
    for (auto& p : history_) p += dp;
    if (cfg_.accel_ref_tau > 0.0 && last_gps_velocity_ && last_fix_time_ && time_ > *last_fix_time_ &&
        steps_since_fix_ > 0 && sf_history_.size() > delay_steps_ + steps_since_fix_) {
      const double tg = time_ - *last_fix_time_;
      const Vec3 raw = (fix.v_e - *last_gps_velocity_) / tg;
      // Mean specific force over the same (delayed) window.
      Vec3 sf = Vec3::Zero();
      const std::size_t end = sf_history_.size() - delay_steps_;
      for (std::size_t i = end - steps_since_fix_; i < end; ++i) sf += sf_history_[i];
      sf /= static_cast<double>(steps_since_fix_);
      const double alpha = tg / (tg + cfg_.accel_ref_tau);
      accel_ref_ += alpha * (raw - accel_ref_);
      sf_ref_ += alpha * (sf - sf_ref_);
      const Vec3 f_ref = accel_ref_ - Vec3(0.0, 0.0, cfg_.gravity);
      if (sf_ref_.norm() > 0.5 * cfg_.gravity) {
        tilt_error_e_ = sf_ref_.normalized().cross(f_ref.normalized());
      }
    }
    last_gps_velocity_ = fix.v_e;
    steps_since_fix_ = 0;
    last_fix_time_ = time_;
  }
  est_.degraded = !last_fix_time_ || time_ - *last_fix_time_ > cfg_.gps_timeout;
}

const Estimate& Estimator::update(const DecodedFrames& frames, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("Estimator::update: dt must be > 0");
  }
  if (!est_.initialized) initialize(frames);
  if (time_ == 0.0) delay_steps_ = static_cast<std::size_t>(std::llround(cfg_.gps_delay / dt));
  time_ += dt;
  update_attitude(frames, dt);
  update_translation(frames, dt);
  return est_;
}

// --- controller -------------------------------------------------------------

std::array<double, 4> mix_x(double collective, const Vec3& u) {
  // FR, RL, FL, RR. Roll moment is -y * T, pitch +x * T, yaw follows the spin.
  return {collective - u.x() + u.y() + u.z(), collective + u.x() - u.y() + u.z(),
          collective + u.x() + u.y() - u.z(), collective - u.x() - u.y() - u.z()};
}

Controller::Controller(const ControllerConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

void Controller::reset() {
  vel_int_.setZero();
  rate_int_.setZero();
  last_rates_.reset();
  rate_sp_.setZero();
}

namespace {

Vec3 clamp_abs(const Vec3& v, const Vec3& lim) { return v.cwiseMax(-lim).cwiseMin(lim); }

}  // namespace

bus::PwmCommand Controller::control(const Estimate& est, const Setpoint& sp, double dt) {
  bus::PwmCommand out;
  out.pulse_us.assign(4, bus::kPwmMin);
  if (sp.mode == SetpointMode::idle) {
    reset();
    return out;
  }

  const double g = cfg_.gravity;
  double collective = 0.0;
  if (sp.mode == SetpointMode::position) {
    Vec3 v_sp = cfg_.pos_kp.cwiseProduct(sp.position - est.position);
    const double vh = v_sp.head<2>().norm();
    if (vh > cfg_.max_horizontal_speed) v_sp.head<2>() *= cfg_.max_horizontal_speed / vh;
    v_sp.z() = std::clamp(v_sp.z(), -cfg_.max_climb, cfg_.max_descent);

    const Vec3 ev = v_sp - est.velocity;
    vel_int_ = clamp_abs(vel_int_ + ev * dt, cfg_.vel_i_limit);
    const Vec3 a_sp = cfg_.vel_kp.cwiseProduct(ev) + cfg_.vel_ki.cwiseProduct(vel_int_) -
                      cfg_.vel_kd.cwiseProduct(est.accel);

    // Thrust vector (NED, direction the rotors push) with a tilt limit.
    Vec3 thrust = a_sp - Vec3(0.0, 0.0, g);
    thrust.z() = std::min(thrust.z(), -0.1 * g);
    const double h = thrust.head<2>().norm();
    const double h_max = -thrust.z() * std::tan(cfg_.max_tilt);
    if (h > h_max) thrust.head<2>() *= h_max / h;

    const Vec3 b3 = -thrust.normalized();
    const Vec3 c(std::cos(sp.yaw), std::sin(sp.yaw), 0.0);
    const Vec3 b2 = b3.cross(c).normalized();
    const Vec3 b1 = b2.cross(b3);
    Mat3 r;
    r << b1, b2, b3;
    att_sp_ = Rotation(Eigen::Quaterniond(r));

    const double along = thrust.dot(-est.attitude.apply(Vec3(0.0, 0.0, 1.0)));
    collective = cfg_.hover_throttle + cfg_.thrust_gain * (std::max(along, 0.0) / g - 1.0);
  } else {
    att_sp_ = Rotation::from_euler(sp.attitude.x(), sp.attitude.y(), sp.attitude.z());
    collective = sp.throttle;
  }
  collective = std::clamp(collective, cfg_.min_throttle, 1.0);

  // Tilt first: the reduced setpoint only re-points body z; yaw is blended
  // back in with weight att_kp.z / att_kp.x so heading changes do not eat
  // into roll and pitch authority.
  const Eigen::Quaterniond q = est.attitude.quaternion();
  Eigen::Quaterniond qd = att_sp_.quaternion();
  const Vec3 ez = q * Vec3(0.0, 0.0, 1.0);
  const Vec3 ez_d = qd * Vec3(0.0, 0.0, 1.0);
  const Eigen::Quaterniond qd_red = Eigen::Quaterniond::FromTwoVectors(ez, ez_d) * q;
  Eigen::Quaterniond q_mix = qd_red.conjugate() * qd;
  if (q_mix.w() < 0.0) q_mix.coeffs() *= -1.0;
  const double yaw_w = std::clamp(cfg_.att_kp.z() / cfg_.att_kp.x(), 0.0, 1.0);
  const double half = yaw_w * std::atan2(q_mix.z(), q_mix.w());
  qd = qd_red * Eigen::Quaterniond(std::cos(half), 0.0, 0.0, std::sin(half));

  Eigen::Quaterniond qe = q.conjugate() * qd;
  if (qe.w() < 0.0) qe.coeffs() *= -1.0;
  // Undo the yaw weight in the gain so small heading errors still see att_kp.z.
  Vec3 kp = cfg_.att_kp;
  if (yaw_w > 0.0) kp.z() /= yaw_w;
  rate_sp_ = clamp_abs(2.0 * kp.cwiseProduct(qe.vec()), cfg_.max_rate);

  const Vec3 er = rate_sp_ - est.rates;
  rate_int_ = clamp_abs(rate_int_ + er * dt, cfg_.rate_i_limit);
  Vec3 u = cfg_.rate_kp.cwiseProduct(er) + cfg_.rate_ki.cwiseProduct(rate_int_);
  if (last_rates_) u -= cfg_.rate_kd.cwiseProduct(est.rates - *last_rates_) / dt;
  last_rates_ = est.rates;

  const auto m = mix_x(collective, u);
  for (std::size_t i = 0; i < 4; ++i) out.pulse_us[i] = bus::encode_pwm(m[i]);
  return out;
}

// --- autopilot --------------------------------------------------------------

ReferenceAutopilot::ReferenceAutopilot(const ControllerConfig& cfg, const GeoPosition& home)
    : estimator_(cfg, home), controller_(cfg) {}

bus::PwmCommand ReferenceAutopilot::step(bus::SpiDevice& imu, bus::SpiDevice& mag, bus::SpiDevice& baro,
                                         std::span<const std::uint8_t> uart_rx, const Setpoint& sp, double dt) {
  const auto frames = read_frames(imu, mag, baro, gps_parser_, uart_rx);
  const auto& est = estimator_.update(frames, dt);
  return controller_.control(est, sp, dt);
}

}  // namespace uvsim
