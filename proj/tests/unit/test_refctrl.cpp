#include "uvsim/environment.hpp"
#include "uvsim/refctrl.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

using namespace uvsim;

namespace {

const GeoPosition kHome{47.397, 8.546, 488.0};

double angle_between(const Rotation& a, const Rotation& b) {
  return a.quaternion().angularDistance(b.quaternion());
}

// Noise-free sensor frames of a vehicle at rest at the given NED position.
DecodedFrames static_frames(const Rotation& att, const Vec3& p_ned, bool with_fix) {
  DecodedFrames f;
  f.imu.accel = att.apply_inverse(Vec3(0, 0, -9.80665));
  f.mag = att.apply_inverse(mag_at(kHome));
  f.baro.pressure = isa_at(kHome.altitude_m - p_ned.z()).pressure;
  f.baro.temperature = 288.15;
  if (with_fix) f.gps.push_back(GpsFix{ned_to_lla(kHome, p_ned), Vec3::Zero()});
  return f;
}

ControllerConfig ideal_config() {
  ControllerConfig c;
  c.gravity = 9.80665;
  return c;
}

Estimate level_estimate(const Vec3& p) {
  Estimate e;
  e.position = p;
  e.initialized = true;
  e.degraded = false;
  return e;
}

}  // namespace

TEST(ControllerConfig, Validation) {
  ControllerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.filter_tau = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ControllerConfig{};
  c.max_tilt = 2.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ReadFrames, DecodesEveryDevice) {
  bus::SpiDevice imu(bus::make_imu_chip()), mag(bus::make_mag_chip()), baro(bus::make_baro_chip());
  imu.update([](bus::RegisterMap& m) { bus::encode_imu(Vec3(0.1, -0.2, -9.8), Vec3(0.01, 0.02, -0.03), 300.0, m); });
  mag.update([](bus::RegisterMap& m) { bus::encode_mag(Vec3(21, 1.5, 43), m); });
  baro.update([](bus::RegisterMap& m) { bus::encode_baro(95000.0, 290.0, m); });
  const GpsFix fix{{47.4, 8.5, 500.0}, Vec3(1, 2, -0.5)};
  const auto frame = bus::encode_gps(fix);
  std::vector<std::uint8_t> rx(frame.begin(), frame.end());
  rx.insert(rx.end(), frame.begin(), frame.begin() + 10);  // partial second frame

  bus::GpsStreamParser parser;
  const auto f = read_frames(imu, mag, baro, parser, rx);
  EXPECT_NEAR(f.imu.accel.z(), -9.8, 0.003);
  EXPECT_NEAR(f.imu.gyro.y(), 0.02, 3e-4);
  EXPECT_NEAR(f.mag.z(), 43, 0.1);
  EXPECT_NEAR(f.baro.pressure, 95000, 0.01);
  ASSERT_EQ(f.gps.size(), 1u);
  EXPECT_NEAR(f.gps[0].position.altitude_m, 500.0, 1e-3);

  const std::vector<std::uint8_t> rest(frame.begin() + 10, frame.end());
  EXPECT_EQ(read_frames(imu, mag, baro, parser, rest).gps.size(), 1u);
}

TEST(Estimator, InitializesFromSensors) {
  Estimator est(ideal_config(), kHome);
  const Rotation truth = Rotation::from_euler(0.1, -0.05, 1.2);
  const auto& e = est.update(static_frames(truth, Vec3(0, 0, -3), true), 0.004);
  EXPECT_TRUE(e.initialized);
  EXPECT_LT(angle_between(e.attitude, truth), 1e-3);
  EXPECT_NEAR(e.position.z(), -3.0, 0.05);
}

TEST(Estimator, ConvergesFromWrongAttitude) {
  const Rotation truth = Rotation::from_euler(0.05, 0.02, 0.7);
  Estimator est(ideal_config(), kHome);
  est.set_attitude(Rotation::from_euler(0.4, -0.3, 1.4));
  const double dt = 0.004;
  for (int k = 0; k < 1250; ++k) {
    est.update(static_frames(truth, Vec3::Zero(), k % 25 == 0), dt);
  }
  EXPECT_LT(angle_between(est.estimate().attitude, truth), 1.0 * kDegToRad);
}

TEST(Estimator, GyroOnlyDriftIsLinear) {
  ControllerConfig c = ideal_config();
  c.accel_weight = 0.0;
  c.mag_weight = 0.0;
  c.gyro_bias_ki = 0.0;
  Estimator est(c, kHome);
  est.set_attitude(Rotation::identity());
  const Vec3 bias(0.0, 0.0, 0.01);
  const double dt = 0.004;
  for (int k = 1; k <= 2500; ++k) {
    auto f = static_frames(Rotation::identity(), Vec3::Zero(), false);
    f.imu.gyro = bias;
    est.update(f, dt);
    if (k % 500 == 0) {
      EXPECT_NEAR(angle_between(est.estimate().attitude, Rotation::identity()), bias.z() * k * dt, 1e-9);
    }
  }
}

TEST(Estimator, GyroBiasIsLearned) {
  const Vec3 bias(0.01, -0.02, 0.005);
  Estimator est(ideal_config(), kHome);
  const double dt = 0.004;
  for (int k = 0; k < 100000; ++k) {
    auto f = static_frames(Rotation::identity(), Vec3::Zero(), k % 25 == 0);
    f.imu.gyro = bias;
    est.update(f, dt);
  }
  EXPECT_LT((est.estimate().gyro_bias - bias).norm(), 1e-3);
  EXPECT_LT(angle_between(est.estimate().attitude, Rotation::identity()), 0.5 * kDegToRad);
}

TEST(Estimator, TracksGpsPosition) {
  Estimator est(ideal_config(), kHome);
  const Vec3 p(3, -4, -2);
  for (int k = 0; k < 5000; ++k) est.update(static_frames(Rotation::identity(), p, k % 25 == 0), 0.004);
  EXPECT_LT((est.estimate().position - p).norm(), 0.05);
  EXPECT_FALSE(est.estimate().degraded);
}

TEST(Estimator, DegradesWithoutGps) {
  Estimator est(ideal_config(), kHome);
  for (int k = 0; k < 500; ++k) est.update(static_frames(Rotation::identity(), Vec3::Zero(), k % 25 == 0), 0.004);
  EXPECT_FALSE(est.estimate().degraded);
  for (int k = 0; k < 250; ++k) est.update(static_frames(Rotation::identity(), Vec3::Zero(), false), 0.004);
  EXPECT_TRUE(est.estimate().degraded);
}

TEST(Mixer, SignConventions) {
  const auto m0 = mix_x(0.5, Vec3::Zero());
  for (double v : m0) EXPECT_EQ(v, 0.5);
  // FR, RL, FL, RR. Positive roll pushes the left rotors.
  const auto roll = mix_x(0.5, Vec3(0.1, 0, 0));
  EXPECT_GT(roll[1], 0.5);
  EXPECT_GT(roll[2], 0.5);
  EXPECT_LT(roll[0], 0.5);
  EXPECT_LT(roll[3], 0.5);
  // Positive pitch pushes the front rotors.
  const auto pitch = mix_x(0.5, Vec3(0, 0.1, 0));
  EXPECT_GT(pitch[0], 0.5);
  EXPECT_GT(pitch[2], 0.5);
  EXPECT_LT(pitch[1], 0.5);
  // Positive yaw speeds up the +1 spin pair.
  const auto yaw = mix_x(0.5, Vec3(0, 0, 0.1));
  EXPECT_GT(yaw[0], 0.5);
  EXPECT_GT(yaw[1], 0.5);
  EXPECT_LT(yaw[2], 0.5);
}

TEST(Controller, IdleCommandsMinimumPulse) {
  Controller c(ideal_config());
  const auto out = c.control(level_estimate(Vec3::Zero()), Setpoint{}, 0.004);
  EXPECT_EQ(out.pulse_us, (std::vector<std::uint16_t>(4, bus::kPwmMin)));
}

TEST(Controller, EquilibriumGivesHoverThrottle) {
  Controller c(ideal_config());
  Setpoint sp;
  sp.mode = SetpointMode::position;
  sp.position = Vec3(1, 2, -5);
  const auto out = c.control(level_estimate(sp.position), sp, 0.004);
  const auto hover = bus::encode_pwm(0.62);
  EXPECT_EQ(hover, 1620);
  EXPECT_EQ(out.pulse_us, (std::vector<std::uint16_t>(4, hover)));
}

TEST(Controller, PitchUpCommandRaisesFrontRotors) {
  Controller c(ideal_config());
  Setpoint sp;
  sp.mode = SetpointMode::attitude;
  sp.attitude = Vec3(0, 0.1, 0);
  sp.throttle = 0.5;
  const auto out = c.control(level_estimate(Vec3::Zero()), sp, 0.004);
  EXPECT_GT(out.pulse_us[0], out.pulse_us[1]);  // FR > RL
  EXPECT_GT(out.pulse_us[2], out.pulse_us[3]);  // FL > RR
  EXPECT_GT(c.rate_setpoint().y(), 0.0);
}

TEST(Controller, PositivePitchErrorLowersFrontRotors) {
  // Estimate pitched up past a level setpoint.
  Controller c(ideal_config());
  Setpoint sp;
  sp.mode = SetpointMode::position;
  Estimate e = level_estimate(Vec3::Zero());
  e.attitude = Rotation::from_euler(0, 0.2, 0);
  const auto out = c.control(e, sp, 0.004);
  EXPECT_LT(out.pulse_us[0], out.pulse_us[1]);
  EXPECT_LT(out.pulse_us[2], out.pulse_us[3]);
}

TEST(Controller, TiltAndOutputsAreBounded) {
  const ControllerConfig cfg = ideal_config();
  Controller c(cfg);
  Setpoint sp;
  sp.mode = SetpointMode::position;
  sp.position = Vec3(500, -300, -200);
  sp.yaw = 3.0;
  Estimate e = level_estimate(Vec3::Zero());
  e.velocity = Vec3(-10, 10, 5);
  for (int k = 0; k < 200; ++k) {
    const auto out = c.control(e, sp, 0.004);
    EXPECT_LE(c.attitude_setpoint().tilt(), cfg.max_tilt + 1e-9);
    for (auto p : out.pulse_us) {
      EXPECT_GE(p, bus::kPwmMin);
      EXPECT_LE(p, bus::kPwmMax);
    }
    EXPECT_LE(c.rate_setpoint().cwiseAbs().maxCoeff(), cfg.max_rate.maxCoeff() + 1e-12);
  }
}

TEST(Controller, YawOnlyErrorLeavesTiltAlone) {
  Controller c(ideal_config());
  Setpoint sp;
  sp.mode = SetpointMode::position;
  sp.yaw = 2.5;
  c.control(level_estimate(Vec3::Zero()), sp, 0.004);
  const Vec3 r = c.rate_setpoint();
  EXPECT_NEAR(r.x(), 0.0, 1e-9);
  EXPECT_NEAR(r.y(), 0.0, 1e-9);
  EXPECT_GT(r.z(), 0.0);
}

TEST(Autopilot, NeverTouchesTruthState) {
  // The controller sees only bus bytes: no truth types appear in its sources.
  for (const char* rel : {"core/include/uvsim/refctrl.hpp", "core/src/refctrl.cpp"}) {
    std::ifstream in(std::string(UVSIM_SOURCE_DIR) + "/" + rel);
    ASSERT_TRUE(in) << rel;
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    for (const char* banned : {"VehicleState", "EnvSample", "SensorReadings", "rigidbody.hpp", "simloop.hpp",
                               "ideal_gps", "ideal_accel"}) {
      EXPECT_EQ(text.find(banned), std::string::npos) << rel << " mentions " << banned;
    }
  }
}

TEST(Autopilot, DeterministicForSameBytes) {
  auto drive = [] {
    bus::SpiDevice imu(bus::make_imu_chip()), mag(bus::make_mag_chip()), baro(bus::make_baro_chip());
    ReferenceAutopilot ap(ControllerConfig{}, kHome);
    Setpoint sp;
    sp.mode = SetpointMode::position;
    sp.position = Vec3(1, 0, -3);
    std::vector<std::uint16_t> all;
    for (int k = 0; k < 500; ++k) {
      const double s = std::sin(0.01 * k);
      imu.update([&](bus::RegisterMap& m) { bus::encode_imu(Vec3(0.1 * s, 0, -9.8), Vec3(0.01 * s, 0, 0), 300, m); });
      mag.update([&](bus::RegisterMap& m) { bus::encode_mag(mag_at(kHome), m); });
      baro.update([&](bus::RegisterMap& m) { bus::encode_baro(isa_at(488.0 + s).pressure, 288, m); });
      std::vector<std::uint8_t> rx;
      if (k % 25 == 0) {
        const auto f = bus::encode_gps(GpsFix{kHome, Vec3::Zero()});
        rx.assign(f.begin(), f.end());
      }
      const auto out = ap.step(imu, mag, baro, rx, sp, 0.004);
      all.insert(all.end(), out.pulse_us.begin(), out.pulse_us.end());
    }
    return all;
  };
  EXPECT_EQ(drive(), drive());
}
