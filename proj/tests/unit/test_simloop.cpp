#include "uvsim/simloop.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace uvsim;

namespace {

bool same_values(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
           return (std::isnan(x) && std::isnan(y)) || x == y;
         });
}

Command at(double t, SetpointMode mode, const Vec3& p = Vec3::Zero()) {
  Command c;
  c.t = t;
  c.setpoint.mode = mode;
  c.setpoint.position = p;
  return c;
}

RunSpec takeoff_spec(double stop = 8.0) {
  RunSpec s;
  s.sim.stop_time = stop;
  s.commands = {at(0.5, SetpointMode::position, Vec3(0, 0, -5))};
  return s;
}

// Vehicle with noisy sensors so determinism covers the RNG streams.
RunSpec noisy_spec() {
  RunSpec s = takeoff_spec(4.0);
  s.vehicle.sensors.accel.noise_std = 0.05;
  s.vehicle.sensors.gyro.noise_std = 0.003;
  s.vehicle.sensors.gyro.bias_walk = 1e-4;
  s.vehicle.sensors.baro.noise_std = 1.0;
  s.vehicle.sensors.gps.position.noise_std = 0.3;
  s.environment.wind.turbulence_sigma = Vec3(0.5, 0.5, 0.2);
  s.sim.seed = 77;
  return s;
}

std::string csv_of(const SimLog& log) {
  std::ostringstream out;
  write_csv(log, out);
  return out.str();
}

std::string binary_of(const SimLog& log) {
  std::ostringstream out(std::ios::binary);
  write_binary(log, out);
  return out.str();
}

bool has_event(const SimLog& log, std::string_view kind) {
  for (const auto& e : log.events) {
    if (e.kind == kind) return true;
  }
  return false;
}

}  // namespace

TEST(SimConfig, Validation) {
  SimConfig c;
  EXPECT_NO_THROW(c.validate());
  c.physics_rate = 50.0;  // 20 ms step
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SimConfig{};
  c.physics_rate = 6000.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SimConfig{};
  c.sensor_rates.imu = 300.0;  // does not divide 1 kHz
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SimConfig{};
  c.stop_time = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SimConfig{};
  c.controller_divider = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(RunSpec, RejectsUnsortedCommands) {
  RunSpec s;
  s.commands = {at(2.0, SetpointMode::idle), at(1.0, SetpointMode::idle)};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_THROW(Simulation{s}, std::invalid_argument);
}

TEST(Simulation, RestingOnGroundSettles) {
  RunSpec s;
  s.sim.stop_time = 10.0;
  Simulation sim(s);
  while (sim.time() < 1.0 - 1e-12) sim.tick();
  const Vec3 p1 = sim.state().p_e;
  SimLog log = sim.run();
  EXPECT_EQ(log.termination, Termination::completed);
  EXPECT_LT((sim.state().p_e - p1).norm(), 1e-3);
  EXPECT_FALSE(has_event(log, "crash"));
}

TEST(Simulation, LogTimeIsMonotonicAndSchemaFixed) {
  RunSpec s = takeoff_spec(2.0);
  s.sim.log_decimation = 7;
  const SimLog log = run(s);
  EXPECT_EQ(log.columns, log_schema());
  const auto t = log.series("t");
  ASSERT_GT(t.size(), 10u);
  for (std::size_t i = 1; i < t.size(); ++i) EXPECT_GT(t[i], t[i - 1]);
  EXPECT_NEAR(t[1] - t[0], 0.007, 1e-12);
  EXPECT_THROW(log.column("nope"), std::out_of_range);
}

TEST(Simulation, RepeatedRunsAreBitIdentical) {
  const RunSpec s = noisy_spec();
  const std::string a = binary_of(run(s));
  EXPECT_EQ(binary_of(run(s)), a);
  EXPECT_EQ(binary_of(run(s)), a);
  RunSpec other = s;
  other.sim.seed = 78;
  EXPECT_NE(binary_of(run(other)), a);
}

TEST(Simulation, FreeFallAgreesAcrossPhysicsRates) {
  auto fall = [](double rate) {
    RunSpec s;
    s.sim.physics_rate = rate;
    s.sim.stop_time = 1.0;
    s.initial_position = Vec3(0, 0, -50);
    // Drag enters through the per-tick zero-order hold, which is only first order in dt.
    s.vehicle.aero = AeroParams{Vec3::Zero(), Vec3::Zero()};
    return run(s);
  };
  const auto za = fall(1000.0).series("p_d");
  const auto zb = fall(2000.0).series("p_d");
  const auto zc = fall(4000.0).series("p_d");
  double e1 = 0.0, e2 = 0.0;
  for (std::size_t i = 0; i < za.size(); ++i) {
    e1 = std::max(e1, std::abs(za[i] - zb[2 * i]));
    e2 = std::max(e2, std::abs(zb[2 * i] - zc[4 * i]));
  }
  EXPECT_GT(za.back() - za.front(), 4.0);
  // Gravity and idle thrust are held per tick, so the residual gap is
  // first order in dt (but tiny); the integrator itself is fourth order.
  EXPECT_LT(e1, 1e-8);
  EXPECT_GT(e1 / e2, 1.9);
}

TEST(Simulation, EmptyScriptCompletesOnGround) {
  RunSpec s;
  s.sim.stop_time = 3.0;
  const SimLog log = run(s);
  EXPECT_EQ(log.termination, Termination::completed);
  EXPECT_NEAR(log.at(log.rows() - 1, log.column("t")), 3.0 - 1e-3, 1e-9);
  for (double p : log.series("pwm0")) EXPECT_EQ(p, 1000.0);
}

TEST(Simulation, TakeoffReachesSetpoint) {
  Simulation sim(takeoff_spec(10.0));
  const SimLog log = sim.run();
  EXPECT_EQ(log.termination, Termination::completed);
  EXPECT_NEAR(sim.state().p_e.z(), -5.0, 0.1);
  EXPECT_LT(sim.state().p_e.head<2>().norm(), 0.1);
}

TEST(Simulation, TotalThrustLossCrashes) {
  RunSpec s = takeoff_spec(20.0);
  for (std::size_t i = 0; i < 4; ++i) {
    FaultSpec f;
    f.name = "motor" + std::to_string(i);
    f.target = {FaultTargetKind::actuator, i, SensorChannel::accel};
    f.trigger = {TriggerKind::time, 8.0};
    f.factor = 0.0;
    s.faults.push_back(f);
  }
  const SimLog log = run(s);
  EXPECT_EQ(log.termination, Termination::crashed);
  EXPECT_TRUE(has_event(log, "fault_on"));
  EXPECT_TRUE(has_event(log, "touchdown"));
  EXPECT_TRUE(has_event(log, "crash"));
  EXPECT_LT(log.series("t").back(), 20.0);
}

TEST(Simulation, FaultMaskAndMassAreLogged) {
  RunSpec s = takeoff_spec(6.0);
  FaultSpec f;
  f.name = "payload";
  f.target.kind = FaultTargetKind::payload;
  f.kind = FaultKind::mass_change;
  f.trigger = {TriggerKind::time, 3.0};
  f.mass_delta = 0.2;
  s.faults = {f};
  const SimLog log = run(s);
  const auto t = log.series("t"), mass = log.series("mass"), mask = log.series("fault_mask");
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_DOUBLE_EQ(mass[i], t[i] >= 3.0 ? 1.4 + 0.2 : 1.4) << t[i];
    EXPECT_EQ(mask[i], t[i] >= 3.0 ? 1.0 : 0.0);
  }
}

TEST(LogIo, CsvRoundTripIsExact) {
  SimLog log = run(noisy_spec());
  log.events.push_back({1.25, "fault_on", "a, \"quoted\" detail"});
  std::istringstream in(csv_of(log));
  const SimLog back = read_csv(in);
  EXPECT_EQ(back.columns, log.columns);
  EXPECT_TRUE(same_values(back.values, log.values));
  EXPECT_EQ(back.events, log.events);
  EXPECT_EQ(back.termination, log.termination);
}

TEST(LogIo, BinaryRoundTripIsExact) {
  RunSpec s = noisy_spec();
  s.faults.push_back(FaultSpec{});
  s.faults.back().name = "loe";
  s.faults.back().trigger.value = 1.0;
  s.faults.back().factor = 0.0;
  const SimLog log = run(s);
  std::istringstream in(binary_of(log), std::ios::binary);
  const SimLog back = read_binary(in);
  EXPECT_EQ(back.columns, log.columns);
  EXPECT_TRUE(same_values(back.values, log.values));
  EXPECT_EQ(back.events, log.events);
  EXPECT_EQ(back.termination, log.termination);
}

TEST(LogIo, ReadLogSniffsFormat) {
  const SimLog log = run(takeoff_spec(1.0));
  const auto dir = std::filesystem::temp_directory_path() / "uvsim_logio";
  std::filesystem::create_directories(dir);
  const auto bin = (dir / "a.bin").string();
  const auto csv = (dir / "a.csv").string();
  write_log(log, bin);
  write_log(log, csv);
  // Misnamed files still load.
  std::filesystem::copy_file(bin, dir / "b.csv", std::filesystem::copy_options::overwrite_existing);
  EXPECT_TRUE(same_values(read_log(bin).values, log.values));
  EXPECT_TRUE(same_values(read_log(csv).values, log.values));
  EXPECT_TRUE(same_values(read_log((dir / "b.csv").string()).values, log.values));
  EXPECT_THROW(read_log((dir / "missing.csv").string()), std::runtime_error);
  std::ofstream(dir / "junk.bin") << "UVSLxx";
  EXPECT_THROW(read_log((dir / "junk.bin").string()), std::runtime_error);
}

// Pins the tick ordering: any change to the update sequence shows up here.
TEST(Simulation, GoldenLog) {
  RunSpec s = noisy_spec();
  s.sim.stop_time = 3.0;
  s.sim.log_decimation = 50;
  const SimLog log = run(s);
  const std::filesystem::path golden = std::filesystem::path(UVSIM_TEST_DATA_DIR) / "golden_takeoff.csv";
  if (std::getenv("UVSIM_REGEN_GOLDEN")) {
    write_log(log, golden.string());
    GTEST_SKIP() << "golden log regenerated";
  }
  const SimLog ref = read_log(golden.string());
  ASSERT_EQ(ref.columns, log.columns);
  ASSERT_EQ(ref.values.size(), log.values.size());
  for (std::size_t i = 0; i < ref.values.size(); ++i) {
    const double a = ref.values[i], b = log.values[i];
    if (std::isnan(a) && std::isnan(b)) continue;
    ASSERT_NEAR(a, b, 1e-9 * std::max(1.0, std::abs(a)))
        << "row " << i / ref.columns.size() << " column " << ref.columns[i % ref.columns.size()];
  }
  EXPECT_EQ(ref.events, log.events);
}
