#include "uvsim/simloop.hpp"

#include <benchmark/benchmark.h>

using namespace uvsim;

static void BM_RigidBodyStep(benchmark::State& st) {
  const BodyParams p(1.4, Vec3(0.0211, 0.0219, 0.0366).asDiagonal());
  VehicleState s;
  s.w_b = Vec3(0.3, -0.2, 0.5);
  ForceMoment fm;
  fm.force = Vec3(0.1, 0.0, -13.7);
  for (auto _ : st) {
    s = step(s, p, fm, 1e-3);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_RigidBodyStep);

static void BM_ErrorChannel(benchmark::State& st) {
  ProductErrorModel m;
  m.noise_std = 0.05;
  m.bias_walk = 0.001;
  m.misalignment = Vec3(0.01, 0.0, 0.0);
  ErrorChannel ch(m, 1);
  for (auto _ : st) benchmark::DoNotOptimize(ch.corrupt(Vec3(0, 0, -9.8), 600.0, 1e-3));
}
BENCHMARK(BM_ErrorChannel);

static void BM_DrydenStep(benchmark::State& st) {
  DrydenTurbulence d(Vec3(1, 1, 0.5), Vec3(200, 200, 50), 3);
  for (auto _ : st) benchmark::DoNotOptimize(d.step(8.0, 1e-3));
}
BENCHMARK(BM_DrydenStep);

static void BM_ImuBurstRoundTrip(benchmark::State& st) {
  bus::SpiDevice dev(bus::make_imu_chip());
  for (auto _ : st) {
    dev.update([](bus::RegisterMap& m) { bus::encode_imu(Vec3(0.1, 0.2, -9.8), Vec3(0.01, 0, 0), 300.0, m); });
    const auto b = dev.read_burst(bus::imu::kAccelXoutH, bus::imu::kBurstLength);
    benchmark::DoNotOptimize(bus::decode_imu_burst(std::span<const std::uint8_t, bus::imu::kBurstLength>(b.data(), b.size())));
  }
}
BENCHMARK(BM_ImuBurstRoundTrip);

static void BM_GpsRoundTrip(benchmark::State& st) {
  const GpsFix fix{{47.397, 8.546, 500.0}, Vec3(1, 2, 0)};
  for (auto _ : st) benchmark::DoNotOptimize(bus::decode_gps(bus::encode_gps(fix)));
}
BENCHMARK(BM_GpsRoundTrip);

// One full tick: environment, faults, sensors, bus, controller, actuators,
// wrench, integration and logging.
static void BM_SimulationTick(benchmark::State& st) {
  RunSpec spec;
  spec.sim.stop_time = 1e6;
  spec.sim.log_decimation = 1000;
  spec.environment.wind.turbulence_sigma = Vec3(0.5, 0.5, 0.2);
  Command c;
  c.setpoint.mode = SetpointMode::position;
  c.setpoint.position = Vec3(0, 0, -5);
  spec.commands = {c};
  Simulation sim(spec);
  for (auto _ : st) benchmark::DoNotOptimize(sim.tick());
  st.counters["realtime_x"] = benchmark::Counter(1e-3 * static_cast<double>(st.iterations()), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_SimulationTick);
BENCHMARK_MAIN();
