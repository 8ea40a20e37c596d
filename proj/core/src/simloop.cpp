#include "uvsim/simloop.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <limits>
#include <stdexcept>
#include <type_traits>

namespace uvsim {

// --- configuration ----------------------------------------------------------

void VehicleConfig::validate() const {
  BodyParams(mass, inertia);
  if (!(arm_length > 0.0)) {
    throw std::invalid_argument("VehicleConfig: arm length must be > 0");
  }
  validate_geometry(rotors());
  actuator.validate();
  aero.validate();
  contact.validate();
  sensors.validate();
  controller.validate();
}

void SimConfig::validate() const {
  if (!(physics_rate > 0.0) || physics_rate > kMaxPhysicsRate) {
    throw std::invalid_argument("SimConfig: physics rate must be in (0, 5000] Hz");
  }
  if (1.0 / physics_rate > kMaxStep) {
    throw std::invalid_argument("SimConfig: physics rate gives a step above the integrator limit");
  }
  if (controller_divider == 0 || log_decimation == 0) {
    throw std::invalid_argument("SimConfig: controller divider and log decimation must be >= 1");
  }
  if (!(stop_time > 0.0) || !std::isfinite(stop_time)) {
    throw std::invalid_argument("SimConfig: stop time must be > 0");
  }
  if (!(crash_speed > 0.0)) {
    throw std::invalid_argument("SimConfig: crash speed must be > 0");
  }
  rate_divider(physics_rate, sensor_rates.imu, "imu");
  rate_divider(physics_rate, sensor_rates.mag, "mag");
  rate_divider(physics_rate, sensor_rates.baro, "baro");
  rate_divider(physics_rate, sensor_rates.gps, "gps");
}

void RunSpec::validate() const {
  vehicle.validate();
  sim.validate();
  environment.wind.validate();
  if (!environment.origin.valid()) {
    throw std::invalid_argument("RunSpec: invalid origin");
  }
  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!std::isfinite(commands[i].t) || commands[i].t < 0.0 || (i > 0 && commands[i].t < commands[i - 1].t)) {
      throw std::invalid_argument("RunSpec: command timestamps must be finite, >= 0 and sorted");
    }
  }
  validate_schedule(faults, vehicle.rotors().size(), vehicle.mass);
  if (initial_position && !initial_position->allFinite()) {
    throw std::invalid_argument("RunSpec: non-finite initial position");
  }
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::completed: return "completed";
    case Termination::crashed: return "crashed";
    case Termination::diverged: return "diverged";
  }
  return "?";
}

std::optional<Termination> termination_from_string(std::string_view s) {
  for (auto t : {Termination::completed, Termination::crashed, Termination::diverged}) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

// --- log container ------------------------------------------------------------

std::size_t SimLog::column(std::string_view name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) {
    throw std::out_of_range("log has no column '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> SimLog::series(std::string_view name) const {
  const std::size_t c = column(name);
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = at(r, c);
  return out;
}

const std::vector<std::string>& log_schema() {
  static const std::vector<std::string> schema = [] {
    std::vector<std::string> c = {"t"};
    auto add3 = [&](const std::string& p, const char* a, const char* b, const char* d) {
      c.push_back(p + a);
      c.push_back(p + b);
      c.push_back(p + d);
    };
    add3("p_", "n", "e", "d");
    add3("v_", "n", "e", "d");
    add3("vb_", "x", "y", "z");
    c.insert(c.end(), {"q_w", "q_x", "q_y", "q_z", "roll", "pitch", "yaw"});
    add3("w_", "x", "y", "z");
    for (const char* p : {"delta", "throttle", "pwm"}) {
      for (int i = 0; i < 4; ++i) c.push_back(std::string(p) + std::to_string(i));
    }
    for (const char* p : {"f_aero_", "m_aero_", "f_grav_", "f_contact_", "m_contact_", "f_act_", "m_act_"}) {
      add3(p, "x", "y", "z");
    }
    c.insert(c.end(), {"env_g", "env_rho", "env_temp", "env_pressure"});
    add3("wind_", "n", "e", "d");
    add3("mag_e_", "n", "e", "d");
    add3("accel_", "x", "y", "z");
    add3("gyro_", "x", "y", "z");
    add3("mag_", "x", "y", "z");
    c.insert(c.end(), {"baro", "gps_lat", "gps_lon", "gps_alt"});
    add3("est_p_", "n", "e", "d");
    add3("est_v_", "n", "e", "d");
    c.insert(c.end(), {"est_roll", "est_pitch", "est_yaw", "est_degraded"});
    c.insert(c.end(), {"sp_mode", "sp_n", "sp_e", "sp_d", "sp_yaw"});
    c.insert(c.end(), {"mass", "contact", "impact_speed", "fault_mask"});
    return c;
  }();
  return schema;
}

// --- CSV ------------------------------------------------------------------------

namespace {

void put_double(std::string& s, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, res.ptr);
}

double parse_double(std::string_view tok) {
  double v = 0.0;
  if (tok == "nan" || tok == "-nan") return std::numeric_limits<double>::quiet_NaN();
  if (tok == "inf") return std::numeric_limits<double>::infinity();
  if (tok == "-inf") return -std::numeric_limits<double>::infinity();
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw std::runtime_error("log: bad number '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep, std::size_t max_parts = 0) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    if (max_parts && out.size() + 1 == max_parts) {
      out.push_back(line.substr(start));
      break;
    }
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_csv(const SimLog& log, std::ostream& out) {
  std::string s;
  s.reserve(1 << 16);
  s.append(kCsvSchemaLine);
  s.push_back('\n');
  for (std::size_t i = 0; i < log.columns.size(); ++i) {
    if (i) s.push_back(',');
    s.append(log.columns[i]);
  }
  s.push_back('\n');
  const std::size_t n = log.columns.size();
  for (std::size_t r = 0; r < log.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (c) s.push_back(',');
      put_double(s, log.values[r * n + c]);
    }
    s.push_back('\n');
    if (s.size() > (1 << 20)) {
      out.write(s.data(), static_cast<std::streamsize>(s.size()));
      s.clear();
    }
  }
  for (const auto& e : log.events) {
    s.append("# event,");
    put_double(s, e.t);
    s.append(",").append(e.kind).append(",").append(e.detail).push_back('\n');
  }
  s.append("# termination,").append(to_string(log.termination)).push_back('\n');
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

SimLog read_csv(std::istream& in) {
  SimLog log;
  std::string line;
  if (!std::getline(in, line) || line != kCsvSchemaLine) {
    throw std::runtime_error("log: missing schema line '" + std::string(kCsvSchemaLine) + "'");
  }
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.starts_with("# event,")) {
      const auto parts = split(std::string_view(line).substr(8), ',', 3);
      if (parts.size() != 3) throw std::runtime_error("log: malformed event line");
      log.events.push_back({parse_double(parts[0]), std::string(parts[1]), std::string(parts[2])});
      continue;
    }
    if (line.starts_with("# termination,")) {
      const auto t = termination_from_string(std::string_view(line).substr(14));
      if (!t) throw std::runtime_error("log: unknown termination cause");
      log.termination = *t;
      continue;
    }
    if (line.starts_with("#")) continue;
    if (!have_header) {
      for (auto tok : split(line, ',')) log.columns.emplace_back(tok);
      have_header = true;
      continue;
    }
    const auto toks = split(line, ',');
    if (toks.size() != log.columns.size()) {
      throw std::runtime_error("log: row width does not match the header");
    }
    for (auto tok : toks) log.values.push_back(parse_double(tok));
  }
  if (!have_header) throw std::runtime_error("log: missing column header");
  return log;
}

// --- binary ---------------------------------------------------------------------

namespace {

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  out.write(b.data(), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  std::array<char, sizeof(T)> b;
  if (!in.read(b.data(), sizeof(T))) throw std::runtime_error("log: truncated binary file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  if (s.size() > 0xFFFF) throw std::runtime_error("log: string too long");
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get_le<std::uint16_t>(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw std::runtime_error("log: truncated binary file");
  return s;
}

}  // namespace

void write_binary(const SimLog& log, std::ostream& out) {
  out.write("UVSL", 4);
  put_le<std::uint32_t>(out, kBinaryVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(log.columns.size()));
  for (const auto& c : log.columns) put_string(out, c);
  put_le<std::uint64_t>(out, log.rows());
  for (double v : log.values) put_le<double>(out, v);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(log.events.size()));
  for (const auto& e : log.events) {
    put_le<double>(out, e.t);
    put_string(out, e.kind);
    put_string(out, e.detail);
  }
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(log.termination));
}

SimLog read_binary(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "UVSL", 4) != 0) {
    throw std::runtime_error("log: bad binary magic");
  }
  if (get_le<std::uint32_t>(in) != kBinaryVersion) {
    throw std::runtime_error("log: unsupported binary version");
  }
  SimLog log;
  const auto ncols = get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < ncols; ++i) log.columns.push_back(get_string(in));
  const auto nrows = get_le<std::uint64_t>(in);
  if (ncols == 0 && nrows != 0) throw std::runtime_error("log: rows without columns");
  log.values.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(nrows * ncols, 1u << 26)));
  for (std::uint64_t i = 0; i < nrows * ncols; ++i) log.values.push_back(get_le<double>(in));
  const auto nev = get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < nev; ++i) {
    LogEvent e;
    e.t = get_le<double>(in);
    e.kind = get_string(in);
    e.detail = get_string(in);
    log.events.push_back(std::move(e));
  }
  const auto cause = get_le<std::uint8_t>(in);
  if (cause > static_cast<std::uint8_t>(Termination::diverged)) {
    throw std::runtime_error("log: unknown termination cause");
  }
  log.termination = static_cast<Termination>(cause);
  return log;
}

SimLog read_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open log '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  in.clear();
  in.seekg(0);
  if (std::memcmp(magic, "UVSL", 4) == 0) return read_binary(in);
  return read_csv(in);
}

void write_log(const SimLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write log '" + path + "'");
  if (path.ends_with(".bin")) {
    write_binary(log, out);
  } else {
    write_csv(log, out);
  }
  if (!out) throw std::runtime_error("error writing log '" + path + "'");
}

// --- simulation -------------------------------------------------------------------

struct Simulation::World {
  World(const RunSpec& spec, const EnvironmentConfig& env_cfg)
      : body(spec.vehicle.mass, spec.vehicle.inertia),
        rotors(spec.vehicle.rotors()),
        env(env_cfg),
        faults(spec.faults, rotors.size()),
        sensors(spec.vehicle.sensors, spec.sim.sensor_rates, spec.sim.physics_rate, env_cfg.origin,
                mix_seed(spec.sim.seed, 10)),
        sensor_faults(env_cfg.origin),
        imu(bus::make_imu_chip()),
        mag(bus::make_mag_chip()),
        baro(bus::make_baro_chip()),
        autopilot(spec.vehicle.controller, env_cfg.origin),
        act(rotors.size()),
        throttle(rotors.size(), 0.0),
        baseline_wind(env_cfg.wind),
        mass(spec.vehicle.mass) {
    pwm.pulse_us.assign(rotors.size(), bus::kPwmMin);
  }

  BodyParams body;
  RotorGeometry rotors;
  Environment env;
  FaultEngine faults;
  SensorSuite sensors;
  SensorFaultStage sensor_faults;
  bus::SpiDevice imu, mag, baro;
  std::vector<std::uint8_t> uart;
  ReferenceAutopilot autopilot;

  VehicleState state;
  std::vector<ActuatorState> act;
  std::vector<double> throttle;
  bus::PwmCommand pwm;
  Setpoint setpoint;
  std::size_t next_command = 0;

  WindConfig baseline_wind;
  std::optional<double> wind_override_start;
  double mass;
  bool in_contact = false;
  double impact_speed = 0.0;
  std::vector<double> row;
};

Simulation::Simulation(const RunSpec& spec) : spec_(spec) {
  spec_.validate();
  EnvironmentConfig env_cfg = spec_.environment;
  env_cfg.wind.seed = mix_seed(spec_.sim.seed, env_cfg.wind.seed);
  w_ = std::make_unique<World>(spec_, env_cfg);

  auto& s = w_->state;
  const auto& contact = spec_.vehicle.contact;
  if (spec_.initial_position) {
    s.p_e = *spec_.initial_position;
  } else {
    // Corners on the ground, springs pre-compressed by the weight.
    const double g = gravity_at(env_cfg.origin);
    s.p_e = Vec3(0.0, 0.0, contact.ground_z() - contact.half_extent.z() + spec_.vehicle.mass * g / contact.stiffness);
  }
  s.att = Rotation::from_euler(0.0, 0.0, spec_.initial_yaw);
  s.v_e = s.att.apply(s.v_b);

  stop_tick_ = static_cast<std::uint64_t>(std::llround(spec_.sim.stop_time * spec_.sim.physics_rate));
  log_.columns = log_schema();
  log_.values.reserve(static_cast<std::size_t>(stop_tick_ / spec_.sim.log_decimation + 1) * log_.columns.size());
  w_->row.resize(log_.columns.size());
}

Simulation::~Simulation() = default;

double Simulation::time() const { return static_cast<double>(tick_) / spec_.sim.physics_rate; }
const VehicleState& Simulation::state() const { return w_->state; }
const Estimate& Simulation::estimate() const { return w_->autopilot.estimate(); }

namespace {

void put3(double*& p, const Vec3& v) {
  *p++ = v.x();
  *p++ = v.y();
  *p++ = v.z();
}

}  // namespace

bool Simulation::tick() {
  if (terminated_) return false;
  if (tick_ >= stop_tick_) {
    terminated_ = Termination::completed;
    log_.termination = *terminated_;
    return false;
  }
  auto& w = *w_;
  const double rate = spec_.sim.physics_rate;
  const double dt = 1.0 / rate;
  const double t = static_cast<double>(tick_) / rate;
  const VehicleState s = w.state;

  // 1. environment
  const EnvSample env = w.env.sample(s.p_e, s.v_e, t, dt);

  // 2. faults
  const auto events = w.faults.update(t, s);
  const ActiveEffects& fx = w.faults.effects();
  for (const auto& e : events) {
    log_.events.push_back({t, e.activated ? "fault_on" : "fault_off", w.faults.schedule()[e.index].name});
  }
  if (!spec_.faults.empty()) {
    // Wind overrides take effect from the next environment sample.
    if (fx.wind && w.wind_override_start != fx.wind_start) {
      WindConfig cfg = w.baseline_wind;
      if (fx.wind->constant_e) cfg.constant_e = *fx.wind->constant_e;
      cfg.gust_amplitude_e = fx.wind->gust_amplitude_e;
      cfg.gust_start = fx.wind_start;
      cfg.gust_duration = fx.wind_duration.value_or(0.0);
      w.env.wind().set_deterministic(cfg);
      w.wind_override_start = fx.wind_start;
    } else if (!fx.wind && w.wind_override_start) {
      w.env.wind().set_deterministic(w.baseline_wind);
      w.wind_override_start.reset();
    }
    for (std::size_t c = 0; c < kSensorChannelCount; ++c) {
      w.sensors.set_noise_scale(static_cast<SensorChannel>(c), fx.sensors[c].noise_scale);
    }
    const double m = spec_.vehicle.mass + fx.mass_delta;
    if (m != w.mass) {
      w.body = w.body.with_mass(m);
      w.mass = m;
    }
  }

  // 3. sensors -> bus
  double rotor_mean = 0.0;
  for (const auto& a : w.act) rotor_mean += a.delta;
  rotor_mean /= static_cast<double>(w.act.size());
  SensorReadings r = w.sensors.sample(tick_, s, env, rotor_mean);
  w.sensor_faults.apply(fx, r);
  if (r.imu_updated) {
    w.imu.update([&](bus::RegisterMap& m) { bus::encode_imu(r.accel, r.gyro, r.temperature, m); });
  }
  if (r.mag_updated) {
    w.mag.update([&](bus::RegisterMap& m) { bus::encode_mag(r.mag, m); });
  }
  if (r.baro_updated) {
    w.baro.update([&](bus::RegisterMap& m) { bus::encode_baro(r.baro, r.temperature, m); });
  }
  if (r.gps_updated && r.gps) {
    const auto frame = bus::encode_gps(*r.gps);
    w.uart.insert(w.uart.end(), frame.begin(), frame.end());
  }

  // 4. controller
  while (w.next_command < spec_.commands.size() && spec_.commands[w.next_command].t <= t) {
    w.setpoint = spec_.commands[w.next_command++].setpoint;
  }
  const auto div = spec_.sim.controller_divider;
  if (tick_ % div == 0) {
    w.pwm = w.autopilot.step(w.imu, w.mag, w.baro, w.uart, w.setpoint, static_cast<double>(div) * dt);
    w.uart.clear();
  }

  // 5-6. PWM -> throttle -> actuators
  for (std::size_t i = 0; i < w.act.size(); ++i) {
    w.throttle[i] = i < w.pwm.pulse_us.size() ? bus::decode_pwm(w.pwm.pulse_us[i]) : 0.0;
    w.act[i] = actuator_step(w.act[i], spec_.vehicle.actuator, w.throttle[i], dt);
    if (fx.any_actuator && fx.stuck_speed[i]) {
      w.act[i] = ActuatorState{*fx.stuck_speed[i], 0.0};
    }
  }

  // 7. wrench
  const WrenchBreakdown wr = total_wrench(s, env, w.act, spec_.vehicle.aero, spec_.vehicle.contact, w.rotors,
                                          w.mass, w.faults.effects().effectiveness);
  const bool contact = wr.contact.force.squaredNorm() > 0.0;
  std::optional<Termination> cause;
  if (contact && !w.in_contact && tick_ > 0) {
    w.impact_speed = s.v_e.z();
    std::string detail = "speed=";
    put_double(detail, w.impact_speed);
    log_.events.push_back({t, "touchdown", detail});
    if (w.impact_speed > spec_.sim.crash_speed) {
      log_.events.push_back({t, "crash", "ground impact " + detail});
      cause = Termination::crashed;
    }
  }
  if (contact && s.att.tilt() > 75.0 * kDegToRad && !cause) {
    log_.events.push_back({t, "crash", "tipped over"});
    cause = Termination::crashed;
  }
  w.in_contact = contact;

  // 8. rigid body
  VehicleState next = s;
  try {
    next = step(s, w.body, wr.total, dt);
    if (next.p_e.norm() > 1e6 || next.v_b.norm() > 1e4 || next.w_b.norm() > 1e4) {
      throw NonFiniteState("state out of physical range");
    }
  } catch (const NonFiniteState& e) {
    log_.events.push_back({t, "diverged", e.what()});
    cause = Termination::diverged;
  }

  // 9. log row
  if (tick_ % spec_.sim.log_decimation == 0 || cause) {
    double* p = w.row.data();
    *p++ = t;
    put3(p, s.p_e);
    put3(p, s.v_e);
    put3(p, s.v_b);
    const auto& q = s.att.quaternion();
    *p++ = q.w();
    *p++ = q.x();
    *p++ = q.y();
    *p++ = q.z();
    put3(p, s.att.euler());
    put3(p, s.w_b);
    for (std::size_t i = 0; i < 4; ++i) *p++ = i < w.act.size() ? w.act[i].delta : 0.0;
    for (std::size_t i = 0; i < 4; ++i) *p++ = i < w.throttle.size() ? w.throttle[i] : 0.0;
    for (std::size_t i = 0; i < 4; ++i) *p++ = i < w.pwm.pulse_us.size() ? w.pwm.pulse_us[i] : 0.0;
    put3(p, wr.aero.force);
    put3(p, wr.aero.moment);
    put3(p, wr.gravity.force);
    put3(p, wr.contact.force);
    put3(p, wr.contact.moment);
    put3(p, wr.actuators.force);
    put3(p, wr.actuators.moment);
    *p++ = env.g;
    *p++ = env.rho;
    *p++ = env.temperature;
    *p++ = env.pressure;
    put3(p, env.wind_e);
    put3(p, env.mag_e);
    put3(p, r.accel);
    put3(p, r.gyro);
    put3(p, r.mag);
    *p++ = r.baro;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    *p++ = r.gps ? r.gps->position.latitude_deg : nan;
    *p++ = r.gps ? r.gps->position.longitude_deg : nan;
    *p++ = r.gps ? r.gps->position.altitude_m : nan;
    const Estimate& est = w.autopilot.estimate();
    put3(p, est.position);
    put3(p, est.velocity);
    put3(p, est.attitude.euler());
    *p++ = est.degraded ? 1.0 : 0.0;
    *p++ = static_cast<double>(w.setpoint.mode);
    put3(p, w.setpoint.position);
    *p++ = w.setpoint.mode == SetpointMode::attitude ? w.setpoint.attitude.z() : w.setpoint.yaw;
    *p++ = w.mass;
    *p++ = contact ? 1.0 : 0.0;
    *p++ = w.impact_speed;
    *p++ = static_cast<double>(fx.active_mask);
    log_.values.insert(log_.values.end(), w.row.begin(), w.row.end());
  }

  ++tick_;
  if (cause) {
    terminated_ = cause;
    log_.termination = *cause;
    return false;
  }
  w.state = next;
  return true;
}

SimLog Simulation::run() {
  while (tick()) {
  }
  return std::move(log_);
}

SimLog run(const RunSpec& spec) {
  Simulation sim(spec);
  return sim.run();
}

}  // namespace uvsim
