#include "uvsim/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

namespace uvsim {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// --- strict JSON reading ---------------------------------------------------------

class Obj {
 public:
  Obj(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ScenarioError(ctx_ + ": " + msg); }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void num(const char* key, double& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(std::string("'") + key + "' must be a number");
    out = v.get<double>();
  }

  void num(const char* key, std::optional<double>& out) {
    if (!has(key)) return;
    double v = 0.0;
    num(key, v);
    out = v;
  }

  void deg(const char* key, double& out_rad) {
    if (!has(key)) return;
    double v = 0.0;
    num(key, v);
    out_rad = v * kDegToRad;
  }

  void integer(const char* key, std::uint64_t& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      fail(std::string("'") + key + "' must be a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }

  void integer(const char* key, int& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) fail(std::string("'") + key + "' must be an integer");
    out = v.get<int>();
  }

  void boolean(const char* key, bool& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) fail(std::string("'") + key + "' must be true or false");
    out = v.get<bool>();
  }

  void str(const char* key, std::string& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_string()) fail(std::string("'") + key + "' must be a string");
    out = v.get<std::string>();
  }

  /// [x, y, z]; a bare number fills x only when allow_scalar.
  void vec3(const char* key, Vec3& out, bool allow_scalar = false) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (allow_scalar && v.is_number()) {
      out = Vec3(v.get<double>(), 0.0, 0.0);
      return;
    }
    if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& e) {
          return e.is_number();
        })) {
      fail(std::string("'") + key + "' must be an array of 3 numbers");
    }
    out = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  }

  void vec3_deg(const char* key, Vec3& out_rad) {
    if (!has(key)) return;
    Vec3 v = Vec3::Zero();
    vec3(key, v);
    out_rad = v * kDegToRad;
  }

  Obj child(const char* key) { return Obj(at(key), ctx_ + "." + key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) fail("unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

json parse(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(what + ": " + e.what());
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ScenarioError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void read_error_model(Obj o, ProductErrorModel& m) {
  o.num("noise_std", m.noise_std);
  o.num("bias_walk", m.bias_walk);
  o.vec3("initial_bias", m.initial_bias, true);
  o.vec3_deg("misalignment_deg", m.misalignment);
  if (o.has("scale")) {
    const auto& v = o.at("scale");
    if (v.is_number()) {
      m.scale = Vec3::Constant(v.get<double>());
    } else {
      o.vec3("scale", m.scale);
    }
  }
  o.vec3("lever_arm", m.lever_arm);
  o.num("vibration_gain", m.vibration_gain);
  o.finish();
}

void read_controller(Obj o, ControllerConfig& c) {
  o.vec3("pos_kp", c.pos_kp);
  o.num("max_horizontal_speed", c.max_horizontal_speed);
  o.num("max_climb", c.max_climb);
  o.num("max_descent", c.max_descent);
  o.vec3("vel_kp", c.vel_kp);
  o.vec3("vel_ki", c.vel_ki);
  o.vec3("vel_kd", c.vel_kd);
  o.vec3("vel_i_limit", c.vel_i_limit);
  o.vec3("att_kp", c.att_kp);
  o.vec3("max_rate", c.max_rate);
  o.deg("max_tilt_deg", c.max_tilt);
  o.vec3("rate_kp", c.rate_kp);
  o.vec3("rate_ki", c.rate_ki);
  o.vec3("rate_kd", c.rate_kd);
  o.vec3("rate_i_limit", c.rate_i_limit);
  o.num("hover_throttle", c.hover_throttle);
  o.num("thrust_gain", c.thrust_gain);
  o.num("min_throttle", c.min_throttle);
  o.num("filter_tau", c.filter_tau);
  o.num("accel_weight", c.accel_weight);
  o.num("mag_weight", c.mag_weight);
  o.num("gyro_bias_ki", c.gyro_bias_ki);
  if (o.has("mag_declination_deg")) {
    double d = 0.0;
    o.num("mag_declination_deg", d);
    c.mag_declination = d * kDegToRad;
  }
  o.num("gravity", c.gravity);
  o.num("horizontal_tau", c.horizontal_tau);
  o.num("vertical_tau", c.vertical_tau);
  o.num("gps_delay", c.gps_delay);
  o.num("gps_timeout", c.gps_timeout);
  o.num("accel_ref_tau", c.accel_ref_tau);
  o.boolean("init_from_sensors", c.init_from_sensors);
  o.finish();
}

VehicleConfig read_vehicle(Obj o) {
  VehicleConfig v;
  o.str("name", v.name);
  o.num("mass", v.mass);
  if (o.has("inertia_diag")) {
    Vec3 d = Vec3::Zero();
    o.vec3("inertia_diag", d);
    v.inertia = d.asDiagonal();
  }
  if (o.has("inertia")) {
    const auto& m = o.at("inertia");
    if (!m.is_array() || m.size() != 3) o.fail("'inertia' must be a 3x3 array");
    for (int r = 0; r < 3; ++r) {
      if (!m[r].is_array() || m[r].size() != 3) o.fail("'inertia' must be a 3x3 array");
      for (int c = 0; c < 3; ++c) {
        if (!m[r][c].is_number()) o.fail("'inertia' must be a 3x3 array");
        v.inertia(r, c) = m[r][c].get<double>();
      }
    }
  }
  o.num("arm_length", v.arm_length);
  o.num("thrust_coeff", v.thrust_coeff);
  o.num("torque_coeff", v.torque_coeff);
  if (o.has("actuator")) {
    Obj a = o.child("actuator");
    auto& p = v.actuator;
    a.num("c0", p.c0);
    a.num("c1", p.c1);
    a.integer("order", p.order);
    a.num("tau", p.tau);
    a.num("natural_freq", p.natural_freq);
    a.num("damping", p.damping);
    a.num("min_speed", p.min_speed);
    a.num("max_speed", p.max_speed);
    if (a.has("rate_limit") && !a.at("rate_limit").is_null()) a.num("rate_limit", p.rate_limit);
    a.finish();
  }
  if (o.has("aero")) {
    Obj a = o.child("aero");
    a.vec3("drag", v.aero.drag);
    a.vec3("rotational_damping", v.aero.rotational_damping);
    a.finish();
  }
  if (o.has("contact")) {
    Obj c = o.child("contact");
    auto& p = v.contact;
    c.num("ground_altitude", p.ground_altitude);
    c.num("stiffness", p.stiffness);
    c.num("damping", p.damping);
    c.num("damping_depth", p.damping_depth);
    c.num("friction", p.friction);
    c.num("friction_damping", p.friction_damping);
    c.vec3("half_extent", p.half_extent);
    c.finish();
  }
  if (o.has("sensors")) {
    Obj s = o.child("sensors");
    if (s.has("accel")) read_error_model(s.child("accel"), v.sensors.accel);
    if (s.has("gyro")) read_error_model(s.child("gyro"), v.sensors.gyro);
    if (s.has("mag")) read_error_model(s.child("mag"), v.sensors.mag);
    if (s.has("baro")) read_error_model(s.child("baro"), v.sensors.baro);
    if (s.has("gps")) {
      Obj g = s.child("gps");
      g.num("latency", v.sensors.gps.latency);
      if (g.has("position")) read_error_model(g.child("position"), v.sensors.gps.position);
      if (g.has("velocity")) read_error_model(g.child("velocity"), v.sensors.gps.velocity);
      g.finish();
    }
    s.finish();
  }
  if (o.has("controller")) read_controller(o.child("controller"), v.controller);
  o.finish();
  return v;
}

FaultTarget parse_target(Obj& o, const std::string& s) {
  FaultTarget t;
  if (s == "wind") {
    t.kind = FaultTargetKind::wind;
  } else if (s == "payload") {
    t.kind = FaultTargetKind::payload;
  } else if (s.starts_with("actuator:")) {
    t.kind = FaultTargetKind::actuator;
    const std::string idx = s.substr(9);
    if (idx.empty() || !std::all_of(idx.begin(), idx.end(), ::isdigit)) o.fail("bad actuator index in '" + s + "'");
    t.actuator = std::stoul(idx);
  } else if (s.starts_with("sensor:")) {
    t.kind = FaultTargetKind::sensor;
    const std::string ch = s.substr(7);
    bool found = false;
    for (std::size_t c = 0; c < kSensorChannelCount; ++c) {
      if (ch == to_string(static_cast<SensorChannel>(c))) {
        t.sensor = static_cast<SensorChannel>(c);
        found = true;
      }
    }
    if (!found) o.fail("unknown sensor channel '" + ch + "'");
  } else {
    o.fail("unknown fault target '" + s + "' (actuator:N, sensor:<channel>, wind, payload)");
  }
  return t;
}

FaultSpec read_fault(Obj o, std::size_t index) {
  FaultSpec f;
  f.name = "fault" + std::to_string(index);
  o.str("name", f.name);
  std::string target;
  o.str("target", target);
  if (target.empty()) o.fail("missing 'target'");
  f.target = parse_target(o, target);

  std::string kind;
  o.str("kind", kind);
  bool known = false;
  for (auto k : {FaultKind::loss_of_effectiveness, FaultKind::stuck_at, FaultKind::signal_loss, FaultKind::bias_jump,
                 FaultKind::noise_scale, FaultKind::gust_override, FaultKind::mass_change}) {
    if (kind == to_string(k)) {
      f.kind = k;
      known = true;
    }
  }
  if (!known) o.fail("unknown fault kind '" + kind + "'");

  if (!o.has("trigger")) o.fail("missing 'trigger'");
  {
    Obj tr = o.child("trigger");
    int n = 0;
    const std::pair<const char*, TriggerKind> kinds[] = {{"time", TriggerKind::time},
                                                         {"altitude_above", TriggerKind::altitude_above},
                                                         {"altitude_below", TriggerKind::altitude_below},
                                                         {"speed_above", TriggerKind::speed_above},
                                                         {"speed_below", TriggerKind::speed_below}};
    for (const auto& [key, k] : kinds) {
      if (tr.has(key)) {
        tr.num(key, f.trigger.value);
        f.trigger.kind = k;
        ++n;
      }
    }
    if (n != 1) tr.fail("exactly one trigger condition is required");
    tr.finish();
  }
  if (o.has("duration") && !o.at("duration").is_null()) {
    double d = 0.0;
    o.num("duration", d);
    f.duration = d;
  }
  o.num("factor", f.factor);
  o.vec3("value", f.value, true);
  if (f.kind == FaultKind::stuck_at && !o.has("value")) o.fail("stuck_at needs an explicit 'value'");
  if (o.has("policy")) {
    std::string p;
    o.str("policy", p);
    if (p == "hold_last") {
      f.policy = LossPolicy::hold_last;
    } else if (p == "zero") {
      f.policy = LossPolicy::zero;
    } else {
      o.fail("policy must be 'hold_last' or 'zero'");
    }
  }
  o.vec3("offset", f.offset, true);
  o.num("mass_delta", f.mass_delta);
  if (o.has("wind_constant")) {
    Vec3 c = Vec3::Zero();
    o.vec3("wind_constant", c);
    f.gust.constant_e = c;
  }
  o.vec3("gust_amplitude", f.gust.gust_amplitude_e);
  o.finish();
  return f;
}

Command read_command(Obj o) {
  Command c;
  if (!o.has("t")) o.fail("command needs 't'");
  o.num("t", c.t);
  std::string mode = "position";
  o.str("mode", mode);
  if (mode == "idle") {
    c.setpoint.mode = SetpointMode::idle;
  } else if (mode == "position") {
    c.setpoint.mode = SetpointMode::position;
    if (!o.has("position")) o.fail("position command needs 'position'");
    o.vec3("position", c.setpoint.position);
    o.deg("yaw_deg", c.setpoint.yaw);
  } else if (mode == "attitude") {
    c.setpoint.mode = SetpointMode::attitude;
    o.vec3_deg("attitude_deg", c.setpoint.attitude);
    o.num("throttle", c.setpoint.throttle);
  } else {
    o.fail("unknown command mode '" + mode + "'");
  }
  o.finish();
  return c;
}

void read_wind(Obj o, WindConfig& w) {
  o.vec3("constant", w.constant_e);
  o.num("shear_ref_speed", w.shear_ref_speed);
  o.num("shear_ref_height", w.shear_ref_height);
  o.num("shear_exponent", w.shear_exponent);
  o.num("shear_heading_deg", w.shear_heading_deg);
  o.vec3("gust_amplitude", w.gust_amplitude_e);
  o.num("gust_start", w.gust_start);
  o.num("gust_duration", w.gust_duration);
  o.vec3("turbulence_sigma", w.turbulence_sigma);
  o.vec3("turbulence_length", w.turbulence_length);
  o.integer("seed", w.seed);
  o.finish();
}

}  // namespace

VehicleConfig vehicle_from_json(const std::string& text) {
  const json j = parse(text, "vehicle");
  VehicleConfig v = read_vehicle(Obj(j, "vehicle"));
  try {
    v.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(std::string("vehicle: ") + e.what());
  }
  return v;
}

VehicleConfig load_vehicle(const fs::path& path) {
  try {
    return vehicle_from_json(read_file(path));
  } catch (const ScenarioError& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

VehicleConfig builtin_vehicle(const std::string& name) {
  if (name != "f450") throw ScenarioError("unknown builtin vehicle '" + name + "'");
  VehicleConfig v;
  v.name = "f450";
  auto& s = v.sensors;
  s.accel.noise_std = 0.05;
  s.accel.bias_walk = 0.001;
  s.accel.initial_bias = Vec3(0.02, -0.02, 0.03);
  s.accel.vibration_gain = 1e-4;
  s.gyro.noise_std = 0.003;
  s.gyro.bias_walk = 1e-4;
  s.gyro.initial_bias = Vec3(0.002, -0.001, 0.0015);
  s.mag.noise_std = 0.2;
  s.baro.noise_std = 1.0;
  s.baro.bias_walk = 0.05;
  s.gps.latency = 0.1;
  s.gps.position.noise_std = 0.3;
  s.gps.position.bias_walk = 0.05;
  s.gps.velocity.noise_std = 0.05;
  return v;
}

Scenario scenario_from_json(const std::string& text, const fs::path& base_dir) {
  const json j = parse(text, "scenario");
  Obj o(j, "scenario");
  Scenario sc;
  o.str("name", sc.name);
  if (sc.name.empty()) o.fail("missing 'name'");
  o.str("description", sc.description);

  sc.vehicle_ref = "builtin:f450";
  o.str("vehicle", sc.vehicle_ref);
  if (sc.vehicle_ref.starts_with("builtin:")) {
    sc.spec.vehicle = builtin_vehicle(sc.vehicle_ref.substr(8));
  } else {
    const fs::path p = base_dir / sc.vehicle_ref;
    if (!fs::exists(p)) o.fail("vehicle config '" + p.string() + "' does not exist");
    sc.spec.vehicle = load_vehicle(p);
  }

  auto& sim = sc.spec.sim;
  o.integer("seed", sim.seed);
  o.num("stop_time", sim.stop_time);
  if (o.has("sim")) {
    Obj s = o.child("sim");
    s.num("physics_rate", sim.physics_rate);
    s.integer("controller_divider", sim.controller_divider);
    s.integer("log_decimation", sim.log_decimation);
    s.num("crash_speed", sim.crash_speed);
    if (s.has("sensor_rates")) {
      Obj r = s.child("sensor_rates");
      r.num("imu", sim.sensor_rates.imu);
      r.num("mag", sim.sensor_rates.mag);
      r.num("baro", sim.sensor_rates.baro);
      r.num("gps", sim.sensor_rates.gps);
      r.finish();
    }
    s.finish();
  }
  if (o.has("environment")) {
    Obj e = o.child("environment");
    auto& env = sc.spec.environment;
    if (e.has("origin")) {
      Obj org = e.child("origin");
      org.num("latitude_deg", env.origin.latitude_deg);
      org.num("longitude_deg", env.origin.longitude_deg);
      org.num("altitude_m", env.origin.altitude_m);
      org.finish();
    }
    if (e.has("dipole")) {
      Obj d = e.child("dipole");
      d.num("g10", env.dipole.g10);
      d.num("g11", env.dipole.g11);
      d.num("h11", env.dipole.h11);
      d.finish();
    }
    if (e.has("wind")) read_wind(e.child("wind"), env.wind);
    e.finish();
  }
  if (o.has("initial")) {
    Obj i = o.child("initial");
    if (i.has("position")) {
      Vec3 p = Vec3::Zero();
      i.vec3("position", p);
      sc.spec.initial_position = p;
    }
    i.deg("yaw_deg", sc.spec.initial_yaw);
    i.finish();
  }
  if (o.has("commands")) {
    const auto& arr = o.at("commands");
    if (!arr.is_array()) o.fail("'commands' must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      sc.spec.commands.push_back(read_command(Obj(arr[i], "scenario.commands[" + std::to_string(i) + "]")));
    }
  }
  if (o.has("faults")) {
    const auto& arr = o.at("faults");
    if (!arr.is_array()) o.fail("'faults' must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      sc.spec.faults.push_back(read_fault(Obj(arr[i], "scenario.faults[" + std::to_string(i) + "]"), i));
    }
  }
  if (o.has("expected")) {
    const auto& arr = o.at("expected");
    if (!arr.is_array()) o.fail("'expected' must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Obj b(arr[i], "scenario.expected[" + std::to_string(i) + "]");
      MetricBound mb;
      b.str("metric", mb.metric);
      if (!is_registered_metric(mb.metric)) b.fail("unknown metric '" + mb.metric + "'");
      b.num("from", mb.from);
      if (b.has("to") && !b.at("to").is_null()) b.num("to", mb.to);
      b.num("min", mb.min);
      b.num("max", mb.max);
      b.num("band", mb.band);
      if (mb.band && (mb.metric != "settling_time" || !(*mb.band > 0.0))) {
        b.fail("'band' is a positive distance and only applies to settling_time");
      }
      if (!mb.min && !mb.max) b.fail("a bound needs 'min' or 'max'");
      if (!(mb.from < mb.to)) b.fail("'from' must be before 'to'");
      b.finish();
      sc.expected.push_back(mb);
    }
  }
  o.finish();

  try {
    sc.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("scenario '" + sc.name + "': " + e.what());
  }
  return sc;
}

Scenario load_scenario(const fs::path& path) {
  try {
    Scenario sc = scenario_from_json(read_file(path), path.parent_path());
    sc.source = path;
    return sc;
  } catch (const ScenarioError& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

ScenarioDatabase open_database(const fs::path& dir) {
  ScenarioDatabase db;
  db.root = dir;
  const fs::path index = dir / "index.json";
  const json j = parse(read_file(index), index.string());
  Obj o(j, index.string());
  if (o.has("scenarios")) {
    const auto& arr = o.at("scenarios");
    if (!arr.is_array()) o.fail("'scenarios' must be an array of file names");
    for (const auto& e : arr) {
      if (!e.is_string()) o.fail("'scenarios' must be an array of file names");
      db.files.push_back(dir / e.get<std::string>());
    }
  }
  std::string description;
  o.str("description", description);
  o.finish();
  return db;
}

std::vector<ValidationIssue> validate_database(const ScenarioDatabase& db) {
  std::vector<ValidationIssue> issues;
  std::set<std::string> names;
  for (const auto& f : db.files) {
    try {
      const Scenario sc = load_scenario(f);
      if (!names.insert(sc.name).second) {
        issues.push_back({f, f.string() + ": duplicate scenario name '" + sc.name + "'"});
      }
    } catch (const std::exception& e) {
      issues.push_back({f, e.what()});
    }
  }
  return issues;
}

// --- metrics ------------------------------------------------------------------------

const std::vector<MetricInfo>& metric_registry() {
  static const std::vector<MetricInfo> reg = {
      {"altitude_error_max", "m", "max |altitude - setpoint altitude| while in position mode"},
      {"position_error_max", "m", "max 3-D distance to the position setpoint while in position mode"},
      {"steady_state_position_error", "m", "mean 3-D position error over the last 2 s of the window"},
      {"settling_time", "s", "time after the last setpoint change until the position error stays inside the band (default 0.2 m)"},
      {"max_tilt_deg", "deg", "max angle between body z and the vertical"},
      {"ground_impact_speed", "m/s", "largest vertical speed at a touchdown"},
      {"estimator_attitude_rms_deg", "deg", "RMS angle between true and estimated attitude"},
      {"estimator_position_rms", "m", "RMS distance between true and estimated position"},
  };
  return reg;
}

bool is_registered_metric(const std::string& name) {
  const auto& r = metric_registry();
  return std::any_of(r.begin(), r.end(), [&](const MetricInfo& m) { return m.name == name; });
}

namespace {

struct Columns {
  explicit Columns(const SimLog& log)
      : t(log.column("t")),
        pn(log.column("p_n")),
        pe(log.column("p_e")),
        pd(log.column("p_d")),
        roll(log.column("roll")),
        pitch(log.column("pitch")),
        sp_mode(log.column("sp_mode")),
        sp_n(log.column("sp_n")),
        sp_e(log.column("sp_e")),
        sp_d(log.column("sp_d")) {}
  std::size_t t, pn, pe, pd, roll, pitch, sp_mode, sp_n, sp_e, sp_d;
};

Vec3 row3(const SimLog& log, std::size_t r, std::size_t c) {
  return Vec3(log.at(r, c), log.at(r, c + 1), log.at(r, c + 2));
}

bool position_mode(const SimLog& log, std::size_t r, const Columns& c) {
  return log.at(r, c.sp_mode) == static_cast<double>(SetpointMode::position);
}

}  // namespace

double compute_metric(const SimLog& log, const std::string& name, double from, double to, double band) {
  if (!is_registered_metric(name)) throw ScenarioError("unknown metric '" + name + "'");
  const double nan = std::numeric_limits<double>::quiet_NaN();

  if (name == "ground_impact_speed") {
    double v = 0.0;
    for (const auto& e : log.events) {
      if (e.kind == "touchdown" && e.t >= from && e.t <= to && e.detail.starts_with("speed=")) {
        v = std::max(v, std::stod(e.detail.substr(6)));
      }
    }
    return v;
  }

  const Columns c(log);
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < log.rows(); ++r) {
    const double t = log.at(r, c.t);
    if (t >= from && t <= to) rows.push_back(r);
  }
  if (rows.empty()) return nan;

  auto pos_err = [&](std::size_t r) {
    return (row3(log, r, c.pn) - row3(log, r, c.sp_n)).norm();
  };

  if (name == "altitude_error_max" || name == "position_error_max") {
    double v = -1.0;
    for (auto r : rows) {
      if (!position_mode(log, r, c)) continue;
      const double e = name == "altitude_error_max" ? std::abs(log.at(r, c.pd) - log.at(r, c.sp_d)) : pos_err(r);
      v = std::max(v, e);
    }
    return v < 0.0 ? nan : v;
  }
  if (name == "steady_state_position_error") {
    const double t_end = log.at(rows.back(), c.t);
    double sum = 0.0;
    std::size_t n = 0;
    for (auto r : rows) {
      if (log.at(r, c.t) < t_end - 2.0 || !position_mode(log, r, c)) continue;
      sum += pos_err(r);
      ++n;
    }
    return n ? sum / static_cast<double>(n) : nan;
  }
  if (name == "settling_time") {
    std::size_t start = rows.front();
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (row3(log, rows[i], c.sp_n) != row3(log, rows[i - 1], c.sp_n) ||
          log.at(rows[i], c.sp_mode) != log.at(rows[i - 1], c.sp_mode)) {
        start = rows[i];
      }
    }
    if (!position_mode(log, start, c)) return nan;
    const double t0 = log.at(start, c.t);
    double settled_at = t0;
    for (auto r : rows) {
      if (r < start) continue;
      if (pos_err(r) > band) {
        settled_at = std::numeric_limits<double>::infinity();
      } else if (std::isinf(settled_at)) {
        settled_at = log.at(r, c.t);
      }
    }
    return settled_at - t0;
  }
  if (name == "max_tilt_deg") {
    double v = 0.0;
    for (auto r : rows) {
      const double ct = std::clamp(std::cos(log.at(r, c.roll)) * std::cos(log.at(r, c.pitch)), -1.0, 1.0);
      v = std::max(v, std::acos(ct) * kRadToDeg);
    }
    return v;
  }
  if (name == "estimator_attitude_rms_deg") {
    const std::size_t q = log.column("q_w");
    const std::size_t er = log.column("est_roll");
    double sum = 0.0;
    for (auto r : rows) {
      const Eigen::Quaterniond truth(log.at(r, q), log.at(r, q + 1), log.at(r, q + 2), log.at(r, q + 3));
      const Rotation est = Rotation::from_euler(log.at(r, er), log.at(r, er + 1), log.at(r, er + 2));
      const double a = truth.normalized().angularDistance(est.quaternion()) * kRadToDeg;
      sum += a * a;
    }
    return std::sqrt(sum / static_cast<double>(rows.size()));
  }
  if (name == "estimator_position_rms") {
    const std::size_t ep = log.column("est_p_n");
    double sum = 0.0;
    for (auto r : rows) sum += (row3(log, r, c.pn) - row3(log, r, ep)).squaredNorm();
    return std::sqrt(sum / static_cast<double>(rows.size()));
  }
  return nan;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::error: return "error";
  }
  return "?";
}

Evaluation evaluate(const SimLog& log, const std::vector<MetricBound>& expected) {
  Evaluation ev;
  ev.termination = log.termination;
  bool ok = log.termination == Termination::completed;
  for (const auto& b : expected) {
    MetricResult m;
    m.bound = b;
    m.value = compute_metric(log, b.metric, b.from, b.to, b.band.value_or(kSettlingBand));
    m.pass = !std::isnan(m.value) && (!b.min || m.value >= *b.min) && (!b.max || m.value <= *b.max);
    ok = ok && m.pass;
    ev.metrics.push_back(m);
  }
  ev.verdict = ok ? Verdict::pass : Verdict::fail;
  return ev;
}

// --- campaigns ------------------------------------------------------------------------

CaseReport run_case(const Scenario& scenario, const CampaignOptions& opt, SimLog* log_out) {
  CaseReport rep;
  rep.name = scenario.name;
  rep.source = scenario.source;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    RunSpec spec = scenario.spec;
    if (opt.seed_override) spec.sim.seed = *opt.seed_override;
    if (opt.log_decimation) spec.sim.log_decimation = *opt.log_decimation;
    Simulation sim(spec);
    if (opt.pace) {
      if (!(*opt.pace > 0.0)) throw std::invalid_argument("pace must be > 0");
      const auto start = std::chrono::steady_clock::now();
      while (sim.tick()) {
        std::this_thread::sleep_until(start + std::chrono::duration<double>(sim.time() / *opt.pace));
      }
    }
    SimLog log = sim.run();
    rep.sim_time = sim.time();
    const Evaluation ev = evaluate(log, scenario.expected);
    rep.verdict = ev.verdict;
    rep.termination = ev.termination;
    rep.metrics = ev.metrics;
    for (const auto& e : log.events) {
      if (e.kind != "touchdown") rep.fault_timeline.push_back(e);
    }
    if (opt.log_dir) {
      fs::create_directories(*opt.log_dir);
      const fs::path p = *opt.log_dir / (scenario.name + (opt.binary_logs ? ".bin" : ".csv"));
      write_log(log, p.string());
      rep.log_path = p.string();
    }
    if (log_out) *log_out = std::move(log);
  } catch (const std::exception& e) {
    rep.verdict = Verdict::error;
    rep.error = e.what();
  }
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

namespace {

void tally(TestReport& r) {
  r.passed = r.failed = r.errors = 0;
  for (const auto& c : r.cases) {
    switch (c.verdict) {
      case Verdict::pass: ++r.passed; break;
      case Verdict::fail: ++r.failed; break;
      case Verdict::error: ++r.errors; break;
    }
  }
}

}  // namespace

TestReport run_campaign(const std::vector<Scenario>& scenarios, const CampaignOptions& opt) {
  TestReport report;
  report.cases.resize(scenarios.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < scenarios.size(); i = next++) {
      report.cases[i] = run_case(scenarios[i], opt);
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(opt.parallelism, static_cast<unsigned>(scenarios.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
  }
  tally(report);
  return report;
}

TestReport run_campaign(const ScenarioDatabase& db, const CampaignOptions& opt) {
  std::vector<Scenario> loaded;
  std::vector<std::optional<CaseReport>> failures;
  for (const auto& f : db.files) {
    try {
      loaded.push_back(load_scenario(f));
      failures.emplace_back();
    } catch (const std::exception& e) {
      CaseReport c;
      c.name = f.stem().string();
      c.source = f;
      c.verdict = Verdict::error;
      c.error = e.what();
      failures.emplace_back(std::move(c));
    }
  }
  TestReport ran = run_campaign(loaded, opt);
  TestReport report;
  std::size_t k = 0;
  for (auto& f : failures) {
    report.cases.push_back(f ? std::move(*f) : std::move(ran.cases[k++]));
  }
  tally(report);
  return report;
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string report_json(const TestReport& report) {
  json j;
  j["summary"] = {{"total", report.cases.size()},
                  {"passed", report.passed},
                  {"failed", report.failed},
                  {"errors", report.errors}};
  j["cases"] = json::array();
  for (const auto& c : report.cases) {
    json jc;
    jc["name"] = c.name;
    jc["source"] = c.source.string();
    jc["verdict"] = std::string(to_string(c.verdict));
    jc["termination"] = c.termination ? json(std::string(to_string(*c.termination))) : json(nullptr);
    jc["metrics"] = json::array();
    for (const auto& m : c.metrics) {
      json jm = {{"metric", m.bound.metric},
                 {"value", number_or_null(m.value)},
                 {"from", m.bound.from},
                 {"to", number_or_null(m.bound.to)},
                 {"pass", m.pass}};
      if (m.bound.min) jm["min"] = *m.bound.min;
      if (m.bound.max) jm["max"] = *m.bound.max;
      if (m.bound.band) jm["band"] = *m.bound.band;
      jc["metrics"].push_back(jm);
    }
    jc["timeline"] = json::array();
    for (const auto& e : c.fault_timeline) {
      jc["timeline"].push_back({{"t", e.t}, {"event", e.kind}, {"detail", e.detail}});
    }
    if (!c.log_path.empty()) jc["log"] = c.log_path;
    if (!c.error.empty()) jc["error"] = c.error;
    jc["sim_time_s"] = c.sim_time;
    jc["runtime_s"] = c.runtime_s;
    j["cases"].push_back(jc);
  }
  return j.dump(2) + "\n";
}

std::string report_text(const TestReport& report) {
  std::ostringstream out;
  out << std::setprecision(4);
  for (const auto& c : report.cases) {
    std::string verdict(to_string(c.verdict));
    std::transform(verdict.begin(), verdict.end(), verdict.begin(), ::toupper);
    out << verdict << "  " << c.name;
    if (c.termination) out << "  [" << to_string(*c.termination) << "]";
    out << "  " << c.runtime_s << " s\n";
    for (const auto& m : c.metrics) {
      out << "    " << (m.pass ? "ok   " : "FAIL ") << m.bound.metric << " = " << m.value;
      if (m.bound.min) out << "  min " << *m.bound.min;
      if (m.bound.max) out << "  max " << *m.bound.max;
      out << "  window [" << m.bound.from << ", " << m.bound.to << "]\n";
    }
    for (const auto& e : c.fault_timeline) {
      out << "    t=" << e.t << "  " << e.kind << "  " << e.detail << "\n";
    }
    if (!c.error.empty()) out << "    error: " << c.error << "\n";
  }
  out << report.cases.size() << " cases: " << report.passed << " passed, " << report.failed << " failed, "
      << report.errors << " errors\n";
  return out.str();
}

}  // namespace uvsim
