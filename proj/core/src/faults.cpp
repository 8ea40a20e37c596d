#include "uvsim/faults.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uvsim {

std::string_view to_string(FaultKind k) {
  switch (k) {
    case FaultKind::loss_of_effectiveness: return "loss_of_effectiveness";
    case FaultKind::stuck_at: return "stuck_at";
    case FaultKind::signal_loss: return "signal_loss";
    case FaultKind::bias_jump: return "bias_jump";
    case FaultKind::noise_scale: return "noise_scale";
    case FaultKind::gust_override: return "gust_override";
    case FaultKind::mass_change: return "mass_change";
  }
  return "?";
}

std::string_view to_string(SensorChannel c) {
  switch (c) {
    case SensorChannel::accel: return "accel";
    case SensorChannel::gyro: return "gyro";
    case SensorChannel::mag: return "mag";
    case SensorChannel::baro: return "baro";
    case SensorChannel::gps: return "gps";
  }
  return "?";
}

namespace {

bool compatible(FaultTargetKind target, FaultKind kind) {
  switch (kind) {
    case FaultKind::loss_of_effectiveness: return target == FaultTargetKind::actuator;
    case FaultKind::stuck_at: return target == FaultTargetKind::actuator || target == FaultTargetKind::sensor;
    case FaultKind::signal_loss:
    case FaultKind::bias_jump:
    case FaultKind::noise_scale: return target == FaultTargetKind::sensor;
    case FaultKind::gust_override: return target == FaultTargetKind::wind;
    case FaultKind::mass_change: return target == FaultTargetKind::payload;
  }
  return false;
}

double window_end(const FaultSpec& f) {
  return f.duration ? f.trigger.value + *f.duration : std::numeric_limits<double>::infinity();
}

}  // namespace

void validate_schedule(std::span<const FaultSpec> schedule, std::size_t rotor_count, double vehicle_mass) {
  if (schedule.size() > kMaxFaults) {
    throw FaultScheduleError("fault schedule: at most " + std::to_string(kMaxFaults) + " entries");
  }
  double total_mass_delta = 0.0;
  for (const auto& f : schedule) {
    const std::string who = "fault '" + f.name + "': ";
    if (!compatible(f.target.kind, f.kind)) {
      throw FaultScheduleError(who + std::string(to_string(f.kind)) + " does not apply to this target");
    }
    if (f.target.kind == FaultTargetKind::actuator && f.target.actuator >= rotor_count) {
      throw FaultScheduleError(who + "actuator index out of range");
    }
    if (!std::isfinite(f.trigger.value) || (f.trigger.kind == TriggerKind::time && f.trigger.value < 0.0)) {
      throw FaultScheduleError(who + "trigger time must be >= 0");
    }
    if (f.duration && !(*f.duration >= 0.0)) {
      throw FaultScheduleError(who + "duration must be >= 0");
    }
    switch (f.kind) {
      case FaultKind::loss_of_effectiveness:
        if (!(f.factor >= 0.0 && f.factor <= 1.0)) throw FaultScheduleError(who + "factor must be in [0, 1]");
        break;
      case FaultKind::noise_scale:
        if (!(f.factor >= 1.0) || !std::isfinite(f.factor)) throw FaultScheduleError(who + "factor must be >= 1");
        break;
      case FaultKind::stuck_at:
        if (!f.value.allFinite() || (f.target.kind == FaultTargetKind::actuator && f.value.x() < 0.0)) {
          throw FaultScheduleError(who + "stuck value must be finite (and >= 0 for actuators)");
        }
        break;
      case FaultKind::bias_jump:
        if (!f.offset.allFinite()) throw FaultScheduleError(who + "offset must be finite");
        break;
      case FaultKind::mass_change:
        if (!std::isfinite(f.mass_delta)) throw FaultScheduleError(who + "mass delta must be finite");
        total_mass_delta += std::min(f.mass_delta, 0.0);
        break;
      case FaultKind::gust_override:
        if (!f.gust.gust_amplitude_e.allFinite() || (f.gust.constant_e && !f.gust.constant_e->allFinite())) {
          throw FaultScheduleError(who + "wind override must be finite");
        }
        if (f.gust.gust_amplitude_e.squaredNorm() > 0.0 && !f.duration) {
          throw FaultScheduleError(who + "a gust override needs a finite duration");
        }
        break;
      case FaultKind::signal_loss: break;
    }
  }
  if (vehicle_mass + total_mass_delta <= 0.0) {
    throw FaultScheduleError("fault schedule: mass changes could make the vehicle mass non-positive");
  }
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    for (std::size_t j = i + 1; j < schedule.size(); ++j) {
      const auto& a = schedule[i];
      const auto& b = schedule[j];
      if (!(a.target == b.target) || a.kind != b.kind) continue;
      const bool timed = a.trigger.kind == TriggerKind::time && b.trigger.kind == TriggerKind::time;
      const bool overlap = !timed || (a.trigger.value < window_end(b) && b.trigger.value < window_end(a));
      if (overlap) {
        throw FaultScheduleError("faults '" + a.name + "' and '" + b.name +
                                 "' may be active on the same target and kind at once");
      }
    }
  }
}

FaultEngine::FaultEngine(std::vector<FaultSpec> schedule, std::size_t rotor_count)
    : schedule_(std::move(schedule)), status_(schedule_.size()), rotor_count_(rotor_count) {
  effects_.effectiveness.assign(rotor_count_, 1.0);
  effects_.stuck_speed.assign(rotor_count_, std::nullopt);
}

namespace {

bool predicate_holds(const Trigger& tr, double t, const VehicleState& s) {
  switch (tr.kind) {
    case TriggerKind::time: return t >= tr.value;
    case TriggerKind::altitude_above: return -s.p_e.z() > tr.value;
    case TriggerKind::altitude_below: return -s.p_e.z() < tr.value;
    case TriggerKind::speed_above: return s.v_e.norm() > tr.value;
    case TriggerKind::speed_below: return s.v_e.norm() < tr.value;
  }
  return false;
}

}  // namespace

std::vector<FaultEvent> FaultEngine::update(double t, const VehicleState& s) {
  std::vector<FaultEvent> events;
  if (schedule_.empty()) {
    return events;
  }
  for (std::size_t i = 0; i < schedule_.size(); ++i) {
    const auto& f = schedule_[i];
    auto& st = status_[i];
    if (!st.fired && predicate_holds(f.trigger, t, s)) {
      st.fired = true;
      st.t_on = f.trigger.kind == TriggerKind::time ? f.trigger.value : t;
    }
    const bool active = st.fired && (!f.duration || t < st.t_on + *f.duration);
    if (active != st.active) {
      st.active = active;
      events.push_back({t, i, active});
    }
  }

  ActiveEffects e;
  e.effectiveness.assign(rotor_count_, 1.0);
  e.stuck_speed.assign(rotor_count_, std::nullopt);
  for (std::size_t i = 0; i < schedule_.size(); ++i) {
    if (!status_[i].active) continue;
    const auto& f = schedule_[i];
    e.active_mask |= std::uint64_t{1} << i;
    auto* sensor = f.target.kind == FaultTargetKind::sensor ? &e.sensors[static_cast<std::size_t>(f.target.sensor)]
                                                            : nullptr;
    switch (f.kind) {
      case FaultKind::loss_of_effectiveness:
        e.effectiveness[f.target.actuator] *= f.factor;
        e.any_actuator = true;
        break;
      case FaultKind::stuck_at:
        if (sensor) {
          sensor->stuck = f.value;
          e.any_sensor = true;
        } else {
          e.stuck_speed[f.target.actuator] = f.value.x();
          e.any_actuator = true;
        }
        break;
      case FaultKind::signal_loss:
        sensor->lost = true;
        sensor->policy = f.policy;
        e.any_sensor = true;
        break;
      case FaultKind::bias_jump:
        sensor->bias_offset += f.offset;
        sensor->bias_active = true;
        e.any_sensor = true;
        break;
      case FaultKind::noise_scale:
        sensor->noise_scale *= f.factor;
        break;
      case FaultKind::gust_override:
        e.wind = f.gust;
        e.wind_start = status_[i].t_on;
        e.wind_duration = f.duration;
        break;
      case FaultKind::mass_change:
        e.mass_delta += f.mass_delta;
        break;
    }
  }
  effects_ = std::move(e);
  return events;
}

void SensorFaultStage::apply(const ActiveEffects& effects, SensorReadings& r) {
  if (!effects.any_sensor) {
    last_good_ = r;
    have_last_ = true;
    return;
  }
  const auto& fx = effects.sensors;
  auto vec_channel = [&](SensorChannel ch, Vec3& value, const Vec3& last) {
    const auto& f = fx[static_cast<std::size_t>(ch)];
    if (f.lost) {
      value = f.policy == LossPolicy::hold_last && have_last_ ? last : Vec3::Zero();
      return;
    }
    if (f.stuck) {
      value = *f.stuck;
      return;
    }
    if (f.bias_active) value += f.bias_offset;
  };

  SensorReadings healthy = r;
  vec_channel(SensorChannel::accel, r.accel, last_good_.accel);
  vec_channel(SensorChannel::gyro, r.gyro, last_good_.gyro);
  vec_channel(SensorChannel::mag, r.mag, last_good_.mag);

  {
    const auto& f = fx[static_cast<std::size_t>(SensorChannel::baro)];
    if (f.lost) {
      r.baro = f.policy == LossPolicy::hold_last && have_last_ ? last_good_.baro : 0.0;
    } else if (f.stuck) {
      r.baro = f.stuck->x();
    } else if (f.bias_active) {
      r.baro += f.bias_offset.x();
    }
  }
  {
    const auto& f = fx[static_cast<std::size_t>(SensorChannel::gps)];
    if (f.lost) {
      if (f.policy == LossPolicy::hold_last && have_last_ && last_good_.gps) {
        r.gps = last_good_.gps;
      } else {
        r.gps_updated = false;
      }
    } else if (r.gps && f.stuck) {
      r.gps->position.latitude_deg = f.stuck->x();
      r.gps->position.longitude_deg = f.stuck->y();
      r.gps->position.altitude_m = f.stuck->z();
      r.gps->v_e.setZero();
    } else if (r.gps && f.bias_active) {
      // Offset is in local NED metres.
      r.gps->position = ned_to_lla(origin_, lla_to_ned(origin_, r.gps->position) + f.bias_offset);
    }
  }

  // Remember healthy outputs of channels that are not currently lost.
  if (!fx[0].lost) last_good_.accel = healthy.accel;
  if (!fx[1].lost) last_good_.gyro = healthy.gyro;
  if (!fx[2].lost) last_good_.mag = healthy.mag;
  if (!fx[3].lost) last_good_.baro = healthy.baro;
  if (!fx[4].lost) last_good_.gps = healthy.gps;
  have_last_ = true;
}

}  // namespace uvsim
