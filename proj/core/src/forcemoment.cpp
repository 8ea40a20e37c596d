#include "uvsim/forcemoment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace uvsim {

void AeroParams::validate() const {
  if ((drag.array() < 0.0).any() || (rotational_damping.array() < 0.0).any() || !drag.allFinite() ||
      !rotational_damping.allFinite()) {
    throw std::invalid_argument("AeroParams: coefficients must be finite and >= 0");
  }
}

void ContactParams::validate() const {
  if (!(stiffness > 0.0) || !(damping >= 0.0) || !(friction >= 0.0) || !(friction_damping >= 0.0) ||
      !(damping_depth > 0.0) || !(half_extent.array() >= 0.0).all()) {
    throw std::invalid_argument("ContactParams: require stiffness > 0, damping/friction >= 0");
  }
}

void validate_geometry(std::span<const Rotor> rotors) {
  if (rotors.empty()) {
    throw std::invalid_argument("rotor geometry: at least one rotor required");
  }
  int spin_sum = 0;
  for (const auto& r : rotors) {
    if (!(r.thrust_coeff > 0.0) || !(r.torque_coeff > 0.0) || !r.position.allFinite()) {
      throw std::invalid_argument("rotor geometry: coefficients must be positive");
    }
    if (r.spin != 1 && r.spin != -1) {
      throw std::invalid_argument("rotor geometry: spin must be +1 or -1");
    }
    spin_sum += r.spin;
  }
  if (rotors.size() == 4 && spin_sum != 0) {
    throw std::invalid_argument("rotor geometry: quadcopter spins must cancel");
  }
}

RotorGeometry quad_x_geometry(double arm_length, double thrust_coeff, double torque_coeff) {
  const double a = arm_length / std::sqrt(2.0);
  RotorGeometry g(4);
  const std::array<Vec3, 4> pos = {Vec3(a, a, 0.0), Vec3(-a, -a, 0.0), Vec3(a, -a, 0.0), Vec3(-a, a, 0.0)};
  const std::array<int, 4> spin = {1, 1, -1, -1};
  for (std::size_t i = 0; i < 4; ++i) {
    g[i].position = pos[i];
    g[i].spin = spin[i];
    g[i].thrust_coeff = thrust_coeff;
    g[i].torque_coeff = torque_coeff;
  }
  return g;
}

ForceMoment actuator_wrench(const Rotor& rotor, double delta, const EnvSample& env) {
  const double scale = env.rho / kRhoReference;
  const double d2 = delta * delta;
  ForceMoment fm;
  fm.force = Vec3(0.0, 0.0, -scale * rotor.thrust_coeff * d2);
  fm.moment = rotor.position.cross(fm.force);
  fm.moment.z() += rotor.spin * scale * rotor.torque_coeff * d2;
  return fm;
}

ForceMoment aero_wrench(const VehicleState& s, const EnvSample& env, const AeroParams& aero) {
  const Vec3 v_rel_b = s.att.apply_inverse(env.wind_e - s.v_e);
  ForceMoment fm;
  fm.force = 0.5 * env.rho * v_rel_b.norm() * aero.drag.cwiseProduct(v_rel_b);
  fm.moment = -aero.rotational_damping.cwiseProduct(s.w_b);
  return fm;
}

ForceMoment gravity_wrench(const VehicleState& s, const EnvSample& env, double mass) {
  ForceMoment fm;
  fm.force = s.att.apply_inverse(Vec3(0.0, 0.0, mass * env.g));
  return fm;
}

ForceMoment contact_wrench(const VehicleState& s, const ContactParams& contact) {
  ForceMoment fm;
  const Vec3& h = contact.half_extent;
  const std::array<Vec3, 4> corners = {Vec3(h.x(), h.y(), h.z()), Vec3(h.x(), -h.y(), h.z()),
                                       Vec3(-h.x(), h.y(), h.z()), Vec3(-h.x(), -h.y(), h.z())};
  const double k = contact.stiffness / 4.0;
  const double c = contact.damping / 4.0;
  const double cf = contact.friction_damping / 4.0;
  const double ground = contact.ground_z();
  const Vec3 v_e = s.att.apply(s.v_b);
  for (const Vec3& r : corners) {
    const Vec3 r_e = s.att.apply(r);
    const double depth = s.p_e.z() + r_e.z() - ground;
    if (!(depth > 0.0)) continue;
    const Vec3 v_c = v_e + s.att.apply(s.w_b.cross(r));
    const double ramp = std::min(1.0, depth / contact.damping_depth);
    const double normal = std::max(0.0, k * depth + c * ramp * v_c.z());
    Vec3 f_e(0.0, 0.0, -normal);
    if (normal > 0.0) {
      Eigen::Vector2d ft = -cf * v_c.head<2>();
      const double cap = contact.friction * normal;
      const double mag = ft.norm();
      if (mag > cap) ft *= cap / mag;
      f_e.head<2>() = ft;
    }
    const Vec3 f_b = s.att.apply_inverse(f_e);
    fm.force += f_b;
    fm.moment += r.cross(f_b);
  }
  return fm;
}

WrenchBreakdown total_wrench(const VehicleState& s, const EnvSample& env, std::span<const ActuatorState> act,
                             const AeroParams& aero, const ContactParams& contact, std::span<const Rotor> rotors,
                             double mass, std::span<const double> effectiveness) {
  if (act.size() != rotors.size()) {
    throw std::invalid_argument("total_wrench: actuator count does not match rotor count");
  }
  if (!effectiveness.empty() && effectiveness.size() != rotors.size()) {
    throw std::invalid_argument("total_wrench: effectiveness count does not match rotor count");
  }
  WrenchBreakdown w;
  w.aero = aero_wrench(s, env, aero);
  w.gravity = gravity_wrench(s, env, mass);
  w.contact = contact_wrench(s, contact);
  for (std::size_t i = 0; i < rotors.size(); ++i) {
    if (effectiveness.empty()) {
      w.actuators += actuator_wrench(rotors[i], act[i].delta, env);
    } else {
      Rotor degraded = rotors[i];
      degraded.thrust_coeff *= effectiveness[i];
      degraded.torque_coeff *= effectiveness[i];
      w.actuators += actuator_wrench(degraded, act[i].delta, env);
    }
  }
  w.total = w.aero;
  w.total += w.gravity;
  w.total += w.contact;
  w.total += w.actuators;
  return w;
}

MixerOutput quadcopter_mixer_reference(std::span<const double> deltas, std::span<const Rotor> rotors) {
  if (rotors.size() != 4 || deltas.size() != 4) {
    throw std::invalid_argument("mixer reference: exactly four rotors required");
  }
  const double L = std::abs(rotors[0].position.x());
  int spin_sum = 0;
  std::array<bool, 4> quadrant{};
  for (const auto& r : rotors) {
    const double x = r.position.x(), y = r.position.y();
    if (L <= 0.0 || std::abs(std::abs(x) - L) > 1e-9 * L || std::abs(std::abs(y) - L) > 1e-9 * L) {
      throw std::invalid_argument("mixer reference: rotors are not in a symmetric X layout");
    }
    quadrant[(x > 0 ? 0 : 2) + (y > 0 ? 0 : 1)] = true;
    spin_sum += r.spin;
  }
  if (spin_sum != 0 || !std::all_of(quadrant.begin(), quadrant.end(), [](bool b) { return b; })) {
    throw std::invalid_argument("mixer reference: need one rotor per quadrant and balanced spins");
  }

  // [T; tx; ty; tz] = M * [c_T d^2 ...] with sign rows (+1, -sy, +sx, s * cM/cT).
  MixerOutput out{0.0, Vec3::Zero()};
  for (std::size_t i = 0; i < 4; ++i) {
    const double thrust = rotors[i].thrust_coeff * deltas[i] * deltas[i];
    const double sx = rotors[i].position.x() > 0 ? 1.0 : -1.0;
    const double sy = rotors[i].position.y() > 0 ? 1.0 : -1.0;
    out.thrust += thrust;
    out.torque.x() += -sy * L * thrust;
    out.torque.y() += sx * L * thrust;
    out.torque.z() += rotors[i].spin * rotors[i].torque_coeff * deltas[i] * deltas[i];
  }
  return out;
}

}  // namespace uvsim
