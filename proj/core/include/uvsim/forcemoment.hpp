#pragma once

// Force and moment aggregation: aerodynamic, gravity, ground contact and
// per-rotor contributions, all reduced to the body center in body axes.

#include "uvsim/actuator.hpp"
#include "uvsim/environment.hpp"
#include "uvsim/rigidbody.hpp"

#include <span>
#include <vector>

namespace uvsim {

struct AeroParams {
  Vec3 drag = Vec3::Constant(0.055);             // F = 0.5 rho |v| diag(drag) v, m^2
  Vec3 rotational_damping = Vec3(0.0035, 0.0039, 0.0034);  // N m / (rad/s)

  void validate() const;
};

/// Penalty spring-damper ground contact on the four bottom corners of a
/// cuboid. stiffness and damping are totals shared equally by the corners.
struct ContactParams {
  double ground_altitude = 0.0;   // m above the NED origin
  double stiffness = 20000.0;     // N/m
  double damping = 300.0;         // N/(m/s)
  double damping_depth = 1e-3;    // m, damping ramps in over this depth
  double friction = 0.6;          // Coulomb cap coefficient
  double friction_damping = 50.0; // N/(m/s), viscous tangential force before capping
  Vec3 half_extent = Vec3(0.15, 0.15, 0.1);  // body box; corners at z = +half_extent.z

  void validate() const;
  double ground_z() const { return -ground_altitude; }
};

struct Rotor {
  Vec3 position = Vec3::Zero();  // m, body frame
  int spin = 1;                  // sign of reaction torque about body z
  double thrust_coeff = 1.105e-5;  // N/(rad/s)^2
  double torque_coeff = 1.489e-7;  // N m/(rad/s)^2
};

using RotorGeometry = std::vector<Rotor>;

void validate_geometry(std::span<const Rotor> rotors);

/// Standard X-quad with PX4 ordering: front-right, rear-left, front-left,
/// rear-right; the first two spin counter-clockwise seen from above.
RotorGeometry quad_x_geometry(double arm_length, double thrust_coeff, double torque_coeff);

inline constexpr double kRhoReference = isa::kRho0;

/// Thrust along body -z and reaction torque about body z for one rotor,
/// scaled by rho / rho0, moment taken about the body center.
ForceMoment actuator_wrench(const Rotor& rotor, double delta, const EnvSample& env);

ForceMoment aero_wrench(const VehicleState& s, const EnvSample& env, const AeroParams& aero);
ForceMoment gravity_wrench(const VehicleState& s, const EnvSample& env, double mass);
ForceMoment contact_wrench(const VehicleState& s, const ContactParams& contact);

struct WrenchBreakdown {
  ForceMoment aero;
  ForceMoment gravity;
  ForceMoment contact;
  ForceMoment actuators;
  ForceMoment total;
};

/// Rotor i's thrust and torque coefficients are scaled by effectiveness[i]
/// when that span is non-empty.
WrenchBreakdown total_wrench(const VehicleState& s, const EnvSample& env, std::span<const ActuatorState> act,
                             const AeroParams& aero, const ContactParams& contact, std::span<const Rotor> rotors,
                             double mass, std::span<const double> effectiveness = {});

struct MixerOutput {
  double thrust;  // N, positive up
  Vec3 torque;    // N m, body (roll, pitch, yaw)
};

/// Textbook X-quad mix used as an independent check of the per-rotor
/// wrench sum. Throws std::invalid_argument for non-X-quad geometry.
MixerOutput quadcopter_mixer_reference(std::span<const double> deltas, std::span<const Rotor> rotors);

}  // namespace uvsim
