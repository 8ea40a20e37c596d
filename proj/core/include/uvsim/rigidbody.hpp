#pragma once

// 6-DOF rigid-body model under flat-earth and rigid-body assumptions:
//
//   p_e'  = R * v_b
//   v_b'  = -w_b x v_b + F_b / m
//   R'    = R * [w_b]x          (carried as q' = 0.5 * q (x) [0, w_b])
//   J w_b' = -w_b x (J w_b) + M_b

#include "uvsim/frames.hpp"

#include <stdexcept>
#include <string>

namespace uvsim {

struct ForceMoment {
  Vec3 force = Vec3::Zero();   // N, body frame
  Vec3 moment = Vec3::Zero();  // N*m, body frame

  ForceMoment& operator+=(const ForceMoment& o) {
    force += o.force;
    moment += o.moment;
    return *this;
  }
  friend ForceMoment operator+(ForceMoment a, const ForceMoment& b) { return a += b; }
};

/// Mass properties. Validated on construction.
class BodyParams {
 public:
  BodyParams(double mass, const Mat3& inertia);

  double mass() const { return mass_; }
  const Mat3& inertia() const { return inertia_; }
  const Mat3& inertia_inverse() const { return inertia_inv_; }

  /// Same inertia, different mass (payload change faults).
  BodyParams with_mass(double mass) const { return BodyParams(mass, inertia_); }

 private:
  double mass_;
  Mat3 inertia_;
  Mat3 inertia_inv_;
};

struct VehicleState {
  Vec3 p_e = Vec3::Zero();   // m, NED
  Vec3 v_b = Vec3::Zero();   // m/s, body
  Rotation att;              // body -> earth
  Vec3 w_b = Vec3::Zero();   // rad/s, body

  // Outputs refreshed by step().
  Vec3 v_e = Vec3::Zero();      // m/s, NED
  Vec3 a_b = Vec3::Zero();      // m/s^2, d(v_b)/dt in the body frame
  Vec3 w_dot_b = Vec3::Zero();  // rad/s^2

  bool finite() const;
};

struct StateDerivative {
  Vec3 p_dot = Vec3::Zero();
  Vec3 v_dot = Vec3::Zero();
  Eigen::Vector4d q_dot = Eigen::Vector4d::Zero();  // (w, x, y, z)
  Vec3 w_dot = Vec3::Zero();
};

class NonFiniteState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

StateDerivative derivatives(const VehicleState& s, const BodyParams& params, const ForceMoment& fm);

inline constexpr double kMaxStep = 0.01;

/// Classical RK4 over one tick with fm held constant. Throws
/// NonFiniteState if s or fm is not finite and std::invalid_argument for
/// dt outside (0, kMaxStep].
VehicleState step(const VehicleState& s, const BodyParams& params, const ForceMoment& fm, double dt);

/// Recomputes v_e, a_b and w_dot_b for the given wrench.
void refresh_outputs(VehicleState& s, const BodyParams& params, const ForceMoment& fm);

}  // namespace uvsim
