#include "uvsim/rigidbody.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace uvsim {

BodyParams::BodyParams(double mass, const Mat3& inertia) : mass_(mass), inertia_(inertia) {
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw std::invalid_argument("BodyParams: mass must be positive");
  }
  if (!inertia.allFinite() || (inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("BodyParams: inertia must be finite and symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia);
  const Vec3 ev = eig.eigenvalues();
  if (ev.minCoeff() <= 0.0) {
    throw std::invalid_argument("BodyParams: inertia must be positive definite");
  }
  const double tol = 1e-12 * ev.maxCoeff();
  if (ev(0) + ev(1) < ev(2) - tol || ev(0) + ev(2) < ev(1) - tol || ev(1) + ev(2) < ev(0) - tol) {
    throw std::invalid_argument("BodyParams: principal moments violate the triangle inequality");
  }
  inertia_inv_ = inertia.inverse();
}

bool VehicleState::finite() const {
  return p_e.allFinite() && v_b.allFinite() && w_b.allFinite() &&
         att.quaternion().coeffs().allFinite();
}

namespace {

// Flat 13-element state: p(3) v(3) q(4: w,x,y,z) w(3).
using Flat = Eigen::Matrix<double, 13, 1>;

struct Raw {
  Vec3 p, v;
  Eigen::Vector4d q;
  Vec3 w;
};

Flat pack(const Vec3& p, const Vec3& v, const Eigen::Vector4d& q, const Vec3& w) {
  Flat x;
  x << p, v, q, w;
  return x;
}

Raw unpack(const Flat& x) {
  return {x.segment<3>(0), x.segment<3>(3), x.segment<4>(6), x.segment<3>(10)};
}

Flat rate(const Flat& x, const BodyParams& params, const ForceMoment& fm) {
  const Raw r = unpack(x);
  // Intermediate RK stages use the unnormalized quaternion; only the
  // rotation applied to v is normalized.
  const Eigen::Quaterniond q(r.q(0), r.q(1), r.q(2), r.q(3));
  const Vec3 p_dot = q.normalized() * r.v;
  const Vec3 v_dot = -r.w.cross(r.v) + fm.force / params.mass();
  const Eigen::Quaterniond omega(0.0, r.w.x(), r.w.y(), r.w.z());
  const Eigen::Quaterniond qd = q * omega;
  const Eigen::Vector4d q_dot = 0.5 * Eigen::Vector4d(qd.w(), qd.x(), qd.y(), qd.z());
  const Mat3& J = params.inertia();
  const Vec3 w_dot = params.inertia_inverse() * (-r.w.cross(J * r.w) + fm.moment);
  return pack(p_dot, v_dot, q_dot, w_dot);
}

Eigen::Vector4d quat_vec(const Rotation& r) {
  const auto& q = r.quaternion();
  return {q.w(), q.x(), q.y(), q.z()};
}

}  // namespace

StateDerivative derivatives(const VehicleState& s, const BodyParams& params, const ForceMoment& fm) {
  const Flat d = rate(pack(s.p_e, s.v_b, quat_vec(s.att), s.w_b), params, fm);
  const Raw r = unpack(d);
  return {r.p, r.v, r.q, r.w};
}

void refresh_outputs(VehicleState& s, const BodyParams& params, const ForceMoment& fm) {
  s.v_e = s.att.apply(s.v_b);
  s.a_b = -s.w_b.cross(s.v_b) + fm.force / params.mass();
  s.w_dot_b = params.inertia_inverse() * (-s.w_b.cross(params.inertia() * s.w_b) + fm.moment);
}

VehicleState step(const VehicleState& s, const BodyParams& params, const ForceMoment& fm, double dt) {
  if (!(dt > 0.0) || dt > kMaxStep) {
    throw std::invalid_argument("rigidbody::step: dt must be in (0, 0.01] s");
  }
  if (!s.finite() || !fm.force.allFinite() || !fm.moment.allFinite()) {
    throw NonFiniteState("rigidbody::step: non-finite state or wrench");
  }

  const Flat x0 = pack(s.p_e, s.v_b, quat_vec(s.att), s.w_b);
  const Flat k1 = rate(x0, params, fm);
  const Flat k2 = rate(x0 + 0.5 * dt * k1, params, fm);
  const Flat k3 = rate(x0 + 0.5 * dt * k2, params, fm);
  const Flat k4 = rate(x0 + dt * k3, params, fm);
  const Flat x1 = x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  const Raw r = unpack(x1);
  VehicleState out;
  out.p_e = r.p;
  out.v_b = r.v;
  out.w_b = r.w;
  if (!x1.allFinite()) {
    throw NonFiniteState("rigidbody::step: integration produced a non-finite state");
  }
  out.att = Rotation(Eigen::Quaterniond(r.q(0), r.q(1), r.q(2), r.q(3)));
  refresh_outputs(out, params, fm);
  return out;
}

}  // namespace uvsim
