#include "uvsim/forcemoment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace uvsim;

namespace {

EnvSample sea_level() {
  EnvSample e;
  e.rho = kRhoReference;
  return e;
}

}  // namespace

TEST(ActuatorWrench, ZeroSpeedZeroWrench) {
  const Rotor r{Vec3(0.1, 0.2, 0.0), 1};
  const ForceMoment fm = actuator_wrench(r, 0.0, sea_level());
  EXPECT_EQ(fm.force, Vec3::Zero());
  EXPECT_EQ(fm.moment, Vec3::Zero());
}

TEST(ActuatorWrench, SingleRotorOnNoseArm) {
  const Rotor r{Vec3(0.225, 0, 0), 1, 1e-5, 1e-7};
  const ForceMoment fm = actuator_wrench(r, 500.0, sea_level());
  EXPECT_NEAR(fm.force.z(), -2.5, 1e-12);
  EXPECT_EQ(fm.force.head<2>(), Eigen::Vector2d::Zero());
  const Vec3 r_cross_f = r.position.cross(fm.force);
  EXPECT_NEAR(r_cross_f.norm(), 0.5625, 1e-12);
  EXPECT_NEAR(fm.moment.y(), 0.5625, 1e-12);  // nose up
  EXPECT_NEAR(fm.moment.z(), 1e-7 * 500.0 * 500.0, 1e-15);
}

TEST(ActuatorWrench, ScalesWithDensity) {
  const Rotor r{Vec3(0.1, 0.1, 0), -1};
  EnvSample thin = sea_level();
  thin.rho = kRhoReference / 2;
  const ForceMoment a = actuator_wrench(r, 600.0, sea_level());
  const ForceMoment b = actuator_wrench(r, 600.0, thin);
  EXPECT_NEAR(b.force.z(), a.force.z() / 2, 1e-12);
  EXPECT_NEAR(b.moment.z(), a.moment.z() / 2, 1e-15);
}

TEST(ActuatorWrench, CounterRotatingMirrorPairCancelsYaw) {
  const Rotor a{Vec3(0.2, 0.0, 0), 1}, b{Vec3(-0.2, 0.0, 0), -1};
  const ForceMoment fm = actuator_wrench(a, 700.0, sea_level()) + actuator_wrench(b, 700.0, sea_level());
  EXPECT_NEAR(fm.moment.z(), 0.0, 1e-15);
  EXPECT_NEAR(fm.moment.y(), 0.0, 1e-15);
}

TEST(QuadX, GeometryAndSpinOrder) {
  const auto g = quad_x_geometry(0.225, 1.105e-5, 1.489e-7);
  ASSERT_EQ(g.size(), 4u);
  const double a = 0.225 / std::sqrt(2.0);
  const Vec3 expected[] = {Vec3(a, a, 0), Vec3(-a, -a, 0), Vec3(a, -a, 0), Vec3(-a, a, 0)};
  const int spins[] = {1, 1, -1, -1};
  for (int i = 0; i < 4; ++i) {
    EXPECT_LT((g[i].position - expected[i]).norm(), 1e-15) << i;
    EXPECT_EQ(g[i].spin, spins[i]) << i;
    EXPECT_NEAR(g[i].position.norm(), 0.225, 1e-15);
  }
  EXPECT_NO_THROW(validate_geometry(g));
}

TEST(QuadX, GeometryValidation) {
  auto g = quad_x_geometry(0.225, 1e-5, 1e-7);
  g[0].spin = -1;
  EXPECT_THROW(validate_geometry(g), std::invalid_argument);
  g = quad_x_geometry(0.225, 1e-5, 1e-7);
  g[2].thrust_coeff = 0.0;
  EXPECT_THROW(validate_geometry(g), std::invalid_argument);
  EXPECT_THROW(validate_geometry({}), std::invalid_argument);
}

TEST(Gravity, RestingInAirGravityOnly) {
  VehicleState s;
  s.p_e = Vec3(0, 0, -10);
  s.att = Rotation::from_euler(0.2, -0.1, 1.0);
  EnvSample env = sea_level();
  env.g = 9.81;
  const auto rotors = quad_x_geometry(0.225, 1e-5, 1e-7);
  std::vector<ActuatorState> act(4);
  const auto w = total_wrench(s, env, act, AeroParams{}, ContactParams{}, rotors, 1.4);
  const Vec3 expected = s.att.apply_inverse(Vec3(0, 0, 1.4 * 9.81));
  EXPECT_LT((w.total.force - expected).norm(), 1e-12);
  EXPECT_LT(w.total.moment.norm(), 1e-15);
}

TEST(Hover, FourRotorsBalanceGravity) {
  const double m = 1.4, g = 9.81, ct = 1.105e-5;
  const double delta = std::sqrt(m * g / (4 * ct));
  const auto rotors = quad_x_geometry(0.225, ct, 1.489e-7);
  std::vector<ActuatorState> act(4, ActuatorState{delta, 0.0});
  VehicleState s;
  s.p_e = Vec3(0, 0, -10);
  EnvSample env = sea_level();
  env.g = g;
  const auto w = total_wrench(s, env, act, AeroParams{}, ContactParams{}, rotors, m);
  EXPECT_LT(w.total.force.norm(), 1e-12);
  EXPECT_LT(w.total.moment.norm(), 1e-15);
  for (const auto& r : rotors) EXPECT_NEAR(-actuator_wrench(r, delta, env).force.z(), m * g / 4, 1e-12);
}

TEST(Contact, EquilibriumPenetration) {
  ContactParams c;
  const double m = 1.4, g = 9.80665;
  VehicleState s;
  const double depth = m * g / c.stiffness;
  s.p_e = Vec3(0, 0, c.ground_z() - c.half_extent.z() + depth);
  const ForceMoment fm = contact_wrench(s, c);
  EXPECT_NEAR(fm.force.z(), -m * g, 1e-9);
  EXPECT_LT(fm.moment.norm(), 1e-12);
  EXPECT_LT(fm.force.head<2>().norm(), 1e-12);
}

TEST(Contact, NoForceAboveGroundAndNeverPulls) {
  ContactParams c;
  VehicleState s;
  s.p_e = Vec3(0, 0, -1);
  EXPECT_EQ(contact_wrench(s, c).force, Vec3::Zero());
  // Leaving the ground fast: damping must not turn into adhesion.
  s.p_e = Vec3(0, 0, c.ground_z() - c.half_extent.z() + 1e-4);
  s.v_b = Vec3(0, 0, -5);
  EXPECT_LE(contact_wrench(s, c).force.z(), 0.0);
}

TEST(Contact, FrictionIsCapped) {
  ContactParams c;
  VehicleState s;
  s.p_e = Vec3(0, 0, c.ground_z() - c.half_extent.z() + 0.001);
  s.v_b = Vec3(10, 0, 0);
  const Vec3 f = contact_wrench(s, c).force;
  EXPECT_LT(f.x(), 0.0);
  EXPECT_LE(std::abs(f.x()), c.friction * std::abs(f.z()) + 1e-12);
}

TEST(Aero, DragOpposesRelativeAir) {
  VehicleState s;
  s.v_b = Vec3(5, 0, 0);
  s.v_e = Vec3(5, 0, 0);
  s.w_b = Vec3(1, -1, 2);
  const EnvSample env = sea_level();
  AeroParams a;
  const ForceMoment fm = aero_wrench(s, env, a);
  EXPECT_NEAR(fm.force.x(), -0.5 * env.rho * 25.0 * a.drag.x(), 1e-12);
  EXPECT_LT((fm.moment + a.rotational_damping.cwiseProduct(s.w_b)).norm(), 1e-15);
  // Moving with the wind: no drag.
  EnvSample windy = env;
  windy.wind_e = s.v_e;
  EXPECT_LT(aero_wrench(s, windy, a).force.norm(), 1e-15);
}

TEST(Mixer, EqualSpeedsGiveNoTorque) {
  const auto rotors = quad_x_geometry(0.225, 1.105e-5, 1.489e-7);
  const std::vector<double> d(4, 600.0);
  const auto out = quadcopter_mixer_reference(d, rotors);
  EXPECT_LT(out.torque.norm(), 1e-15);
  EXPECT_NEAR(out.thrust, 4 * 1.105e-5 * 360000.0, 1e-12);
}

TEST(Mixer, SpeedingUpOnePairGivesPureYaw) {
  const auto rotors = quad_x_geometry(0.225, 1.105e-5, 1.489e-7);
  const std::vector<double> d = {700.0, 700.0, 600.0, 600.0};  // spin +1 pair faster
  const auto out = quadcopter_mixer_reference(d, rotors);
  EXPECT_NEAR(out.torque.x(), 0.0, 1e-15);
  EXPECT_NEAR(out.torque.y(), 0.0, 1e-15);
  double expected = 0.0;
  for (int i = 0; i < 4; ++i) expected += rotors[i].spin * rotors[i].torque_coeff * d[i] * d[i];
  EXPECT_GT(out.torque.z(), 0.0);
  EXPECT_NEAR(out.torque.z(), expected, 1e-15);
}

TEST(Mixer, MatchesSummedRotorWrenches) {
  const auto rotors = quad_x_geometry(0.225, 1.105e-5, 1.489e-7);
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1000.0);
  for (int k = 0; k < 1000; ++k) {
    const std::vector<double> d = {u(rng), u(rng), u(rng), u(rng)};
    ForceMoment sum;
    for (int i = 0; i < 4; ++i) sum += actuator_wrench(rotors[i], d[i], sea_level());
    const auto out = quadcopter_mixer_reference(d, rotors);
    EXPECT_NEAR(out.thrust, -sum.force.z(), 1e-12);
    EXPECT_LT((out.torque - sum.moment).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Mixer, RejectsNonXLayout) {
  auto rotors = quad_x_geometry(0.225, 1e-5, 1e-7);
  rotors[1].position = Vec3(0.3, 0.0, 0.0);
  EXPECT_THROW(quadcopter_mixer_reference(std::vector<double>(4, 1.0), rotors), std::invalid_argument);
}

TEST(TotalWrench, EffectivenessScalesRotor) {
  const auto rotors = quad_x_geometry(0.225, 1e-5, 1e-7);
  std::vector<ActuatorState> act(4, ActuatorState{600.0, 0.0});
  VehicleState s;
  s.p_e = Vec3(0, 0, -5);
  const std::vector<double> eff = {0.0, 1.0, 1.0, 1.0};
  const auto full = total_wrench(s, sea_level(), act, AeroParams{}, ContactParams{}, rotors, 1.0);
  const auto lost = total_wrench(s, sea_level(), act, AeroParams{}, ContactParams{}, rotors, 1.0, eff);
  const ForceMoment r0 = actuator_wrench(rotors[0], 600.0, sea_level());
  EXPECT_LT((full.actuators.force - lost.actuators.force - r0.force).norm(), 1e-12);
  EXPECT_LT((full.actuators.moment - lost.actuators.moment - r0.moment).norm(), 1e-12);
  EXPECT_THROW(total_wrench(s, sea_level(), act, AeroParams{}, ContactParams{}, rotors, 1.0,
                            std::vector<double>(3, 1.0)),
               std::invalid_argument);
}
