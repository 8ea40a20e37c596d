#include "uvsim/environment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace uvsim;

namespace {

// Somigliana closed form written out independently of the library.
double somigliana(double lat_deg) {
  const double ge = 9.7803253359, gp = 9.8321849378;
  const double a = 6378137.0, b = 6356752.314245;
  const double k = (b * gp - a * ge) / (a * ge);
  const double e2 = 1.0 - (b * b) / (a * a);
  const double s2 = std::pow(std::sin(lat_deg * kDegToRad), 2);
  return ge * (1.0 + k * s2) / std::sqrt(1.0 - e2 * s2);
}

Vec3 dipole_moment(const DipoleModel& m) { return Vec3(m.g11, m.h11, m.g10); }

GeoPosition geo_from_unit(const Vec3& r) {
  return {std::asin(r.z()) * kRadToDeg, std::atan2(r.y(), r.x()) * kRadToDeg, 0.0};
}

}  // namespace

TEST(Gravity, SomiglianaAtSeaLevel) {
  EXPECT_NEAR(gravity_at({0, 0, 0}), 9.78033, 1e-4);
  EXPECT_NEAR(gravity_at({90, 0, 0}), 9.83219, 1e-4);
  for (double lat = -90; lat <= 90; lat += 7.5) {
    EXPECT_NEAR(gravity_at({lat, 10, 0}), somigliana(lat), 1e-9) << lat;
  }
}

TEST(Gravity, DecreasesWithHeight) {
  EXPECT_LT(gravity_at({45, 0, 1000}), gravity_at({45, 0, 0}));
  // Free-air gradient is about 3.086e-6 s^-2.
  EXPECT_NEAR((gravity_at({45, 0, 0}) - gravity_at({45, 0, 1000})) / 1000.0, 3.086e-6, 2e-8);
}

TEST(Isa, BaseAndLapse) {
  const auto a0 = isa_at(0.0);
  EXPECT_DOUBLE_EQ(a0.temperature, 288.15);
  EXPECT_NEAR(a0.rho, 1.225, 1e-4);
  EXPECT_DOUBLE_EQ(a0.pressure, 101325.0);
  EXPECT_NEAR(isa_at(1000.0).temperature, 281.65, 1e-12);
}

TEST(Isa, BarometricFormulaAt5000m) {
  const double T = 288.15 - 0.0065 * 5000.0;
  const double p = 101325.0 * std::pow(T / 288.15, 9.80665 / (287.05287 * 0.0065));
  const double rho = p / (287.05287 * T);
  EXPECT_NEAR(rho, 0.7364, 1e-3);
  EXPECT_NEAR(isa_at(5000.0).rho, rho, 1e-12);
}

TEST(Isa, PressureAltitudeInvertsPressure) {
  for (double h = -500; h <= 10000; h += 250) {
    EXPECT_NEAR(isa_pressure_altitude(isa_at(h).pressure), h, 1e-6);
  }
}

TEST(Isa, RangeChecked) {
  EXPECT_THROW(isa_at(12000.0), std::out_of_range);
  EXPECT_THROW(isa_at(NAN), std::out_of_range);
}

TEST(MagneticField, HorizontalOnGeomagneticEquator) {
  const DipoleModel model;
  const Vec3 m = dipole_moment(model).normalized();
  const Vec3 e = m.cross(Vec3::UnitZ()).normalized();  // a unit vector with m . e = 0
  for (double a = 0; a < 2 * kPi; a += 0.5) {
    const Vec3 r = std::cos(a) * e + std::sin(a) * m.cross(e);
    const Vec3 b = mag_at(geo_from_unit(r), model);
    EXPECT_LT(std::abs(b.z()) / b.head<2>().norm(), 1e-9);
  }
}

TEST(MagneticField, VerticalAndDoubleAtGeomagneticPole) {
  const DipoleModel model;
  const Vec3 m = dipole_moment(model);
  const Vec3 pole = -m.normalized();  // northern geomagnetic pole
  const Vec3 b_pole = mag_at(geo_from_unit(pole), model);
  EXPECT_LT(b_pole.head<2>().norm() / b_pole.norm(), 1e-9);
  EXPECT_GT(b_pole.z(), 0.0);  // points down in the north
  const Vec3 eq = m.cross(Vec3::UnitZ()).normalized();
  EXPECT_NEAR(b_pole.norm() / mag_at(geo_from_unit(eq), model).norm(), 2.0, 1e-9);
  EXPECT_NEAR(mag_at(geo_from_unit(eq), model).norm(), m.norm() * 1e-3, 1e-9);
}

TEST(MagneticField, MagnitudeStaysInEarthRange) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
  for (int i = 0; i < 2000; ++i) {
    const double b = mag_at({lat(rng), lon(rng), 0.0}).norm();
    EXPECT_GE(b, 20.0);
    EXPECT_LE(b, 70.0);
  }
}

TEST(MagneticField, ZurichPointsNorthAndDown) {
  const Vec3 b = mag_at({47.397742, 8.545594, 488.0});
  EXPECT_GT(b.x(), 15.0);
  EXPECT_GT(b.z(), 35.0);
  EXPECT_LT(std::abs(std::atan2(b.y(), b.x())), 20.0 * kDegToRad);
}

TEST(Wind, ZeroConfiguredIsCalm) {
  WindModel w(WindConfig{});
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(w.step(Vec3(0, 0, -10), 5.0, i * 1e-3, 1e-3), Vec3::Zero());
}

TEST(Wind, ConstantOnly) {
  WindConfig c;
  c.constant_e = Vec3(5, 0, 0);
  WindModel w(c);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(w.step(Vec3(1, 2, -30), 3.0, i * 0.01, 0.01), Vec3(5, 0, 0));
}

TEST(Wind, PowerLawShear) {
  WindConfig c;
  c.shear_ref_speed = 4.0;
  c.shear_ref_height = 10.0;
  c.shear_exponent = 1.0 / 7.0;
  c.shear_heading_deg = 90.0;
  WindModel w(c);
  EXPECT_NEAR(w.shear(Vec3(0, 0, -10)).y(), 4.0, 1e-12);
  EXPECT_NEAR(w.shear(Vec3(0, 0, -10)).x(), 0.0, 1e-12);
  EXPECT_NEAR(w.shear(Vec3(0, 0, -40)).y(), 4.0 * std::pow(4.0, 1.0 / 7.0), 1e-12);
  EXPECT_EQ(w.shear(Vec3(0, 0, 5)), Vec3::Zero());
}

TEST(Wind, OneMinusCosineGust) {
  WindConfig c;
  c.gust_amplitude_e = Vec3(0, 0, 2);
  c.gust_start = 1.0;
  c.gust_duration = 2.0;
  WindModel w(c);
  EXPECT_EQ(w.gust(0.99), Vec3::Zero());
  EXPECT_NEAR(w.gust(2.0).z(), 2.0, 1e-12);
  EXPECT_NEAR(w.gust(1.5).z(), 1.0, 1e-12);
  EXPECT_EQ(w.gust(3.01), Vec3::Zero());
}

TEST(Wind, ConfigValidation) {
  WindConfig c;
  c.turbulence_sigma = Vec3(-1, 0, 0);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = WindConfig{};
  c.turbulence_length = Vec3(0, 1, 1);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = WindConfig{};
  c.gust_duration = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Dryden, LongRunVarianceMatchesSigma) {
  const Vec3 sigma(1.5, 1.0, 0.7);
  DrydenTurbulence d(sigma, Vec3(20, 20, 10), 99);
  const double dt = 0.01;
  const double airspeed = 20.0;
  for (int i = 0; i < 2000; ++i) d.step(airspeed, dt);  // discard the start from rest
  Vec3 sum = Vec3::Zero(), sum2 = Vec3::Zero();
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const Vec3 x = d.step(airspeed, dt);
    sum += x;
    sum2 += x.cwiseProduct(x);
  }
  const Vec3 mean = sum / n;
  const Vec3 var = sum2 / n - mean.cwiseProduct(mean);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(var[k] / (sigma[k] * sigma[k]), 1.0, 0.05) << k;
}

TEST(Dryden, DisabledAndDeterministic) {
  DrydenTurbulence off(Vec3::Zero(), Vec3(200, 200, 50), 1);
  EXPECT_FALSE(off.enabled());
  EXPECT_EQ(off.step(10.0, 0.01), Vec3::Zero());

  DrydenTurbulence a(Vec3::Ones(), Vec3(200, 200, 50), 7), b(Vec3::Ones(), Vec3(200, 200, 50), 7),
      c(Vec3::Ones(), Vec3(200, 200, 50), 8);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 xa = a.step(12.0, 0.001), xb = b.step(12.0, 0.001), xc = c.step(12.0, 0.001);
    EXPECT_EQ(xa, xb);
    differs = differs || xa != xc;
  }
  EXPECT_TRUE(differs);
}

TEST(Dryden, LowAirspeedIsFloored) {
  DrydenTurbulence a(Vec3::Ones(), Vec3(200, 200, 50), 3), b(Vec3::Ones(), Vec3(200, 200, 50), 3);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.step(0.0, 0.01), b.step(kTurbulenceMinAirspeed, 0.01));
  }
}

TEST(Environment, SampleAtOrigin) {
  EnvironmentConfig cfg;
  cfg.origin = {0.0, 0.0, 0.0};
  Environment env(cfg);
  const EnvSample s = env.sample(Vec3::Zero(), Vec3::Zero(), 0.0, 0.001);
  EXPECT_NEAR(s.g, 9.7803253359, 1e-9);
  EXPECT_NEAR(s.rho, 1.225, 1e-4);
  EXPECT_DOUBLE_EQ(s.pressure, 101325.0);
  EXPECT_EQ(s.wind_e, Vec3::Zero());
  EXPECT_LT((s.mag_e - mag_at(cfg.origin)).norm(), 1e-12);

  const EnvSample up = env.sample(Vec3(0, 0, -1000), Vec3::Zero(), 0.0, 0.001);
  EXPECT_NEAR(up.temperature, 281.65, 1e-9);
}
