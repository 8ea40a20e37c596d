#include "uvsim/environment.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uvsim {

namespace {
constexpr double kGravityEquator = 9.7803253359;
constexpr double kSomiglianaK = 0.00193185265241;
}  // namespace

double gravity_at(const GeoPosition& p) {
  const double s = std::sin(p.latitude_deg * kDegToRad);
  const double s2 = s * s;
  const double g0 = kGravityEquator * (1.0 + kSomiglianaK * s2) /
                    std::sqrt(1.0 - wgs84::kEccentricitySq * s2);
  constexpr double a = wgs84::kSemiMajor;
  constexpr double f = wgs84::kFlattening;
  const double b = a * (1.0 - f);
  const double m = wgs84::kAngularRate * wgs84::kAngularRate * a * a * b / wgs84::kGM;
  const double h = p.altitude_m;
  return g0 * (1.0 - 2.0 / a * (1.0 + f + m - 2.0 * f * s2) * h + 3.0 / (a * a) * h * h);
}

Atmosphere isa_at(double altitude_m) {
  if (!(altitude_m >= isa::kMinAltitude && altitude_m <= isa::kMaxAltitude)) {
    throw std::out_of_range("isa_at: altitude outside the troposphere model range");
  }
  const double T = isa::kT0 - isa::kLapse * altitude_m;
  const double exponent = isa::kG0 / (isa::kRAir * isa::kLapse);
  const double p = isa::kP0 * std::pow(T / isa::kT0, exponent);
  return {p / (isa::kRAir * T), T, p};
}

double isa_pressure_altitude(double pressure_pa) {
  const double exponent = isa::kRAir * isa::kLapse / isa::kG0;
  return (isa::kT0 / isa::kLapse) * (1.0 - std::pow(pressure_pa / isa::kP0, exponent));
}

Vec3 mag_at(const GeoPosition& p, const DipoleModel& model) {
  const double lat = p.latitude_deg * kDegToRad;
  const double lon = p.longitude_deg * kDegToRad;
  const double clat = std::cos(lat), slat = std::sin(lat);
  const double clon = std::cos(lon), slon = std::sin(lon);
  // Geocentric unit vectors (spherical earth for the dipole).
  const Vec3 r_hat(clat * clon, clat * slon, slat);
  const Vec3 north(-slat * clon, -slat * slon, clat);
  const Vec3 east(-slon, clon, 0.0);
  const Vec3 m(model.g11, model.h11, model.g10);  // nT
  const double ratio = wgs84::kSemiMajor / (wgs84::kSemiMajor + p.altitude_m);
  const Vec3 b = ratio * ratio * ratio * (3.0 * m.dot(r_hat) * r_hat - m);
  return Vec3(b.dot(north), b.dot(east), -b.dot(r_hat)) * 1e-3;  // nT -> uT
}

void WindConfig::validate() const {
  if (!constant_e.allFinite() || !gust_amplitude_e.allFinite()) {
    throw std::invalid_argument("WindConfig: non-finite wind vector");
  }
  if ((turbulence_sigma.array() < 0.0).any() || !turbulence_sigma.allFinite()) {
    throw std::invalid_argument("WindConfig: turbulence sigma must be >= 0");
  }
  if (!(turbulence_length.array() > 0.0).all() || !turbulence_length.allFinite()) {
    throw std::invalid_argument("WindConfig: turbulence scale lengths must be > 0");
  }
  if (!(gust_duration >= 0.0)) {
    throw std::invalid_argument("WindConfig: gust duration must be >= 0");
  }
  if (!(shear_ref_height > 0.0) || !std::isfinite(shear_exponent) || !std::isfinite(shear_ref_speed)) {
    throw std::invalid_argument("WindConfig: invalid shear profile");
  }
}

DrydenTurbulence::DrydenTurbulence(const Vec3& sigma, const Vec3& length, std::uint64_t seed)
    : sigma_(sigma), length_(length), enabled_((sigma.array() > 0.0).any()), rng_(seed) {}

namespace {

// Van Loan: exact discretization of x' = A x + B w, E[w w'] = delta.
void discretize(const Eigen::Matrix2d& A, const Eigen::Vector2d& B, double dt, Eigen::Matrix2d& phi,
                Eigen::Matrix2d& chol) {
  Eigen::Matrix4d M = Eigen::Matrix4d::Zero();
  M.topLeftCorner<2, 2>() = -A;
  M.topRightCorner<2, 2>() = B * B.transpose();
  M.bottomRightCorner<2, 2>() = A.transpose();
  const Eigen::Matrix4d E = (M * dt).exp();
  phi = E.bottomRightCorner<2, 2>().transpose();
  Eigen::Matrix2d Q = phi * E.topRightCorner<2, 2>();
  Q = 0.5 * (Q + Q.transpose());
  // Q is PSD but close to rank one when dt << T; factor by hand.
  const double l00 = std::sqrt(std::max(Q(0, 0), 0.0));
  const double l10 = l00 > 0.0 ? Q(1, 0) / l00 : 0.0;
  const double l11 = std::sqrt(std::max(Q(1, 1) - l10 * l10, 0.0));
  chol << l00, 0.0, l10, l11;
}

}  // namespace

void DrydenTurbulence::rediscretize(double airspeed, double dt) {
  disc_.airspeed = airspeed;
  disc_.dt = dt;
  const double Tu = length_.x() / airspeed;
  disc_.phi_u = std::exp(-dt / Tu);
  disc_.gain_u = sigma_.x() * std::sqrt(1.0 - disc_.phi_u * disc_.phi_u);

  // Second-order lateral/vertical forms, controllable canonical realization
  // of 1 / (T s + 1)^2; the output map carries the numerator.
  auto second = [&](double L, Eigen::Matrix2d& phi, Eigen::Matrix2d& chol) {
    const double T = L / airspeed;
    Eigen::Matrix2d A;
    A << 0.0, 1.0, -1.0 / (T * T), -2.0 / T;
    discretize(A, Eigen::Vector2d(0.0, 1.0), dt, phi, chol);
  };
  second(length_.y(), disc_.phi_v, disc_.chol_v);
  second(length_.z(), disc_.phi_w, disc_.chol_w);
}

Vec3 DrydenTurbulence::step(double airspeed, double dt) {
  if (!enabled_) {
    return Vec3::Zero();
  }
  const double V = std::max(airspeed, kTurbulenceMinAirspeed);
  if (V != disc_.airspeed || dt != disc_.dt) {
    rediscretize(V, dt);
  }
  const double eta[5] = {normal_(rng_), normal_(rng_), normal_(rng_), normal_(rng_), normal_(rng_)};
  u_ = disc_.phi_u * u_ + disc_.gain_u * eta[0];
  v_ = disc_.phi_v * v_ + disc_.chol_v * Eigen::Vector2d(eta[1], eta[2]);
  w_ = disc_.phi_w * w_ + disc_.chol_w * Eigen::Vector2d(eta[3], eta[4]);

  // H(s) = sigma * sqrt(T) * (1 + sqrt(3) T s) / (T s + 1)^2 has unit-intensity
  // output variance sigma^2.
  auto output = [&](const Eigen::Vector2d& x, double sigma, double L) {
    const double T = L / V;
    return sigma * std::sqrt(T) * (x(0) / (T * T) + std::sqrt(3.0) * x(1) / T);
  };
  return {u_, output(v_, sigma_.y(), length_.y()), output(w_, sigma_.z(), length_.z())};
}

WindModel::WindModel(const WindConfig& cfg)
    : cfg_(cfg), turbulence_(cfg.turbulence_sigma, cfg.turbulence_length, cfg.seed) {
  cfg_.validate();
}

void WindModel::set_deterministic(const WindConfig& cfg) {
  cfg.validate();
  const Vec3 sigma = cfg_.turbulence_sigma;
  const Vec3 length = cfg_.turbulence_length;
  const auto seed = cfg_.seed;
  cfg_ = cfg;
  cfg_.turbulence_sigma = sigma;
  cfg_.turbulence_length = length;
  cfg_.seed = seed;
}

Vec3 WindModel::shear(const Vec3& p_e) const {
  if (cfg_.shear_ref_speed == 0.0) {
    return Vec3::Zero();
  }
  const double h = std::max(-p_e.z(), 0.0);
  const double speed = cfg_.shear_ref_speed * std::pow(h / cfg_.shear_ref_height, cfg_.shear_exponent);
  const double hdg = cfg_.shear_heading_deg * kDegToRad;
  return {speed * std::cos(hdg), speed * std::sin(hdg), 0.0};
}

Vec3 WindModel::gust(double t) const {
  const double tau = t - cfg_.gust_start;
  if (cfg_.gust_duration <= 0.0 || tau < 0.0 || tau > cfg_.gust_duration) {
    return Vec3::Zero();
  }
  return 0.5 * (1.0 - std::cos(2.0 * kPi * tau / cfg_.gust_duration)) * cfg_.gust_amplitude_e;
}

Vec3 WindModel::step(const Vec3& p_e, double airspeed, double t, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("wind_at: dt must be positive");
  }
  return turbulence_.step(airspeed, dt) + cfg_.constant_e + shear(p_e) + gust(t);
}

Environment::Environment(const EnvironmentConfig& cfg) : cfg_(cfg), wind_(cfg.wind) {
  if (!cfg_.origin.valid()) {
    throw std::invalid_argument("Environment: invalid origin");
  }
}

EnvSample Environment::sample(const Vec3& p_e, const Vec3& v_e, double t, double dt) {
  const GeoPosition geo = ned_to_lla(cfg_.origin, p_e);
  const Atmosphere atm = isa_at(geo.altitude_m);
  EnvSample s;
  s.g = gravity_at(geo);
  s.rho = atm.rho;
  s.temperature = atm.temperature;
  s.pressure = atm.pressure;
  s.mag_e = mag_at(geo, cfg_.dipole);
  const Vec3 mean_wind = wind_.config().constant_e + wind_.shear(p_e);
  s.wind_e = wind_.step(p_e, (v_e - mean_wind).norm(), t, dt);
  return s;
}

}  // namespace uvsim
