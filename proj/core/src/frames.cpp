#include "uvsim/frames.hpp"

#include <algorithm>
#include <cmath>

namespace uvsim {

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(q) {
  const double n = q_.norm();
  if (!std::isfinite(n) || n < 1e-12) {
    throw std::invalid_argument("Rotation: quaternion must be finite and non-zero");
  }
  q_.coeffs() /= n;
}

Rotation Rotation::from_euler(double roll, double pitch, double yaw) {
  const Eigen::Quaterniond q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                               Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                               Eigen::AngleAxisd(roll, Vec3::UnitX());
  return Rotation(q);
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle) {
  return Rotation(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())));
}

Rotation Rotation::from_rotation_vector(const Vec3& rv) {
  const double angle = rv.norm();
  if (angle < 1e-300) {
    return Rotation{};
  }
  return from_axis_angle(rv / angle, angle);
}

Vec3 Rotation::euler() const {
  const Mat3 r = matrix();
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {roll, pitch, yaw};
}

double Rotation::tilt() const {
  // Earth-frame down component of the body z axis.
  const double c = matrix()(2, 2);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Rotation Rotation::inverse() const {
  Rotation r;
  r.q_ = q_.conjugate();
  return r;
}

Rotation Rotation::operator*(const Rotation& rhs) const {
  Rotation r;
  r.q_ = q_ * rhs.q_;
  return r;
}

Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

bool GeoPosition::valid() const {
  return std::isfinite(latitude_deg) && std::isfinite(longitude_deg) && std::isfinite(altitude_m) &&
         latitude_deg >= -90.0 && latitude_deg <= 90.0 && longitude_deg > -180.0 &&
         longitude_deg <= 180.0;
}

CurvatureRadii wgs84_radii(double latitude_deg) {
  const double s = std::sin(latitude_deg * kDegToRad);
  const double w2 = 1.0 - wgs84::kEccentricitySq * s * s;
  const double w = std::sqrt(w2);
  return {wgs84::kSemiMajor * (1.0 - wgs84::kEccentricitySq) / (w2 * w), wgs84::kSemiMajor / w};
}

double wrap_pi(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

namespace {

double wrap_longitude(double lon) {
  lon = std::remainder(lon, 360.0);
  if (lon <= -180.0) lon += 360.0;
  return lon;
}

void check_origin(const GeoPosition& origin) {
  if (!origin.valid()) {
    throw std::domain_error("geodesy: invalid origin");
  }
  if (std::abs(origin.latitude_deg) > 89.9) {
    throw std::domain_error("geodesy: origin within 0.1 deg of a pole");
  }
}

}  // namespace

GeoPosition ned_to_lla(const GeoPosition& origin, const Vec3& p_ned) {
  check_origin(origin);
  const auto radii = wgs84_radii(origin.latitude_deg);
  const double h0 = origin.altitude_m;
  const double dlat = p_ned.x() / (radii.meridian + h0);
  const double dlon = p_ned.y() / ((radii.prime_vertical + h0) * std::cos(origin.latitude_deg * kDegToRad));
  GeoPosition out;
  out.latitude_deg = origin.latitude_deg + dlat * kRadToDeg;
  out.longitude_deg = wrap_longitude(origin.longitude_deg + dlon * kRadToDeg);
  out.altitude_m = h0 - p_ned.z();
  return out;
}

Vec3 lla_to_ned(const GeoPosition& origin, const GeoPosition& p) {
  check_origin(origin);
  const auto radii = wgs84_radii(origin.latitude_deg);
  const double h0 = origin.altitude_m;
  const double dlat = (p.latitude_deg - origin.latitude_deg) * kDegToRad;
  const double dlon = wrap_longitude(p.longitude_deg - origin.longitude_deg) * kDegToRad;
  return {dlat * (radii.meridian + h0),
          dlon * (radii.prime_vertical + h0) * std::cos(origin.latitude_deg * kDegToRad),
          h0 - p.altitude_m};
}

}  // namespace uvsim
