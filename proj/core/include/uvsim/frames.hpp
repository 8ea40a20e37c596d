#pragma once

// Reference-frame algebra and local geodesy.
//
// Earth frame is North-East-Down (NED); body frame is Head-Right-Down.
// Attitude is carried as a unit quaternion (body -> earth); the rotation
// matrix is only formed on demand.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>

namespace uvsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegToRad = kPi / 180.0;
inline constexpr double kRadToDeg = 180.0 / kPi;

/// WGS84 ellipsoid constants.
namespace wgs84 {
inline constexpr double kSemiMajor = 6378137.0;
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kEccentricitySq = kFlattening * (2.0 - kFlattening);
inline constexpr double kAngularRate = 7.292115e-5;
inline constexpr double kGM = 3.986004418e14;
}  // namespace wgs84

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

/// Unit-quaternion rotation taking body-frame vectors to the earth frame.
class Rotation {
 public:
  Rotation() = default;

  /// Normalizes q. Throws std::invalid_argument on a zero or non-finite q.
  explicit Rotation(const Eigen::Quaterniond& q);

  static Rotation identity() { return Rotation{}; }
  /// Z-Y-X (yaw, pitch, roll) Euler sequence, radians.
  static Rotation from_euler(double roll, double pitch, double yaw);
  static Rotation from_axis_angle(const Vec3& axis, double angle);
  /// Exponential map of a rotation vector (axis * angle).
  static Rotation from_rotation_vector(const Vec3& rv);

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Mat3 matrix() const { return q_.toRotationMatrix(); }

  /// (roll, pitch, yaw) in radians.
  Vec3 euler() const;
  /// Angle between body down axis and earth down axis, radians.
  double tilt() const;

  Rotation inverse() const;
  Rotation operator*(const Rotation& rhs) const;

  Vec3 apply(const Vec3& v) const { return q_ * v; }
  Vec3 apply_inverse(const Vec3& v) const { return q_.conjugate() * v; }

  void renormalize() { q_.normalize(); }

 private:
  Eigen::Quaterniond q_{1.0, 0.0, 0.0, 0.0};
};

/// Rotates v by r (body -> earth for an attitude).
inline Vec3 rotate(const Rotation& r, const Vec3& v) { return r.apply(v); }

/// Cross-product matrix: skew(w) * v == w.cross(v).
Mat3 skew(const Vec3& w);

struct GeoPosition {
  double latitude_deg = 0.0;
  double longitude_deg = 0.0;
  double altitude_m = 0.0;  // positive up

  bool valid() const;
};

struct CurvatureRadii {
  double meridian;       // north-south, R_M
  double prime_vertical; // east-west, R_N
};

CurvatureRadii wgs84_radii(double latitude_deg);

/// Flat-earth conversion of a local NED offset to LLA around origin.
/// Accurate for |p_ned| below roughly 50 km. Throws std::domain_error when
/// the origin is within 0.1 deg of a pole or invalid.
GeoPosition ned_to_lla(const GeoPosition& origin, const Vec3& p_ned);

/// Inverse of ned_to_lla with the same flat-earth radii.
Vec3 lla_to_ned(const GeoPosition& origin, const GeoPosition& p);

/// Wraps an angle to (-pi, pi].
double wrap_pi(double a);

}  // namespace uvsim
