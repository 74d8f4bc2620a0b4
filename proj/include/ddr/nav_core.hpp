#pragma once

// Quaternion kinematics, strapdown mechanization and frame plumbing.
//
// Frame conventions used throughout the library:
//   * Quaternions are scalar-first Hamilton products and rotate body -> nav.
//   * The 3D navigation frame is North-West-Up. Gravity is g_n = (0, 0, -g), so
//     a level sensor at rest measures a specific force of (0, 0, +g).
//   * All 2D outputs (trajectories, ground truth) use the horizontal North-East
//     plane, x = North and y = East, with headings measured from North towards
//     East. ne_from_nav() and heading_from_yaw() map between the two.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "ddr/error.hpp"

namespace ddr {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kStandardGravity = 9.80665;

struct ImuSample {
  double t = 0.0;         // s
  Vec3 f_b = Vec3::Zero();  // specific force, m/s^2
  Vec3 w_b = Vec3::Zero();  // angular rate, rad/s
};

struct Quaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  static Quaternion identity() { return {}; }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quaternion normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Quaternion conjugate() const { return {w, -x, -y, -z}; }

  Quaternion operator+(const Quaternion& o) const { return {w + o.w, x + o.x, y + o.y, z + o.z}; }
  Quaternion operator-(const Quaternion& o) const { return {w - o.w, x - o.x, y - o.y, z - o.z}; }
  Quaternion operator*(double s) const { return {w * s, x * s, y * s, z * s}; }
};

/// Same rotation up to the q / -q double cover.
inline bool same_rotation(const Quaternion& a, const Quaternion& b, double tol) {
  const double dot = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  return 1.0 - std::abs(dot) <= tol;
}

inline Quaternion pure_quaternion(const Vec3& v) { return {0.0, v.x(), v.y(), v.z()}; }

/// Hamilton product a (x) b.
inline Quaternion quat_mul(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

/// Quaternion of a rotation vector (axis * angle).
inline Quaternion quat_from_rotation_vector(const Vec3& rv) {
  const double angle = rv.norm();
  if (angle < 1e-12) {
    // second-order series keeps the result unit-norm to machine precision
    return Quaternion{1.0 - angle * angle / 8.0, rv.x() / 2, rv.y() / 2, rv.z() / 2}.normalized();
  }
  const double s = std::sin(angle / 2) / angle;
  return {std::cos(angle / 2), rv.x() * s, rv.y() * s, rv.z() * s};
}

/// ZYX Euler angles (roll about x, then pitch about y, then yaw about z).
inline Quaternion quat_from_euler(double roll, double pitch, double yaw) {
  const Quaternion qx{std::cos(roll / 2), std::sin(roll / 2), 0, 0};
  const Quaternion qy{std::cos(pitch / 2), 0, std::sin(pitch / 2), 0};
  const Quaternion qz{std::cos(yaw / 2), 0, 0, std::sin(yaw / 2)};
  return quat_mul(qz, quat_mul(qy, qx));
}

struct DcmDiagnostics {
  bool renormalized = false;
};

/// Body -> nav rotation matrix. Inputs off the unit sphere by more than 1e-6
/// are normalized first and reported through `diag`.
inline Mat3 quat_to_dcm(Quaternion q, DcmDiagnostics* diag = nullptr) {
  const double n = q.norm();
  if (std::abs(n - 1.0) > 1e-6) {
    q = q.normalized();
    if (diag) diag->renormalized = true;
  }
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

inline Vec3 rotate(const Quaternion& q, const Vec3& v) { return quat_to_dcm(q) * v; }

struct YawEstimate {
  double yaw = 0.0;         // rad, (-pi, pi]
  bool degenerate = false;  // |pitch| > 89 deg
};

inline double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::remainder(a, 2 * pi);
  if (a <= -pi) a += 2 * pi;
  return a;
}

/// ZYX yaw of the body -> nav rotation, atan2(R10, R00), with a flag raised
/// near gimbal lock.
inline YawEstimate yaw_from_quat_checked(const Quaternion& q) {
  const Mat3 r = quat_to_dcm(q);
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  YawEstimate out;
  out.yaw = wrap_angle(std::atan2(r(1, 0), r(0, 0)));
  out.degenerate = std::abs(pitch) > 89.0 * std::numbers::pi / 180.0;
  return out;
}

inline double yaw_from_quat(const Quaternion& q) { return yaw_from_quat_checked(q).yaw; }

struct EulerAngles {
  double roll = 0, pitch = 0, yaw = 0;
};

inline EulerAngles euler_from_quat(const Quaternion& q) {
  const Mat3 r = quat_to_dcm(q);
  return {std::atan2(r(2, 1), r(2, 2)), std::asin(std::clamp(-r(2, 0), -1.0, 1.0)),
          std::atan2(r(1, 0), r(0, 0))};
}

// North-West-Up navigation frame -> North-East plane.
inline Vec2 ne_from_nav(const Vec3& p_nav) { return {p_nav.x(), -p_nav.y()}; }
inline double heading_from_yaw(double yaw_nwu) { return wrap_angle(-yaw_nwu); }

// ---------------------------------------------------------------------------
// Stationary calibration

struct CalibrationResult {
  Vec3 gyro_bias = Vec3::Zero();
  Quaternion initial_q;
  double gravity_mag = kStandardGravity;
  std::size_t n_samples = 0;
};

inline constexpr std::size_t kDefaultCalibrationSamples = 250;
inline constexpr std::size_t kMinCalibrationSamples = 50;
inline constexpr double kMaxStationaryForceStd = 0.5;  // m/s^2

/// Zero-order calibration over the first `n` samples: gyro bias is the mean
/// rate, roll/pitch level the mean specific force, yaw is zero.
inline CalibrationResult calibrate_stationary(std::span<const ImuSample> stream, std::size_t n) {
  if (n < kMinCalibrationSamples) {
    throw Error(ErrorCode::InvalidArgument,
                "calibration needs at least " + std::to_string(kMinCalibrationSamples) + " samples");
  }
  if (stream.size() < n) {
    throw Error(ErrorCode::StreamTooShort, "stream has " + std::to_string(stream.size()) +
                                               " samples, calibration needs " + std::to_string(n));
  }
  Vec3 f_mean = Vec3::Zero();
  Vec3 w_mean = Vec3::Zero();
  double mag_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    f_mean += stream[i].f_b;
    w_mean += stream[i].w_b;
    mag_mean += stream[i].f_b.norm();
  }
  const double inv = 1.0 / static_cast<double>(n);
  f_mean *= inv;
  w_mean *= inv;
  mag_mean *= inv;

  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = stream[i].f_b.norm() - mag_mean;
    var += d * d;
  }
  const double sd = std::sqrt(var * inv);
  if (sd > kMaxStationaryForceStd) {
    throw Error(ErrorCode::NotStationary,
                "specific-force magnitude std " + std::to_string(sd) + " m/s^2 over calibration window");
  }

  const double roll = std::atan2(f_mean.y(), f_mean.z());
  const double pitch = std::atan2(-f_mean.x(), std::hypot(f_mean.y(), f_mean.z()));

  CalibrationResult out;
  out.gyro_bias = w_mean;
  out.initial_q = quat_from_euler(roll, pitch, 0.0);
  out.gravity_mag = mag_mean;
  out.n_samples = n;
  return out;
}

inline std::vector<ImuSample> remove_gyro_bias(std::span<const ImuSample> stream, const Vec3& bias) {
  std::vector<ImuSample> out(stream.begin(), stream.end());
  for (auto& s : out) s.w_b -= bias;
  return out;
}

// ---------------------------------------------------------------------------
// Strapdown mechanization (Earth rate and transport rate neglected)

struct NavState {
  Vec3 p_n = Vec3::Zero();
  Vec3 v_n = Vec3::Zero();
  Quaternion q;
};

inline Vec3 gravity_nav(double g = kStandardGravity) { return {0.0, 0.0, -g}; }

/// One integration step over `dt` using the single sample (zero-order hold on
/// the sensor outputs). The attitude follows T' = T * skew(w) in closed form
/// for the held rate; velocity uses the mid-interval attitude and position
/// the trapezoid of old and new velocity.
inline NavState ins_mechanize(const NavState& state, const ImuSample& sample, double dt,
                              double g = kStandardGravity) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  const Vec3 dtheta = sample.w_b * dt;
  const Quaternion q_mid = quat_mul(state.q, quat_from_rotation_vector(dtheta / 2)).normalized();
  const Quaternion q_new = quat_mul(state.q, quat_from_rotation_vector(dtheta)).normalized();

  NavState out;
  out.q = q_new;
  out.v_n = state.v_n + (quat_to_dcm(q_mid) * sample.f_b + gravity_nav(g)) * dt;
  out.p_n = state.p_n + 0.5 * (state.v_n + out.v_n) * dt;

  if (!out.p_n.allFinite() || !out.v_n.allFinite() || !std::isfinite(out.q.norm())) {
    throw Error(ErrorCode::IntegrationDiverged, "non-finite state at t=" + std::to_string(sample.t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geodetic -> local tangent plane

struct GeodeticPoint {
  double lat_deg = 0, lon_deg = 0, alt_m = 0;
};

namespace wgs84 {
inline constexpr double kSemiMajor = 6378137.0;
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kEccSq = kFlattening * (2.0 - kFlattening);

inline double meridian_radius(double lat_rad) {
  const double s = std::sin(lat_rad);
  const double d = 1.0 - kEccSq * s * s;
  return kSemiMajor * (1.0 - kEccSq) / (d * std::sqrt(d));
}
inline double normal_radius(double lat_rad) {
  const double s = std::sin(lat_rad);
  return kSemiMajor / std::sqrt(1.0 - kEccSq * s * s);
}
}  // namespace wgs84

/// Equirectangular projection about `origin`, (North, East, Down) in metres.
inline Vec3 lla_to_local(const GeodeticPoint& point, const GeodeticPoint& origin) {
  if (std::abs(point.lat_deg) > 90.0 || std::abs(point.lon_deg) > 180.0 ||
      std::abs(origin.lat_deg) > 90.0 || std::abs(origin.lon_deg) > 180.0) {
    throw Error(ErrorCode::InvalidArgument, "latitude/longitude out of range");
  }
  constexpr double deg = std::numbers::pi / 180.0;
  const double lat0 = origin.lat_deg * deg;
  const double rn = wgs84::meridian_radius(lat0) + origin.alt_m;
  const double re = (wgs84::normal_radius(lat0) + origin.alt_m) * std::cos(lat0);
  double dlon = point.lon_deg - origin.lon_deg;
  if (dlon > 180.0) dlon -= 360.0;
  if (dlon < -180.0) dlon += 360.0;
  return {(point.lat_deg - origin.lat_deg) * deg * rn, dlon * deg * re, -(point.alt_m - origin.alt_m)};
}

inline GeodeticPoint local_to_lla(const Vec3& ned, const GeodeticPoint& origin) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double lat0 = origin.lat_deg * deg;
  const double rn = wgs84::meridian_radius(lat0) + origin.alt_m;
  const double re = (wgs84::normal_radius(lat0) + origin.alt_m) * std::cos(lat0);
  return {origin.lat_deg + ned.x() / rn / deg, origin.lon_deg + ned.y() / re / deg,
          origin.alt_m - ned.z()};
}

}  // namespace ddr
