#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <utility>

namespace dofield {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Rotation by `angle` (right-hand rule) about a unit axis. Axes that are
// exactly +/- a coordinate axis take the closed-form branch so that e.g.
// rotation about -z by -phi produces the same bits as rotation about +z
// by +phi; the silhouette base-rotation equivalence is tested bit-exactly
// and relies on this.
inline Mat3 rotation_about_axis(const Vec3& axis, double angle) {
  Mat3 r;
  const double x = axis.x(), y = axis.y(), z = axis.z();
  if (y == 0.0 && z == 0.0 && (x == 1.0 || x == -1.0)) {
    const double a = x * angle, c = std::cos(a), s = std::sin(a);
    r << 1, 0, 0, 0, c, -s, 0, s, c;
    return r;
  }
  if (x == 0.0 && z == 0.0 && (y == 1.0 || y == -1.0)) {
    const double a = y * angle, c = std::cos(a), s = std::sin(a);
    r << c, 0, s, 0, 1, 0, -s, 0, c;
    return r;
  }
  if (x == 0.0 && y == 0.0 && (z == 1.0 || z == -1.0)) {
    const double a = z * angle, c = std::cos(a), s = std::sin(a);
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return r;
  }
  // Rodrigues.
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  r << t * x * x + c, t * x * y - s * z, t * x * z + s * y,
       t * x * y + s * z, t * y * y + c, t * y * z - s * x,
       t * x * z - s * y, t * y * z + s * x, t * z * z + c;
  return r;
}

// Rigid transform rotating about the line through `point` with direction
// `axis` (unit), as a 4x4 homogeneous matrix.
inline Mat4 rotation_about_line(const Vec3& axis, const Vec3& point, double angle) {
  const Mat3 r = rotation_about_axis(axis, angle);
  Mat4 t = Mat4::Identity();
  t.topLeftCorner<3, 3>() = r;
  if (point != Vec3::Zero()) t.topRightCorner<3, 1>() = point - r * point;
  return t;
}

// Camera-to-world pose looking from `eye` toward `target`. Camera frame
// convention: +x right, +y down, +z forward (optical axis).
inline Mat4 look_at_pose(const Vec3& eye, const Vec3& target, const Vec3& up_hint = Vec3(0, 0, 1)) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up_hint);
  if (right.norm() < 1e-12) right = forward.cross(Vec3(0, 1, 0));
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat4 pose = Mat4::Identity();
  pose.block<3, 1>(0, 0) = right;
  pose.block<3, 1>(0, 1) = down;
  pose.block<3, 1>(0, 2) = forward;
  pose.block<3, 1>(0, 3) = eye;
  return pose;
}

// Parametric interval over which the ray origin + t*dir is inside the
// axis-aligned box, clipped to [t0, t1]. Empty optional if it misses.
inline std::optional<std::pair<double, double>> intersect_ray_aabb(
    const Vec3& origin, const Vec3& dir, const Vec3& lo, const Vec3& hi, double t0, double t1) {
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / dir[a];
    double ta = (lo[a] - origin[a]) * inv;
    double tb = (hi[a] - origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

}  // namespace dofield
