#pragma once
#include <array>
#include <cmath>

#include "owg/errors.hpp"

namespace owg {

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// 4x4 rigid transform, row-major.
struct Mat4 {
  std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static Mat4 identity() { return {}; }

  static Mat4 from_rows(const std::array<double, 16>& rows) { return Mat4{rows}; }

  double at(int r, int c) const { return m[r * 4 + c]; }
  double& at(int r, int c) { return m[r * 4 + c]; }

  Vec3 transform_point(const Vec3& p) const {
    return {at(0, 0) * p.x + at(0, 1) * p.y + at(0, 2) * p.z + at(0, 3),
            at(1, 0) * p.x + at(1, 1) * p.y + at(1, 2) * p.z + at(1, 3),
            at(2, 0) * p.x + at(2, 1) * p.y + at(2, 2) * p.z + at(2, 3)};
  }

  Vec3 rotate_vector(const Vec3& v) const {
    return {at(0, 0) * v.x + at(0, 1) * v.y + at(0, 2) * v.z,
            at(1, 0) * v.x + at(1, 1) * v.y + at(1, 2) * v.z,
            at(2, 0) * v.x + at(2, 1) * v.y + at(2, 2) * v.z};
  }

  Mat4 operator*(const Mat4& o) const {
    Mat4 out;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        double s = 0;
        for (int k = 0; k < 4; ++k) s += at(r, k) * o.at(k, c);
        out.at(r, c) = s;
      }
    return out;
  }

  // Inverse of a rigid transform: R^T, -R^T t.
  Mat4 inverse_rigid() const {
    Mat4 out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out.at(r, c) = at(c, r);
    const Vec3 t{at(0, 3), at(1, 3), at(2, 3)};
    out.at(0, 3) = -(out.at(0, 0) * t.x + out.at(0, 1) * t.y + out.at(0, 2) * t.z);
    out.at(1, 3) = -(out.at(1, 0) * t.x + out.at(1, 1) * t.y + out.at(1, 2) * t.z);
    out.at(2, 3) = -(out.at(2, 0) * t.x + out.at(2, 1) * t.y + out.at(2, 2) * t.z);
    out.at(3, 0) = out.at(3, 1) = out.at(3, 2) = 0;
    out.at(3, 3) = 1;
    return out;
  }

  // max |R^T R - I| over the 3x3 rotation block.
  double rotation_orthonormality_error() const {
    double worst = 0;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += at(k, r) * at(k, c);
        worst = std::max(worst, std::abs(s - (r == c ? 1.0 : 0.0)));
      }
    return worst;
  }

  bool operator==(const Mat4&) const = default;
};

// Rotation about the z axis (in-plane yaw for a z-aligned camera).
inline Mat4 rotation_z(double yaw) {
  Mat4 r;
  const double c = std::cos(yaw), s = std::sin(yaw);
  r.at(0, 0) = c;
  r.at(0, 1) = -s;
  r.at(1, 0) = s;
  r.at(1, 1) = c;
  return r;
}

inline Mat4 translation(double x, double y, double z) {
  Mat4 t;
  t.at(0, 3) = x;
  t.at(1, 3) = y;
  t.at(2, 3) = z;
  return t;
}

struct CameraModel {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat4 world_from_camera = Mat4::identity();

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) raise(Err::FormatError, "camera focal lengths must be positive");
    if (world_from_camera.at(3, 0) != 0 || world_from_camera.at(3, 1) != 0 ||
        world_from_camera.at(3, 2) != 0 || world_from_camera.at(3, 3) != 1)
      raise(Err::FormatError, "extrinsics last row must be [0,0,0,1]");
    if (world_from_camera.rotation_orthonormality_error() >= 1e-9)
      raise(Err::FormatError, "extrinsics rotation block is not orthonormal");
  }

  bool operator==(const CameraModel&) const = default;
};

// Pixel + depth -> camera-frame point.
inline Vec3 deproject(double u, double v, double depth_m, const CameraModel& cam) {
  if (!(depth_m > 0) || !std::isfinite(depth_m))
    raise(Err::InvalidDepth, "depth must be finite and > 0");
  return {(u - cam.cx) * depth_m / cam.fx, (v - cam.cy) * depth_m / cam.fy, depth_m};
}

// Camera-frame point -> pixel. Requires p.z > 0.
inline std::pair<double, double> project(const Vec3& p, const CameraModel& cam) {
  if (!(p.z > 0)) raise(Err::InvalidDepth, "cannot project a point with non-positive z");
  return {cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy};
}

}  // namespace owg
