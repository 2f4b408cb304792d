#pragma once

#include "personerf/common.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <random>

namespace personerf {

/// Rigid motion x -> rotation * x + translation.
struct RigidTransform {
  Mat3d rotation = Mat3d::Identity();
  Vec3d translation = Vec3d::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3d& t) { return {Mat3d::Identity(), t}; }

  Vec3d apply(const Vec3d& x) const { return rotation * x + translation; }

  RigidTransform inverse() const {
    const Mat3d rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  /// (*this) after `rhs`: x -> this(rhs(x)).
  RigidTransform compose(const RigidTransform& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }

  bool is_approx(const RigidTransform& o, double tol) const {
    return (rotation - o.rotation).cwiseAbs().maxCoeff() <= tol &&
           (translation - o.translation).cwiseAbs().maxCoeff() <= tol;
  }
};

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return a.compose(b);
}

struct Aabb {
  Vec3d min = Vec3d::Zero();
  Vec3d max = Vec3d::Zero();

  Vec3d center() const { return 0.5 * (min + max); }
  Vec3d extent() const { return max - min; }
  bool contains(const Vec3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Aabb inflated(double factor) const {
    const Vec3d c = center();
    const Vec3d half = 0.5 * factor * extent();
    return {c - half, c + half};
  }
  void extend(const Vec3d& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  static Aabb empty() {
    const double inf = std::numeric_limits<double>::infinity();
    return {Vec3d::Constant(inf), Vec3d::Constant(-inf)};
  }
};

/// Pinhole camera. Extrinsics map world to camera coordinates; the camera
/// looks along +Z with +X right and +Y down in the image.
struct Camera {
  Mat3d intrinsics = Mat3d::Identity();
  RigidTransform extrinsics;
  int width = 1;
  int height = 1;

  Vec3d center() const { return extrinsics.inverse().translation; }

  void validate() const {
    if (!(intrinsics(0, 0) > 0.0) || !(intrinsics(1, 1) > 0.0))
      throw Error("camera focal lengths must be positive");
    if (width < 1 || height < 1) throw Error("camera size must be at least 1x1");
  }

  /// Pixel coordinates (continuous) of a world point; nullopt behind the camera.
  std::optional<Vec2d> project(const Vec3d& world) const {
    const Vec3d c = extrinsics.apply(world);
    if (c.z() <= 1e-9) return std::nullopt;
    const Vec3d h = intrinsics * (c / c.z());
    return Vec2d(h.x(), h.y());
  }
};

struct Ray {
  Vec3d origin = Vec3d::Zero();
  Vec3d direction = Vec3d::UnitZ();
  double t_near = 0.0;
  double t_far = 1.0;

  Vec3d at(double t) const { return origin + t * direction; }
};

/// Slab test; returns the (entry, exit) parameters clipped to t >= 0.
inline std::optional<std::pair<double, double>> intersect_box(const Vec3d& origin,
                                                              const Vec3d& direction,
                                                              const Aabb& box) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double d = direction[axis];
    if (std::abs(d) < 1e-300) {
      if (origin[axis] < box.min[axis] || origin[axis] > box.max[axis]) return std::nullopt;
      continue;
    }
    double ta = (box.min[axis] - origin[axis]) / d;
    double tb = (box.max[axis] - origin[axis]) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 < t1)) return std::nullopt;
  return std::make_pair(t0, t1);
}

/// Ray through the center of pixel (x, y), bounded by `bounds`.
/// Returns nullopt when the ray misses the box.
inline std::optional<Ray> pixel_to_ray(const Camera& camera, int x, int y, const Aabb& bounds) {
  const Vec3d pixel(x + 0.5, y + 0.5, 1.0);
  const Vec3d dir_cam = camera.intrinsics.inverse() * pixel;
  const Mat3d cam_to_world = camera.extrinsics.rotation.transpose();
  Ray ray;
  ray.origin = camera.center();
  ray.direction = (cam_to_world * dir_cam).normalized();
  const auto hit = intersect_box(ray.origin, ray.direction, bounds);
  if (!hit) return std::nullopt;
  ray.t_near = hit->first;
  ray.t_far = hit->second;
  return ray;
}

/// Rotation by `angle` radians about the unit axis `axis`.
inline Mat3d axis_rotation(const Vec3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

/// Rotates the camera's world pose by `phi` about the line through
/// `body_center` along `up`. Intrinsics are left untouched.
inline Camera orbit_camera(const Camera& camera, double phi, const Vec3d& body_center,
                           const Vec3d& up) {
  const RigidTransform cam_to_world = camera.extrinsics.inverse();
  const Mat3d q = axis_rotation(up, phi);
  RigidTransform orbit{q, body_center - q * body_center};
  Camera out = camera;
  out.extrinsics = (orbit * cam_to_world).inverse();
  return out;
}

/// Sinusoidal encoding: for each band k and coordinate d the pair
/// (sin(2^k pi x_d), cos(2^k pi x_d)) at index 6k + 2d.
template <typename Scalar>
void positional_encoding(const Vec3<Scalar>& x, int bands, Scalar* out) {
  // one sin/cos per axis, higher bands by the double-angle recurrence in double
  for (int d = 0; d < 3; ++d) {
    const double arg = std::numbers::pi * static_cast<double>(x[d]);
    double s = std::sin(arg), c = std::cos(arg);
    for (int k = 0; k < bands; ++k) {
      out[6 * k + 2 * d] = static_cast<Scalar>(s);
      out[6 * k + 2 * d + 1] = static_cast<Scalar>(c);
      const double s2 = 2.0 * s * c;
      c = (c - s) * (c + s);
      s = s2;
    }
  }
}

template <typename Scalar>
VecX<Scalar> positional_encoding(const Vec3<Scalar>& x, int bands) {
  if (bands < 1) throw Error("positional encoding needs at least one band");
  VecX<Scalar> out(6 * bands);
  positional_encoding<Scalar>(x, bands, out.data());
  return out;
}

/// Chain rule through the encoding given its forward values `enc`:
/// d sin(f x)/dx = f cos(f x) and d cos(f x)/dx = -f sin(f x).
template <typename Scalar>
Vec3<Scalar> positional_encoding_backward_cached(const Scalar* enc, int bands, const Scalar* grad_enc) {
  Vec3<Scalar> g = Vec3<Scalar>::Zero();
  Scalar freq = std::numbers::pi_v<Scalar>;
  for (int k = 0; k < bands; ++k) {
    for (int d = 0; d < 3; ++d) {
      const int i = 6 * k + 2 * d;
      g[d] += freq * (grad_enc[i] * enc[i + 1] - grad_enc[i + 1] * enc[i]);
    }
    freq *= Scalar(2);
  }
  return g;
}

/// Accumulates d(loss)/dx given d(loss)/d(encoding).
template <typename Scalar>
Vec3<Scalar> positional_encoding_backward(const Vec3<Scalar>& x, int bands, const Scalar* grad_enc) {
  const VecX<Scalar> enc = positional_encoding<Scalar>(x, bands);
  return positional_encoding_backward_cached<Scalar>(enc.data(), bands, grad_enc);
}

/// Uniform double in [0, 1) from the top 53 bits; stable across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace personerf
