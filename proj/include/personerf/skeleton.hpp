#pragma once

#include "personerf/common.hpp"
#include "personerf/geometry.hpp"
#include "personerf/mlp.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace personerf {

/// Bone hierarchy in the canonical (rest) T-pose. Parents precede children;
/// bone 0 is the root and has parent -1.
struct SkeletonRig {
  std::vector<int> parent;
  std::vector<Vec3d> rest_head;
  std::vector<Vec3d> rest_tail;
  std::vector<double> bone_radius;
  std::vector<std::string> names;

  int bone_count() const { return static_cast<int>(parent.size()); }

  void validate() const {
    const auto k = parent.size();
    if (k == 0) throw ShapeError("rig has no bones");
    if (rest_head.size() != k || rest_tail.size() != k || bone_radius.size() != k)
      throw ShapeError("rig arrays have inconsistent lengths");
    if (parent[0] != -1) throw ShapeError("bone 0 must be the root");
    for (std::size_t i = 1; i < k; ++i)
      if (parent[i] < 0 || parent[i] >= static_cast<int>(i))
        throw ShapeError("bone " + std::to_string(i) + " must have a parent with a smaller index");
    for (std::size_t i = 0; i < k; ++i) {
      if ((rest_tail[i] - rest_head[i]).norm() <= 0.0)
        throw ShapeError("bone " + std::to_string(i) + " has zero length");
      if (!(bone_radius[i] > 0.0)) throw ShapeError("bone " + std::to_string(i) + " has non-positive radius");
    }
  }

  /// Bounds of the rest capsules.
  Aabb rest_bounds() const {
    Aabb box = Aabb::empty();
    for (int i = 0; i < bone_count(); ++i) {
      const Vec3d r = Vec3d::Constant(bone_radius[i]);
      box.extend(rest_head[i] - r);
      box.extend(rest_head[i] + r);
      box.extend(rest_tail[i] - r);
      box.extend(rest_tail[i] + r);
    }
    return box;
  }
};

/// Root transform plus per-bone local axis-angle rotations about each bone head.
struct BodyPose {
  RigidTransform root;
  std::vector<Vec3d> joint_angles;
  std::vector<Vec3d> joints;  // posed bone heads, derived from the angles

  static BodyPose canonical(const SkeletonRig& rig) {
    BodyPose p;
    p.joint_angles.assign(rig.bone_count(), Vec3d::Zero());
    p.joints = rig.rest_head;
    return p;
  }
};

/// Wraps an axis-angle vector so its magnitude is at most pi.
inline Vec3d canonicalize_axis_angle(const Vec3d& w) {
  const double angle = w.norm();
  if (angle <= std::numbers::pi) return w;
  const Vec3d axis = w / angle;
  double a = std::fmod(angle, 2.0 * std::numbers::pi);
  if (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  return axis * a;
}

/// Rodrigues formula with coefficients expanded in theta^2 near zero so the
/// expression stays differentiable for dual-number scalars.
template <typename T>
Mat3<T> axis_angle_matrix(const Vec3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = w.squaredNorm();
  T a, b;
  if (theta2 < T(1e-8)) {
    a = T(1) - theta2 / T(6) + theta2 * theta2 / T(120);
    b = T(0.5) - theta2 / T(24) + theta2 * theta2 / T(720);
  } else {
    const T theta = sqrt(theta2);
    a = sin(theta) / theta;
    b = (T(1) - cos(theta)) / theta2;
  }
  Mat3<T> k;
  k << T(0), -w.z(), w.y(), w.z(), T(0), -w.x(), -w.y(), w.x(), T(0);
  return Mat3<T>::Identity() + a * k + b * (k * k);
}

template <typename T>
struct TransformT {
  Mat3<T> rotation;
  Vec3<T> translation;
};

namespace detail {

template <typename T>
std::vector<TransformT<T>> forward_kinematics_t(const SkeletonRig& rig, const RigidTransform& root,
                                                const std::vector<Vec3<T>>& angles) {
  const int k = rig.bone_count();
  std::vector<TransformT<T>> out(k);
  for (int i = 0; i < k; ++i) {
    const Mat3<T> local = axis_angle_matrix<T>(angles[i]);
    const int p = rig.parent[i];
    Mat3<T> parent_r;
    Vec3<T> parent_t;
    Vec3<T> offset;
    if (p < 0) {
      parent_r = root.rotation.cast<T>();
      parent_t = root.translation.cast<T>();
      offset = rig.rest_head[i].cast<T>();
    } else {
      parent_r = out[p].rotation;
      parent_t = out[p].translation;
      offset = (rig.rest_head[i] - rig.rest_head[p]).cast<T>();
    }
    out[i].rotation = parent_r * local;
    out[i].translation = parent_r * offset + parent_t;
  }
  return out;
}

inline void check_pose(const SkeletonRig& rig, const BodyPose& pose) {
  if (static_cast<int>(pose.joint_angles.size()) != rig.bone_count())
    throw ShapeError("pose has " + std::to_string(pose.joint_angles.size()) + " bones, rig has " +
                     std::to_string(rig.bone_count()));
}

}  // namespace detail

/// Bone-local to world transforms. The local frame of bone i has its origin at
/// the bone head and, at rest, the world orientation.
inline std::vector<RigidTransform> forward_kinematics(const SkeletonRig& rig, const BodyPose& pose) {
  detail::check_pose(rig, pose);
  const auto t = detail::forward_kinematics_t<double>(rig, pose.root, pose.joint_angles);
  std::vector<RigidTransform> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = {t[i].rotation, t[i].translation};
  return out;
}

inline std::vector<RigidTransform> rest_transforms(const SkeletonRig& rig) {
  std::vector<RigidTransform> out;
  for (const auto& h : rig.rest_head) out.push_back(RigidTransform::from_translation(h));
  return out;
}

/// Recomputes the posed joint positions from the angles.
inline BodyPose with_joints(const SkeletonRig& rig, BodyPose pose) {
  const auto fk = forward_kinematics(rig, pose);
  pose.joints.resize(fk.size());
  for (std::size_t i = 0; i < fk.size(); ++i) pose.joints[i] = fk[i].translation;
  return pose;
}

/// Observation-to-canonical transform per bone: rest_i * inverse(posed_i).
inline std::vector<RigidTransform> motion_bases(const SkeletonRig& rig, const BodyPose& pose) {
  const auto posed = forward_kinematics(rig, pose);
  std::vector<RigidTransform> out(posed.size());
  for (std::size_t i = 0; i < posed.size(); ++i)
    out[i] = RigidTransform::from_translation(rig.rest_head[i]) * posed[i].inverse();
  return out;
}

/// Bases flattened as 12 numbers per bone (rotation row-major, then
/// translation) and their Jacobian with respect to the 3K joint angles.
struct BasesJacobian {
  std::vector<RigidTransform> bases;
  Eigen::MatrixXd jacobian;  // 12K x 3K
};

inline BasesJacobian motion_bases_jacobian(const SkeletonRig& rig, const BodyPose& pose) {
  detail::check_pose(rig, pose);
  using Dual = Eigen::AutoDiffScalar<Eigen::VectorXd>;
  const int k = rig.bone_count();
  std::vector<Vec3<Dual>> angles(k);
  for (int i = 0; i < k; ++i)
    for (int d = 0; d < 3; ++d) angles[i][d] = Dual(pose.joint_angles[i][d], 3 * k, 3 * i + d);
  const auto posed = detail::forward_kinematics_t<Dual>(rig, pose.root, angles);

  BasesJacobian out;
  out.bases.resize(k);
  out.jacobian.setZero(12 * k, 3 * k);
  for (int i = 0; i < k; ++i) {
    const Mat3<Dual> r = posed[i].rotation.transpose();
    const Vec3<Dual> t = rig.rest_head[i].cast<Dual>() - r * posed[i].translation;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        out.bases[i].rotation(a, b) = r(a, b).value();
        if (r(a, b).derivatives().size() > 0) out.jacobian.row(12 * i + 3 * a + b) = r(a, b).derivatives().transpose();
      }
      out.bases[i].translation[a] = t[a].value();
      if (t[a].derivatives().size() > 0) out.jacobian.row(12 * i + 9 + a) = t[a].derivatives().transpose();
    }
  }
  return out;
}

/// Posed capsule endpoints (head, tail) per bone in world space.
inline std::vector<std::pair<Vec3d, Vec3d>> posed_capsules(const SkeletonRig& rig, const BodyPose& pose) {
  const auto fk = forward_kinematics(rig, pose);
  std::vector<std::pair<Vec3d, Vec3d>> out;
  for (int i = 0; i < rig.bone_count(); ++i)
    out.emplace_back(fk[i].translation, fk[i].apply(rig.rest_tail[i] - rig.rest_head[i]));
  return out;
}

inline Aabb posed_bounds(const SkeletonRig& rig, const BodyPose& pose) {
  Aabb box = Aabb::empty();
  const auto caps = posed_capsules(rig, pose);
  for (int i = 0; i < rig.bone_count(); ++i) {
    const Vec3d r = Vec3d::Constant(rig.bone_radius[i]);
    for (const Vec3d& p : {caps[i].first, caps[i].second}) {
      box.extend(p - r);
      box.extend(p + r);
    }
  }
  return box;
}

/// Residual joint-angle predictor conditioned on a per-appearance pose
/// embedding. The last layer starts at zero so the residual is zero at init.
template <typename Scalar>
struct PoseCorrectionNet {
  Mlp<Scalar> mlp;
  int bone_count = 0;
  int embedding_dim = 0;

  PoseCorrectionNet() = default;
  PoseCorrectionNet(int bones, int embed_dim, int width = 256, int depth = 4)
      : mlp(3 * bones + embed_dim, width, depth, 3 * bones), bone_count(bones), embedding_dim(embed_dim) {}

  void init(std::mt19937_64& rng) {
    for (auto& layer : mlp.layers) layer.init_he(rng);
    mlp.layers.back().set_zero();
  }

  MatX<Scalar> input(const BodyPose& pose, std::span<const Scalar> embedding) const {
    if (static_cast<int>(pose.joint_angles.size()) != bone_count)
      throw ShapeError("pose bone count does not match pose-correction net");
    if (static_cast<int>(embedding.size()) != embedding_dim)
      throw ShapeError("pose embedding has wrong length");
    MatX<Scalar> in(3 * bone_count + embedding_dim, 1);
    for (int i = 0; i < bone_count; ++i)
      for (int d = 0; d < 3; ++d) in(3 * i + d, 0) = static_cast<Scalar>(pose.joint_angles[i][d]);
    for (int e = 0; e < embedding_dim; ++e) in(3 * bone_count + e, 0) = embedding[e];
    return in;
  }

  /// Residuals dOmega, 3 per bone.
  VecX<Scalar> residual(const BodyPose& pose, std::span<const Scalar> embedding,
                        typename Mlp<Scalar>::Cache* cache = nullptr) const {
    return mlp.forward(input(pose, embedding), cache).col(0);
  }

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    mlp.for_each_tensor(prefix, f);
  }
};

/// Applies the predicted residual; root is unchanged and joints are recomputed.
template <typename Scalar>
BodyPose correct_pose(const PoseCorrectionNet<Scalar>& net, const SkeletonRig& rig, const BodyPose& pose,
                      std::span<const Scalar> embedding) {
  detail::check_pose(rig, pose);
  const VecX<Scalar> delta = net.residual(pose, embedding);
  BodyPose out = pose;
  for (int i = 0; i < rig.bone_count(); ++i)
    for (int d = 0; d < 3; ++d) out.joint_angles[i][d] += static_cast<double>(delta[3 * i + d]);
  return with_joints(rig, std::move(out));
}

}  // namespace personerf
