#pragma once

#include "personerf/skeleton.hpp"

#include <random>

namespace personerf::testing {

/// Straight chain along +X with unit-length bones.
inline SkeletonRig chain_rig(int bones, double radius = 0.2) {
  SkeletonRig rig;
  for (int i = 0; i < bones; ++i) {
    rig.parent.push_back(i - 1);
    rig.rest_head.emplace_back(i, 0, 0);
    rig.rest_tail.emplace_back(i + 1, 0, 0);
    rig.bone_radius.push_back(radius);
    rig.names.push_back("bone" + std::to_string(i));
  }
  return rig;
}

inline BodyPose random_pose(const SkeletonRig& rig, std::mt19937_64& rng, double max_angle = 0.8) {
  BodyPose p = BodyPose::canonical(rig);
  auto u = [&] { return 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0; };
  p.root.rotation = Eigen::AngleAxisd(u() * 1.5, Vec3d(u(), u(), u()).normalized()).toRotationMatrix();
  p.root.translation = Vec3d(u(), u(), u());
  for (auto& w : p.joint_angles) w = max_angle * Vec3d(u(), u(), u());
  return with_joints(rig, p);
}

}  // namespace personerf::testing
