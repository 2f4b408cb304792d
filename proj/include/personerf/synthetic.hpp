#pragma once

#include "personerf/dataset.hpp"

namespace personerf {

struct SyntheticSpec {
  int bones = 4;  // 1..6: torso, head, left arm, right arm, left leg, right leg
  int sets = 3;
  int poses_per_set = 8;
  int width = 128;
  int height = 128;
  double camera_distance = 4.0;
  double elevation_deg = 10.0;
  double fill = 0.75;  // fraction of the image width covered by the widest posed figure
  double max_angle = 0.6;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json spec_to_json(const SyntheticSpec& spec);
SyntheticSpec spec_from_json(const nlohmann::json& j);

/// T-pose capsule figure at roughly meter scale, +Y up.
SkeletonRig synthetic_rig(int bones);

/// Per-set, per-bone flat albedo.
std::vector<std::vector<Vec3d>> synthetic_palettes(const SyntheticSpec& spec);

/// Camera at `eye` looking at `target` with world up `up`.
Camera look_at(const Vec3d& eye, const Vec3d& target, const Vec3d& up, double focal, int width, int height);

/// Smallest t > 0 where the ray enters the capsule, or a negative value on a miss.
double ray_capsule(const Vec3d& origin, const Vec3d& dir, const Vec3d& a, const Vec3d& b, double radius);

struct OracleImage {
  MatX<float> color;               // 3 x (W*H), black background
  std::vector<std::uint8_t> mask;  // 1 = subject
  std::vector<int> bone;           // hit bone per pixel, -1 on background
};

/// Exact render of the posed capsule union with flat per-bone albedo.
OracleImage render_oracle(const SkeletonRig& rig, const BodyPose& pose, const Camera& camera,
                          const std::vector<Vec3d>& palette);

struct SyntheticScene {
  SyntheticSpec spec;
  SkeletonRig rig;
  std::vector<std::vector<Vec3d>> palettes;
  std::vector<BodyPose> poses;
  std::vector<Camera> cameras;
  std::vector<int> sets;
};

/// Poses, cameras and palettes of every frame, without rendering.
SyntheticScene build_synthetic_scene(const SyntheticSpec& spec);

/// Writes rig.json, metadata.json, synthetic.json, images/ and masks/.
void generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir);

/// Reads synthetic.json back (spec and palettes); nullopt for non-synthetic data.
std::optional<SyntheticScene> load_synthetic_scene(const std::filesystem::path& dir);

}  // namespace personerf
