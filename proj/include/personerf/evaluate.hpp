#pragma once

#include "personerf/inference.hpp"
#include "personerf/synthetic.hpp"

#include <optional>

namespace personerf {

inline constexpr double kPsnrInfinity = 999.0;

/// PSNR for colors in [0, 1]; kPsnrInfinity when the images are identical.
double psnr(const MatX<float>& a, const MatX<float>& b);

/// Intersection over union of alpha > 0.5 against a binary mask; 1 when both are empty.
double alpha_iou(const VecX<float>& alpha, const std::vector<std::uint8_t>& mask);
double alpha_iou(const VecX<float>& a, const VecX<float>& b);

struct EvalOptions {
  double held_out_angle = std::numbers::pi / 2;  // orbit offset of the held-out views
  int geom_patches = 16;
  int geom_repeats = 2;
  std::uint64_t geom_seed = 12345;
};

struct FrameMetrics {
  int frame = 0;
  double train_psnr = 0.0;
  double held_out_psnr = 0.0;
  double held_out_iou = 0.0;
};

struct EvalReport {
  std::vector<FrameMetrics> frames;
  double train_psnr = 0.0;     // mean over frames
  double held_out_psnr = 0.0;  // synthetic data only
  double held_out_iou = 0.0;   // synthetic data only
  double unseen_geom = 0.0;    // mean L_geom over seeded unseen patches
  bool has_oracle = false;
};

nlohmann::json report_to_json(const EvalReport& r);

/// Training-view PSNR for every frame and, given the synthetic scene, PSNR
/// and alpha IoU against oracle renders from held-out orbit cameras.
EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data, const std::optional<SyntheticScene>& oracle,
                    const EvalOptions& options = {});

/// Mean unseen-view L_geom with the training patch sampler and a fixed seed.
double mean_unseen_geom(const Checkpoint& ckpt, const Dataset& data, const EvalOptions& options = {});

/// Held-out camera of a frame: its own camera orbited about the posed body.
Camera held_out_camera(const SceneFrame& frame, const SkeletonRig& rig, double angle, const Vec3d& up);

/// Renders of one frame at 10 degree orbit increments.
std::vector<RenderedPatch<float>> orbit_sweep(const Checkpoint& ckpt, int frame, int steps = 36);

}  // namespace personerf
