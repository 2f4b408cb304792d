#pragma once

#include "personerf/checkpoint.hpp"

namespace personerf {

struct ViewRequest {
  BodyPose pose;       // raw (uncorrected) pose
  int app_set = 0;     // appearance embedding index
  int pose_set = 0;    // pose embedding index; the pose's source set
  bool correct_pose = true;
  Camera camera;
};

/// Deterministic full-image render (midpoint samples, no jitter).
RenderedPatch<float> render_view(const Model<float>& model, const SkeletonRig& rig, const TrainConfig& cfg,
                                 const ViewRequest& request);

/// Whether a model trained for `iterations` steps had pose refinement switched on.
bool pose_stage_reached(const Checkpoint& ckpt);

/// View request reproducing training frame `index` from its own camera.
ViewRequest frame_request(const Checkpoint& ckpt, int index);

/// Intrinsics rescaled to a different output size.
Camera resized_camera(const Camera& cam, int width, int height);

}  // namespace personerf
