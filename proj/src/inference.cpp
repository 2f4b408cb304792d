#include "personerf/inference.hpp"

namespace personerf {

RenderedPatch<float> render_view(const Model<float>& model, const SkeletonRig& rig, const TrainConfig& cfg,
                                 const ViewRequest& req) {
  req.camera.validate();
  if (req.app_set < 0 || req.app_set >= model.embeddings.appearance.cols() || req.pose_set < 0 ||
      req.pose_set >= model.embeddings.pose.cols())
    throw ShapeError("embedding index out of range");
  BodyPose pose = req.pose;
  if (req.correct_pose) pose = correct_pose<float>(model.pose_net, rig, req.pose, model.embeddings.pose_vec(req.pose_set));
  const BasesT<float> bases(motion_bases(rig, pose));
  const WarpField<float> warp(model.volume, bases);
  RenderContext<float> ctx;
  ctx.net = &model.net;
  ctx.warp = &warp;
  ctx.app_embedding = model.embeddings.app(req.app_set);
  ctx.bounds = detail::ray_bounds(rig, req.pose, cfg.step.bounds_inflation);
  ctx.samples_per_ray = cfg.step.samples_per_ray;

  const int w = req.camera.width, h = req.camera.height;
  RenderedPatch<float> out;
  out.resize(w, h);
  // rows in chunks keep the network batch bounded
  const int rows = std::max(1, 2048 / w);
  std::vector<std::pair<int, int>> px;
  for (int y0 = 0; y0 < h; y0 += rows) {
    const int y1 = std::min(h, y0 + rows);
    px.clear();
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < w; ++x) px.emplace_back(x, y);
    const auto part = render_pixels<float>(ctx, req.camera, px, w, y1 - y0, nullptr, nullptr);
    const int off = y0 * w, n = static_cast<int>(px.size());
    out.color.middleCols(off, n) = part.color;
    out.depth.segment(off, n) = part.depth;
    out.alpha.segment(off, n) = part.alpha;
  }
  return out;
}

bool pose_stage_reached(const Checkpoint& ckpt) { return ckpt.iteration > ckpt.config.schedule.pose_delay; }

ViewRequest frame_request(const Checkpoint& ckpt, int index) {
  if (index < 0 || index >= static_cast<int>(ckpt.scene.frames.size())) throw ShapeError("frame index out of range");
  const auto& f = ckpt.scene.frames[index];
  ViewRequest r;
  r.pose = f.pose;
  r.app_set = f.set;
  r.pose_set = f.set;
  r.correct_pose = pose_stage_reached(ckpt);
  r.camera = f.camera;
  return r;
}

Camera resized_camera(const Camera& cam, int width, int height) {
  Camera out = cam;
  const double sx = static_cast<double>(width) / cam.width, sy = static_cast<double>(height) / cam.height;
  out.intrinsics.row(0) *= sx;
  out.intrinsics.row(1) *= sy;
  out.width = width;
  out.height = height;
  return out;
}

}  // namespace personerf
