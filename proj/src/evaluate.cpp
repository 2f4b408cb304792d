#include "personerf/evaluate.hpp"

#include <cmath>

namespace personerf {

using nlohmann::json;

double psnr(const MatX<float>& a, const MatX<float>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("psnr: image sizes differ");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    sum += d * d;
  }
  if (sum == 0.0) return kPsnrInfinity;
  return -10.0 * std::log10(sum / static_cast<double>(a.size()));
}

double alpha_iou(const VecX<float>& alpha, const std::vector<std::uint8_t>& mask) {
  if (static_cast<std::size_t>(alpha.size()) != mask.size()) throw ShapeError("iou: sizes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const bool p = alpha[static_cast<Eigen::Index>(i)] > 0.5f, m = mask[i] != 0;
    inter += p && m;
    uni += p || m;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double alpha_iou(const VecX<float>& a, const VecX<float>& b) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(b.size()));
  for (Eigen::Index i = 0; i < b.size(); ++i) mask[i] = b[i] > 0.5f;
  return alpha_iou(a, mask);
}

json report_to_json(const EvalReport& r) {
  json frames = json::array();
  for (const auto& f : r.frames) {
    json j = {{"frame", f.frame}, {"train_psnr", f.train_psnr}};
    if (r.has_oracle) {
      j["held_out_psnr"] = f.held_out_psnr;
      j["held_out_iou"] = f.held_out_iou;
    }
    frames.push_back(j);
  }
  json out = {{"train_psnr", r.train_psnr}, {"unseen_geom", r.unseen_geom}, {"frames", frames}};
  if (r.has_oracle) {
    out["held_out_psnr"] = r.held_out_psnr;
    out["held_out_iou"] = r.held_out_iou;
  }
  return out;
}

Camera held_out_camera(const SceneFrame& frame, const SkeletonRig& rig, double angle, const Vec3d& up) {
  return unseen_camera(rig, frame.pose, frame.camera, angle, up);
}

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data, const std::optional<SyntheticScene>& oracle,
                    const EvalOptions& options) {
  if (static_cast<int>(ckpt.scene.frames.size()) != data.size()) throw Error("checkpoint and dataset frame counts differ");
  EvalReport report;
  report.has_oracle = oracle.has_value();
  for (int i = 0; i < data.size(); ++i) {
    FrameMetrics m;
    m.frame = i;
    ViewRequest req = frame_request(ckpt, i);
    const auto train_view = render_view(ckpt.model, ckpt.scene.rig, ckpt.config, req);
    m.train_psnr = psnr(train_view.color, data.frames[i].image);
    if (oracle) {
      req.camera = held_out_camera(ckpt.scene.frames[i], ckpt.scene.rig, options.held_out_angle, ckpt.config.step.up);
      const auto view = render_view(ckpt.model, ckpt.scene.rig, ckpt.config, req);
      const int set = ckpt.scene.frames[i].set;
      const auto truth = render_oracle(oracle->rig, oracle->poses[i], req.camera, oracle->palettes[set]);
      m.held_out_psnr = psnr(view.color, truth.color);
      m.held_out_iou = alpha_iou(view.alpha, truth.mask);
    }
    report.frames.push_back(m);
  }
  const double n = static_cast<double>(report.frames.size());
  for (const auto& f : report.frames) {
    report.train_psnr += f.train_psnr / n;
    report.held_out_psnr += f.held_out_psnr / n;
    report.held_out_iou += f.held_out_iou / n;
  }
  report.unseen_geom = mean_unseen_geom(ckpt, data, options);
  return report;
}

double mean_unseen_geom(const Checkpoint& ckpt, const Dataset& data, const EvalOptions& options) {
  StepConfig cfg = ckpt.config.step;
  cfg.seen_patches = 0;
  cfg.unseen_patches = options.geom_patches;
  cfg.use_perceptual = false;
  cfg.weights.geom = 1.0;
  const StageFlags flags{pose_stage_reached(ckpt), true, false};
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < data.size(); ++i) {
    const auto& f = data.frames[i];
    FrameView<float> view;
    view.camera = &f.camera;
    view.pose = &f.pose;
    view.set = f.set;
    view.image = &f.image;
    view.valid = &f.valid;
    view.subject_box = f.subject_box;
    for (int r = 0; r < options.geom_repeats; ++r) {
      std::mt19937_64 rng(mix_seed(options.geom_seed, static_cast<std::uint64_t>(i * options.geom_repeats + r)));
      StepPlan plan = plan_step(rng, data.rig, view, cfg);
      plan.jitter = false;
      const auto result = evaluate_step<float>(ckpt.model, data.rig, view, plan, cfg, flags, nullptr);
      sum += result.parts.geom;
      ++count;
    }
  }
  return count ? sum / count : 0.0;
}

std::vector<RenderedPatch<float>> orbit_sweep(const Checkpoint& ckpt, int frame, int steps) {
  std::vector<RenderedPatch<float>> out;
  ViewRequest req = frame_request(ckpt, frame);
  const SceneFrame& f = ckpt.scene.frames[frame];
  for (int k = 0; k < steps; ++k) {
    req.camera = held_out_camera(f, ckpt.scene.rig, 2.0 * std::numbers::pi * k / steps, ckpt.config.step.up);
    out.push_back(render_view(ckpt.model, ckpt.scene.rig, ckpt.config, req));
  }
  return out;
}

}  // namespace personerf
