#pragma once

#include "personerf/losses.hpp"
#include "personerf/model.hpp"
#include "personerf/optim.hpp"
#include "personerf/renderer.hpp"

#include <numbers>
#include <random>
#include <vector>

namespace personerf {

struct StepConfig {
  int samples_per_ray = 128;
  int seen_patches = 6;
  int seen_patch_size = 32;
  int unseen_patches = 16;
  int unseen_patch_size = 8;
  double bounds_inflation = 1.25;
  double min_foreground = 0.0;
  bool use_perceptual = true;
  // Drop the geometry loss's contribution to the pose net and pose embeddings.
  bool stop_pose_gradient_from_geom = true;
  Vec3d up = Vec3d::UnitY();
  LossWeights weights;
};

/// One observed frame as seen by a training step.
template <typename Scalar>
struct FrameView {
  const Camera* camera = nullptr;
  const BodyPose* pose = nullptr;
  int set = 0;
  const MatX<Scalar>* image = nullptr;         // 3 x (W*H), composited on black
  const std::vector<std::uint8_t>* valid = nullptr;  // per pixel; empty = all valid
  PixelBox subject_box;
};

/// Random choices of one iteration, fixed up front so a step can be replayed.
struct StepPlan {
  std::vector<PatchSpec> seen;
  double orbit_angle = 0.0;
  std::vector<PatchSpec> unseen;
  std::uint64_t jitter_seed = 0;
  bool jitter = true;
};

struct StepResult {
  LossParts parts;
  double total = 0.0;
  bool mse_flagged = false;
  bool rendered_unseen = false;
};

namespace detail {

template <typename Scalar>
bool wants_unseen(const StepConfig& cfg, const StageFlags& flags) {
  return cfg.unseen_patches > 0 && ((flags.geom && cfg.weights.geom > 0.0) || (flags.opacity && cfg.weights.opacity > 0.0));
}

inline Aabb ray_bounds(const SkeletonRig& rig, const BodyPose& pose, double inflation) {
  return posed_bounds(rig, pose).inflated(inflation);
}

}  // namespace detail

inline Camera unseen_camera(const SkeletonRig& rig, const BodyPose& pose, const Camera& camera, double phi,
                            const Vec3d& up) {
  return orbit_camera(camera, phi, posed_bounds(rig, pose).center(), up);
}

template <typename Scalar>
StepPlan plan_step(std::mt19937_64& rng, const SkeletonRig& rig, const FrameView<Scalar>& frame,
                   const StepConfig& cfg) {
  StepPlan plan;
  const Camera& cam = *frame.camera;
  plan.seen = sample_patches(rng, cam.width, cam.height, frame.subject_box, cfg.seen_patches, cfg.seen_patch_size,
                             PatchKind::seen);
  plan.orbit_angle = 2.0 * std::numbers::pi * uniform01(rng);
  if (cfg.unseen_patches > 0) {
    const Camera orbit = unseen_camera(rig, *frame.pose, cam, plan.orbit_angle, cfg.up);
    std::vector<double> radius(rig.bone_radius);
    PixelBox box = projected_box(orbit, posed_capsules(rig, *frame.pose), radius);
    if (box.empty()) box = {0, 0, orbit.width, orbit.height};
    plan.unseen = sample_patches(rng, orbit.width, orbit.height, box, cfg.unseen_patches, cfg.unseen_patch_size,
                                 PatchKind::unseen, 1);
  }
  plan.jitter_seed = rng();
  return plan;
}

/// Forward pass of all losses of one step and, when `grads` is given, their
/// exact gradients for every parameter group (accumulated into `grads`).
template <typename Scalar>
StepResult evaluate_step(const Model<Scalar>& model, const SkeletonRig& rig, const FrameView<Scalar>& frame,
                         const StepPlan& plan, const StepConfig& cfg, const StageFlags& flags,
                         Model<Scalar>* grads) {
  StepResult result;
  const int k = rig.bone_count();
  const BodyPose& raw = *frame.pose;

  // pose correction
  BodyPose pose = raw;
  typename Mlp<Scalar>::Cache pose_cache;
  const auto pose_embedding = model.embeddings.pose_vec(frame.set);
  if (flags.pose) {
    const VecX<Scalar> delta = model.pose_net.residual(raw, pose_embedding, &pose_cache);
    for (int i = 0; i < k; ++i)
      for (int d = 0; d < 3; ++d) pose.joint_angles[i][d] += static_cast<double>(delta[3 * i + d]);
  }
  const bool want_bases = grads && flags.pose;
  BasesJacobian jac;
  if (want_bases)
    jac = motion_bases_jacobian(rig, pose);
  else
    jac.bases = motion_bases(rig, pose);

  const BasesT<Scalar> bases(jac.bases);
  const WarpField<Scalar> warp(model.volume, bases);
  RenderContext<Scalar> ctx;
  ctx.net = &model.net;
  ctx.warp = &warp;
  ctx.app_embedding = model.embeddings.app(frame.set);
  ctx.bounds = detail::ray_bounds(rig, raw, cfg.bounds_inflation);
  ctx.samples_per_ray = cfg.samples_per_ray;
  ctx.min_foreground = static_cast<Scalar>(cfg.min_foreground);

  MatX<Scalar> grad_prob;
  BasesGrad<Scalar> grad_bases(k);
  RenderGradTargets<Scalar> targets;
  if (grads) {
    grad_prob = MatX<Scalar>::Zero(model.volume.channels(), model.volume.node_count());
    targets.net = &grads->net;
    targets.app_embedding = grads->embeddings.app_mut(frame.set);
    targets.probabilities = &grad_prob;
    if (want_bases) targets.bases = &grad_bases;
  }

  const Camera& cam = *frame.camera;
  const int width = cam.width;

  // seen patches: reconstruction terms
  std::size_t valid_total = 0;
  for (const auto& p : plan.seen)
    for (int y = 0; y < p.size; ++y)
      for (int x = 0; x < p.size; ++x) {
        const int idx = (p.y0 + y) * width + p.x0 + x;
        if (frame.valid->empty() || (*frame.valid)[idx]) ++valid_total;
      }
  result.mse_flagged = valid_total == 0;
  const double n_seen = static_cast<double>(plan.seen.size());
  GradientProxyLoss<Scalar> proxy;

  for (std::size_t pi = 0; pi < plan.seen.size(); ++pi) {
    const auto& p = plan.seen[pi];
    std::mt19937_64 jitter(mix_seed(plan.jitter_seed, pi));
    RenderCache<Scalar> cache;
    const auto out = render_patch<Scalar>(ctx, p, cam, plan.jitter ? &jitter : nullptr, grads ? &cache : nullptr);
    const int px = p.size * p.size;
    MatX<Scalar> target(3, px);
    std::vector<std::uint8_t> valid(px, 1);
    for (int y = 0; y < p.size; ++y)
      for (int x = 0; x < p.size; ++x) {
        const int idx = (p.y0 + y) * width + p.x0 + x;
        target.col(y * p.size + x) = frame.image->col(idx);
        if (!frame.valid->empty()) valid[y * p.size + x] = (*frame.valid)[idx];
      }
    PatchGrad<Scalar> up(px);
    if (valid_total > 0) {
      const Scalar denom = static_cast<Scalar>(3 * valid_total);
      for (int q = 0; q < px; ++q) {
        if (!valid[q]) continue;
        for (int c = 0; c < 3; ++c) {
          const Scalar d = out.color(c, q) - target(c, q);
          result.parts.mse += static_cast<double>(d * d / denom);
          up.color(c, q) += static_cast<Scalar>(cfg.weights.mse) * Scalar(2) * d / denom;
        }
      }
    }
    if (cfg.use_perceptual) {
      MatX<Scalar> g;
      // ignore-masked pixels take the render itself as a constant target
      MatX<Scalar> masked_target = target;
      for (int q = 0; q < px; ++q)
        if (!valid[q]) masked_target.col(q) = out.color.col(q);
      const Scalar v = proxy.evaluate(out.color, masked_target, p.size, p.size, grads ? &g : nullptr);
      result.parts.perceptual += static_cast<double>(v) / n_seen;
      if (grads) up.color += g / static_cast<Scalar>(n_seen);
    }
    if (grads) render_backward<Scalar>(ctx, cache, up, targets);
  }

  // unseen patches: geometry and opacity regularizers
  if (detail::wants_unseen<Scalar>(cfg, flags) && !plan.unseen.empty()) {
    result.rendered_unseen = true;
    const Camera orbit = unseen_camera(rig, raw, cam, plan.orbit_angle, cfg.up);
    const double n_unseen = static_cast<double>(plan.unseen.size());
    const bool geom_on = flags.geom && cfg.weights.geom > 0.0;
    const bool opacity_on = flags.opacity && cfg.weights.opacity > 0.0;
    for (std::size_t pi = 0; pi < plan.unseen.size(); ++pi) {
      const auto& p = plan.unseen[pi];
      std::mt19937_64 jitter(mix_seed(plan.jitter_seed, 1000003 + pi));
      RenderCache<Scalar> cache;
      const auto out = render_patch<Scalar>(ctx, p, orbit, plan.jitter ? &jitter : nullptr, grads ? &cache : nullptr);
      VecX<Scalar> gd_geom, ga_geom, ga_opacity;
      const Scalar geom = loss_geom<Scalar>(out.depth, out.alpha, p.size, p.size, &gd_geom, &ga_geom);
      const Scalar opacity = loss_opacity<Scalar>(out.alpha, cfg.weights.epsilon, &ga_opacity);
      result.parts.geom += static_cast<double>(geom) / n_unseen;
      result.parts.opacity += static_cast<double>(opacity) / n_unseen;
      if (!grads) continue;
      const int px = p.size * p.size;
      const Scalar wg = geom_on ? static_cast<Scalar>(cfg.weights.geom / n_unseen) : Scalar(0);
      const Scalar wo = opacity_on ? static_cast<Scalar>(cfg.weights.opacity / n_unseen) : Scalar(0);
      PatchGrad<Scalar> up(px);
      up.depth = wg * gd_geom;
      up.alpha = wg * ga_geom + wo * ga_opacity;
      if (want_bases && cfg.stop_pose_gradient_from_geom && geom_on) {
        RenderGradTargets<Scalar> no_bases = targets;
        no_bases.bases = nullptr;
        render_backward<Scalar>(ctx, cache, up, no_bases);
        if (opacity_on) {
          PatchGrad<Scalar> up_opacity(px);
          up_opacity.alpha = wo * ga_opacity;
          RenderGradTargets<Scalar> bases_only;
          bases_only.bases = &grad_bases;
          render_backward<Scalar>(ctx, cache, up_opacity, bases_only);
        }
      } else {
        render_backward<Scalar>(ctx, cache, up, targets);
      }
    }
  }

  result.total = loss_total(result.parts, cfg.weights,
                            {flags.geom && result.rendered_unseen, flags.opacity && result.rendered_unseen});
  if (!cfg.use_perceptual) result.parts.perceptual = 0.0;

  if (!grads) return result;
  WarpField<Scalar>::probabilities_to_logits(warp.probabilities(), grad_prob, grads->volume.logits);
  if (want_bases) {
    const Eigen::VectorXd g_angles = jac.jacobian.transpose() * grad_bases.flatten();
    MatX<Scalar> g_out(3 * k, 1);
    for (int i = 0; i < 3 * k; ++i) g_out(i, 0) = static_cast<Scalar>(g_angles[i]);
    const MatX<Scalar> g_in = model.pose_net.mlp.backward(pose_cache, g_out, &grads->pose_net.mlp);
    auto g_embed = grads->embeddings.pose_mut(frame.set);
    for (int e = 0; e < model.pose_net.embedding_dim; ++e) g_embed[e] += g_in(3 * k + e, 0);
  }
  return result;
}

}  // namespace personerf
