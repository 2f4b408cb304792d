#pragma once

#include "personerf/canonical_field.hpp"
#include "personerf/common.hpp"
#include "personerf/geometry.hpp"
#include "personerf/motion_field.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace personerf {

/// Sample positions along one ray. dt[G-1] is the uniform bin width.
struct RaySampleSet {
  std::vector<double> t;
  std::vector<double> dt;
};

/// One sample per uniform bin over [t_near, t_far]: jittered when `rng` is
/// given, bin centers otherwise.
inline RaySampleSet stratified_samples(const Ray& ray, int count, std::mt19937_64* rng) {
  if (count < 1) throw Error("need at least one sample per ray");
  RaySampleSet s;
  s.t.resize(count);
  s.dt.resize(count);
  const double bin = (ray.t_far - ray.t_near) / count;
  for (int i = 0; i < count; ++i) {
    const double u = rng ? uniform01(*rng) : 0.5;
    s.t[i] = ray.t_near + (i + u) * bin;
  }
  for (int i = 0; i + 1 < count; ++i) s.dt[i] = s.t[i + 1] - s.t[i];
  s.dt[count - 1] = bin;
  return s;
}

template <typename Scalar>
struct IntegrateResult {
  Vec3<Scalar> color = Vec3<Scalar>::Zero();
  Scalar depth = Scalar(0);
  Scalar alpha = Scalar(0);
  std::vector<Scalar> weights;  // w_i = T_i alpha_i
};

// f sums skinning weights taken at K different points, so it can exceed 1;
// capping it keeps every sample alpha and the composited A inside [0, 1].
template <typename Scalar>
Scalar capped_foreground(Scalar foreground) {
  return std::min(foreground, Scalar(1));
}

template <typename Scalar>
Scalar capped_foreground_slope(Scalar foreground) {
  return foreground < Scalar(1) ? Scalar(1) : Scalar(0);
}

template <typename Scalar>
Scalar sample_alpha(Scalar density, Scalar foreground, Scalar dt) {
  return capped_foreground(foreground) * (Scalar(1) - std::exp(-density * dt));
}

/// Front-to-back compositing of color, expected termination depth and alpha.
template <typename Scalar>
IntegrateResult<Scalar> integrate_ray(std::span<const Scalar> t, std::span<const Scalar> dt,
                                      std::span<const Vec3<Scalar>> color, std::span<const Scalar> density,
                                      std::span<const Scalar> foreground) {
  IntegrateResult<Scalar> r;
  r.weights.resize(t.size());
  Scalar transmittance(1);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Scalar a = sample_alpha(density[i], foreground[i], dt[i]);
    const Scalar w = transmittance * a;
    r.weights[i] = w;
    r.color += w * color[i];
    r.depth += w * t[i];
    r.alpha += w;
    transmittance *= Scalar(1) - a;
  }
  return r;
}

template <typename Scalar>
struct IntegrateGrad {
  std::vector<Vec3<Scalar>> color;
  std::vector<Scalar> density;
  std::vector<Scalar> foreground;
};

/// Given per-sample alphas, returns dL/dalpha_i for upstream (dC, dD, dA).
/// Uses the back-to-front remainder R_i = a_i v_i + (1 - a_i) R_{i+1} so no
/// division by (1 - alpha) is needed.
template <typename Scalar>
void composite_backward(std::span<const Scalar> alpha, std::span<const Scalar> t, std::span<const Vec3<Scalar>> color,
                        const Vec3<Scalar>& grad_c, Scalar grad_d, Scalar grad_a, std::span<Scalar> grad_alpha,
                        std::span<Vec3<Scalar>> grad_color) {
  const std::size_t g = alpha.size();
  // transmittance before each sample
  std::vector<Scalar> trans(g);
  Scalar tr(1);
  for (std::size_t i = 0; i < g; ++i) {
    trans[i] = tr;
    tr *= Scalar(1) - alpha[i];
  }
  Scalar remainder(0);
  for (std::size_t i = g; i-- > 0;) {
    const Scalar v = grad_c.dot(color[i]) + grad_d * t[i] + grad_a;
    grad_alpha[i] = trans[i] * (v - remainder);
    grad_color[i] = (trans[i] * alpha[i]) * grad_c;
    remainder = alpha[i] * v + (Scalar(1) - alpha[i]) * remainder;
  }
}

template <typename Scalar>
IntegrateGrad<Scalar> integrate_ray_backward(std::span<const Scalar> t, std::span<const Scalar> dt,
                                             std::span<const Vec3<Scalar>> color, std::span<const Scalar> density,
                                             std::span<const Scalar> foreground, const Vec3<Scalar>& grad_c,
                                             Scalar grad_d, Scalar grad_a) {
  const std::size_t g = t.size();
  std::vector<Scalar> alpha(g), grad_alpha(g);
  for (std::size_t i = 0; i < g; ++i) alpha[i] = sample_alpha(density[i], foreground[i], dt[i]);
  IntegrateGrad<Scalar> out;
  out.color.resize(g);
  out.density.resize(g);
  out.foreground.resize(g);
  composite_backward<Scalar>(alpha, t, color, grad_c, grad_d, grad_a, grad_alpha, out.color);
  for (std::size_t i = 0; i < g; ++i) {
    const Scalar e = std::exp(-density[i] * dt[i]);
    out.density[i] = grad_alpha[i] * capped_foreground(foreground[i]) * dt[i] * e;
    out.foreground[i] = grad_alpha[i] * (Scalar(1) - e) * capped_foreground_slope(foreground[i]);
  }
  return out;
}

enum class PatchKind { seen, unseen };

struct PatchSpec {
  int camera_id = 0;
  int x0 = 0;
  int y0 = 0;
  int size = 0;
  PatchKind kind = PatchKind::seen;
};

/// Row-major per-pixel outputs.
template <typename Scalar>
struct RenderedPatch {
  int width = 0;
  int height = 0;
  MatX<Scalar> color;  // 3 x P
  VecX<Scalar> depth;  // P
  VecX<Scalar> alpha;  // P

  void resize(int w, int h) {
    width = w;
    height = h;
    color = MatX<Scalar>::Zero(3, w * h);
    depth = VecX<Scalar>::Zero(w * h);
    alpha = VecX<Scalar>::Zero(w * h);
  }
};

/// Upstream gradient for a rendered patch, same layout as RenderedPatch.
template <typename Scalar>
struct PatchGrad {
  MatX<Scalar> color;
  VecX<Scalar> depth;
  VecX<Scalar> alpha;

  explicit PatchGrad(int pixels = 0)
      : color(MatX<Scalar>::Zero(3, pixels)), depth(VecX<Scalar>::Zero(pixels)), alpha(VecX<Scalar>::Zero(pixels)) {}
};

/// Everything a render needs besides the rays.
template <typename Scalar>
struct RenderContext {
  const CanonicalNet<Scalar>* net = nullptr;
  const WarpField<Scalar>* warp = nullptr;
  std::span<const Scalar> app_embedding;
  Aabb bounds;  // observation-space subject box bounding every ray
  int samples_per_ray = 64;
  // Samples with foreground likelihood at or below this are treated as empty.
  Scalar min_foreground = Scalar(0);
};

/// Forward state kept for the backward pass of one batch of rays.
template <typename Scalar>
struct RenderCache {
  struct RayRecord {
    bool hit = false;
    Vec3d origin;
    Vec3d direction;
    std::vector<Scalar> t, dt, foreground, alpha;
    std::vector<int> active;  // column in the net batch, -1 if empty
  };
  std::vector<RayRecord> rays;
  std::vector<Vec3<Scalar>> x_obs;  // per active column
  std::vector<Vec3<Scalar>> x_can;
  typename CanonicalNet<Scalar>::Cache net;
};

/// Renders the given pixels of `camera` (row-major list of (x, y)).
template <typename Scalar>
RenderedPatch<Scalar> render_pixels(const RenderContext<Scalar>& ctx, const Camera& camera,
                                    std::span<const std::pair<int, int>> pixels, int patch_width, int patch_height,
                                    std::mt19937_64* jitter, RenderCache<Scalar>* cache) {
  const int g = ctx.samples_per_ray;
  const int bands = ctx.net->bands;
  RenderedPatch<Scalar> out;
  out.resize(patch_width, patch_height);

  RenderCache<Scalar> local;
  RenderCache<Scalar>& c = cache ? *cache : local;
  c.rays.assign(pixels.size(), {});
  c.x_obs.clear();
  c.x_can.clear();

  for (std::size_t p = 0; p < pixels.size(); ++p) {
    auto& rec = c.rays[p];
    const auto ray = pixel_to_ray(camera, pixels[p].first, pixels[p].second, ctx.bounds);
    if (!ray) continue;
    rec.hit = true;
    rec.origin = ray->origin;
    rec.direction = ray->direction;
    const RaySampleSet s = stratified_samples(*ray, g, jitter);
    rec.t.resize(g);
    rec.dt.resize(g);
    rec.foreground.assign(g, Scalar(0));
    rec.alpha.assign(g, Scalar(0));
    rec.active.assign(g, -1);
    for (int i = 0; i < g; ++i) {
      rec.t[i] = static_cast<Scalar>(s.t[i]);
      rec.dt[i] = static_cast<Scalar>(s.dt[i]);
      const Vec3<Scalar> x = ray->at(s.t[i]).template cast<Scalar>();
      const auto w = ctx.warp->warp(x);
      if (w.foreground > ctx.min_foreground) {
        rec.foreground[i] = w.foreground;
        rec.active[i] = static_cast<int>(c.x_obs.size());
        c.x_obs.push_back(x);
        c.x_can.push_back(w.x_can);
      }
    }
  }

  const int n = static_cast<int>(c.x_can.size());
  MatX<Scalar> encoded(ctx.net->encoding_dim(), n);
  for (int j = 0; j < n; ++j) positional_encoding<Scalar>(c.x_can[j], bands, encoded.col(j).data());
  const auto field = ctx.net->forward(encoded, ctx.app_embedding, cache ? &c.net : nullptr);

  std::vector<Vec3<Scalar>> col(g);
  std::vector<Scalar> den(g);
  for (std::size_t p = 0; p < pixels.size(); ++p) {
    auto& rec = c.rays[p];
    if (!rec.hit) continue;
    for (int i = 0; i < g; ++i) {
      const int j = rec.active[i];
      col[i] = j >= 0 ? Vec3<Scalar>(field.color.col(j)) : Vec3<Scalar>::Zero();
      den[i] = j >= 0 ? field.density(0, j) : Scalar(0);
      rec.alpha[i] = sample_alpha(den[i], rec.foreground[i], rec.dt[i]);
    }
    const auto r = integrate_ray<Scalar>(rec.t, rec.dt, col, den, rec.foreground);
    out.color.col(p) = r.color;
    out.depth[p] = r.depth;
    out.alpha[p] = r.alpha;
  }
  return out;
}

/// Pixel list of a square patch, row-major.
inline std::vector<std::pair<int, int>> patch_pixels(const PatchSpec& patch) {
  std::vector<std::pair<int, int>> px;
  px.reserve(static_cast<std::size_t>(patch.size) * patch.size);
  for (int y = 0; y < patch.size; ++y)
    for (int x = 0; x < patch.size; ++x) px.emplace_back(patch.x0 + x, patch.y0 + y);
  return px;
}

template <typename Scalar>
RenderedPatch<Scalar> render_patch(const RenderContext<Scalar>& ctx, const PatchSpec& patch, const Camera& camera,
                                   std::mt19937_64* jitter = nullptr, RenderCache<Scalar>* cache = nullptr) {
  if (patch.x0 < 0 || patch.y0 < 0 || patch.x0 + patch.size > camera.width || patch.y0 + patch.size > camera.height)
    throw Error("patch lies outside the image");
  const auto px = patch_pixels(patch);
  return render_pixels<Scalar>(ctx, camera, px, patch.size, patch.size, jitter, cache);
}

/// Where backward results go; null / empty members are skipped.
template <typename Scalar>
struct RenderGradTargets {
  CanonicalNet<Scalar>* net = nullptr;
  std::span<Scalar> app_embedding;
  MatX<Scalar>* probabilities = nullptr;  // (K+1) x R^3
  BasesGrad<Scalar>* bases = nullptr;
};

template <typename Scalar>
void render_backward(const RenderContext<Scalar>& ctx, const RenderCache<Scalar>& cache, const PatchGrad<Scalar>& upstream,
                     const RenderGradTargets<Scalar>& targets) {
  const int n = static_cast<int>(cache.x_can.size());
  if (n == 0) return;
  const int g = ctx.samples_per_ray;
  MatX<Scalar> grad_density = MatX<Scalar>::Zero(1, n);
  MatX<Scalar> grad_color = MatX<Scalar>::Zero(3, n);
  VecX<Scalar> grad_f = VecX<Scalar>::Zero(n);
  const auto& field = cache.net.out;

  std::vector<Vec3<Scalar>> col(g), gcol(g);
  std::vector<Scalar> galpha(g);
  for (std::size_t p = 0; p < cache.rays.size(); ++p) {
    const auto& rec = cache.rays[p];
    if (!rec.hit) continue;
    for (int i = 0; i < g; ++i) {
      const int j = rec.active[i];
      col[i] = j >= 0 ? Vec3<Scalar>(field.color.col(j)) : Vec3<Scalar>::Zero();
    }
    composite_backward<Scalar>(rec.alpha, rec.t, col, Vec3<Scalar>(upstream.color.col(p)), upstream.depth[p],
                               upstream.alpha[p], galpha, gcol);
    for (int i = 0; i < g; ++i) {
      const int j = rec.active[i];
      if (j < 0) continue;
      const Scalar e = std::exp(-field.density(0, j) * rec.dt[i]);
      grad_density(0, j) = galpha[i] * capped_foreground(rec.foreground[i]) * rec.dt[i] * e;
      grad_f[j] = galpha[i] * (Scalar(1) - e) * capped_foreground_slope(rec.foreground[i]);
      grad_color.col(j) = gcol[i];
    }
  }

  const bool need_position = targets.probabilities || targets.bases;
  MatX<Scalar> grad_encoded;
  ctx.net->backward(cache.net, ctx.app_embedding, grad_density, grad_color, targets.net,
                    need_position ? &grad_encoded : nullptr, targets.app_embedding);
  if (!need_position) return;
  const int bands = ctx.net->bands;
  for (int j = 0; j < n; ++j) {
    const Vec3<Scalar> gx = positional_encoding_backward_cached<Scalar>(cache.net.encoded.col(j).data(), bands, grad_encoded.col(j).data());
    ctx.warp->backward(cache.x_obs[j], gx, grad_f[j], targets.probabilities, targets.bases);
  }
}

/// Axis-aligned pixel rectangle [x0, x1) x [y0, y1).
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

/// Patches with centers drawn uniformly inside `box`, clamped to the image.
inline std::vector<PatchSpec> sample_patches(std::mt19937_64& rng, int image_width, int image_height,
                                             const PixelBox& box, int count, int size, PatchKind kind,
                                             int camera_id = 0) {
  if (box.empty()) throw Error("subject bounding box is empty");
  if (size < 1 || size > image_width || size > image_height) throw Error("patch size does not fit the image");
  std::vector<PatchSpec> out;
  for (int i = 0; i < count; ++i) {
    const double cx = box.x0 + uniform01(rng) * (box.x1 - box.x0);
    const double cy = box.y0 + uniform01(rng) * (box.y1 - box.y0);
    PatchSpec p;
    p.camera_id = camera_id;
    p.size = size;
    p.kind = kind;
    p.x0 = std::clamp(static_cast<int>(std::floor(cx - size / 2.0)), 0, image_width - size);
    p.y0 = std::clamp(static_cast<int>(std::floor(cy - size / 2.0)), 0, image_height - size);
    out.push_back(p);
  }
  return out;
}

/// 2D box of the projected capsules, clipped to the image.
inline PixelBox projected_box(const Camera& camera, const std::vector<std::pair<Vec3d, Vec3d>>& capsules,
                              const std::vector<double>& radius) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (std::size_t i = 0; i < capsules.size(); ++i) {
    for (const Vec3d& p : {capsules[i].first, capsules[i].second}) {
      const auto uv = camera.project(p);
      if (!uv) continue;
      const double depth = camera.extrinsics.apply(p).z();
      const double r = radius[i] * std::max(camera.intrinsics(0, 0), camera.intrinsics(1, 1)) / depth;
      x0 = std::min(x0, uv->x() - r);
      x1 = std::max(x1, uv->x() + r);
      y0 = std::min(y0, uv->y() - r);
      y1 = std::max(y1, uv->y() + r);
    }
  }
  PixelBox b;
  b.x0 = std::clamp(static_cast<int>(std::floor(x0)), 0, camera.width);
  b.y0 = std::clamp(static_cast<int>(std::floor(y0)), 0, camera.height);
  b.x1 = std::clamp(static_cast<int>(std::ceil(x1)), 0, camera.width);
  b.y1 = std::clamp(static_cast<int>(std::ceil(y1)), 0, camera.height);
  return b;
}

}  // namespace personerf
