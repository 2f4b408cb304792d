#pragma once

#include "personerf/common.hpp"
#include "personerf/geometry.hpp"
#include "personerf/skeleton.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace personerf {

/// Canonical grid of K foreground skinning-weight channels plus one background
/// channel, stored as logits and normalized per node with a softmax.
template <typename Scalar>
struct MotionWeightVolume {
  int bone_count = 0;
  int resolution = 0;
  Aabb box;
  MatX<Scalar> logits;  // (K+1) x R^3, background last

  MotionWeightVolume() = default;
  MotionWeightVolume(int bones, int res, const Aabb& bounds)
      : bone_count(bones), resolution(res), box(bounds), logits(MatX<Scalar>::Zero(bones + 1, res * res * res)) {
    if (bones < 1) throw ShapeError("weight volume needs at least one bone");
    if (res < 2) throw ShapeError("weight volume resolution must be at least 2");
  }

  int channels() const { return bone_count + 1; }
  int node_count() const { return resolution * resolution * resolution; }
  int node_index(int ix, int iy, int iz) const { return ix + resolution * (iy + resolution * iz); }

  Vec3d node_position(int ix, int iy, int iz) const {
    const Vec3d u(ix, iy, iz);
    return box.min + (box.extent().array() * u.array() / double(resolution - 1)).matrix();
  }

  /// Capsule-distance prior: channel k peaks on rest bone k and falls off
  /// linearly with distance in units of the bone radius.
  void init_from_rig(const SkeletonRig& rig, double falloff = 1.0, double peak = 8.0) {
    for (int iz = 0; iz < resolution; ++iz)
      for (int iy = 0; iy < resolution; ++iy)
        for (int ix = 0; ix < resolution; ++ix) {
          const Vec3d p = node_position(ix, iy, iz);
          const int n = node_index(ix, iy, iz);
          for (int k = 0; k < bone_count; ++k) {
            const double d = point_segment_distance(p, rig.rest_head[k], rig.rest_tail[k]);
            logits(k, n) = static_cast<Scalar>(peak * (1.0 - d / (falloff * rig.bone_radius[k])));
          }
          logits(bone_count, n) = Scalar(0);
        }
  }

  /// Channel softmax at every node.
  MatX<Scalar> probabilities() const {
    MatX<Scalar> p(channels(), node_count());
    for (int n = 0; n < node_count(); ++n) {
      const Scalar m = logits.col(n).maxCoeff();
      p.col(n) = (logits.col(n).array() - m).exp();
      p.col(n) /= p.col(n).sum();
    }
    return p;
  }

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    f(prefix + ".logits", std::vector<int>{resolution, resolution, resolution, channels()}, as_span(logits));
  }

  static double point_segment_distance(const Vec3d& p, const Vec3d& a, const Vec3d& b) {
    const Vec3d ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
  }
};

/// Trilinear footprint of a point: 8 node indices and their weights, plus the
/// derivative of each weight with respect to the world-space position.
template <typename Scalar>
struct TrilinearStencil {
  bool inside = false;
  std::array<int, 8> node{};
  std::array<Scalar, 8> weight{};
  std::array<Vec3<Scalar>, 8> dweight{};
};

template <typename Scalar>
TrilinearStencil<Scalar> trilinear_stencil(const MotionWeightVolume<Scalar>& vol, const Vec3<Scalar>& x,
                                           bool with_derivative = false) {
  TrilinearStencil<Scalar> s;
  const int r = vol.resolution;
  Vec3<Scalar> frac;
  std::array<int, 3> base{};
  Vec3<Scalar> scale;
  for (int d = 0; d < 3; ++d) {
    const Scalar lo = static_cast<Scalar>(vol.box.min[d]);
    const Scalar hi = static_cast<Scalar>(vol.box.max[d]);
    scale[d] = Scalar(r - 1) / (hi - lo);
    const Scalar u = (x[d] - lo) * scale[d];
    if (!(u >= Scalar(0) && u <= Scalar(r - 1))) return s;
    int i0 = static_cast<int>(std::floor(u));
    i0 = std::clamp(i0, 0, r - 2);
    base[d] = i0;
    frac[d] = u - Scalar(i0);
  }
  s.inside = true;
  for (int c = 0; c < 8; ++c) {
    const int bx = c & 1, by = (c >> 1) & 1, bz = (c >> 2) & 1;
    const Scalar wx = bx ? frac.x() : Scalar(1) - frac.x();
    const Scalar wy = by ? frac.y() : Scalar(1) - frac.y();
    const Scalar wz = bz ? frac.z() : Scalar(1) - frac.z();
    s.node[c] = vol.node_index(base[0] + bx, base[1] + by, base[2] + bz);
    s.weight[c] = wx * wy * wz;
    if (with_derivative) {
      const Scalar sx = bx ? Scalar(1) : Scalar(-1);
      const Scalar sy = by ? Scalar(1) : Scalar(-1);
      const Scalar sz = bz ? Scalar(1) : Scalar(-1);
      s.dweight[c] = Vec3<Scalar>(sx * wy * wz * scale.x(), wx * sy * wz * scale.y(), wx * wy * sz * scale.z());
    }
  }
  return s;
}

/// Softmaxed channel weights at a continuous canonical point. Points outside
/// the volume are pure background.
template <typename Scalar>
VecX<Scalar> sample_weights(const MotionWeightVolume<Scalar>& vol, const Vec3<Scalar>& x) {
  VecX<Scalar> out = VecX<Scalar>::Zero(vol.channels());
  const auto s = trilinear_stencil(vol, x);
  if (!s.inside) {
    out[vol.bone_count] = Scalar(1);
    return out;
  }
  for (int c = 0; c < 8; ++c) {
    const auto l = vol.logits.col(s.node[c]);
    const Scalar m = l.maxCoeff();
    VecX<Scalar> p = (l.array() - m).exp();
    p /= p.sum();
    out += s.weight[c] * p;
  }
  return out;
}

/// Bases cast to the working scalar type.
template <typename Scalar>
struct BasesT {
  std::vector<Mat3<Scalar>> rotation;
  std::vector<Vec3<Scalar>> translation;

  BasesT() = default;
  explicit BasesT(const std::vector<RigidTransform>& bases) {
    for (const auto& b : bases) {
      rotation.push_back(b.rotation.cast<Scalar>());
      translation.push_back(b.translation.cast<Scalar>());
    }
  }
  int size() const { return static_cast<int>(rotation.size()); }
};

/// Gradient with respect to the bases, same 12-per-bone layout as BasesJacobian.
template <typename Scalar>
struct BasesGrad {
  std::vector<Mat3<Scalar>> rotation;
  std::vector<Vec3<Scalar>> translation;

  explicit BasesGrad(int k = 0) : rotation(k, Mat3<Scalar>::Zero()), translation(k, Vec3<Scalar>::Zero()) {}

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd g(12 * rotation.size());
    for (std::size_t i = 0; i < rotation.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) g[12 * i + 3 * a + b] = static_cast<double>(rotation[i](a, b));
        g[12 * i + 9 + a] = static_cast<double>(translation[i][a]);
      }
    }
    return g;
  }
};

/// Evaluates the skinning warp against precomputed node probabilities.
template <typename Scalar>
class WarpField {
 public:
  WarpField(const MotionWeightVolume<Scalar>& vol, const BasesT<Scalar>& bases)
      : vol_(vol), bases_(bases), prob_(vol.probabilities()) {
    if (bases.size() != vol.bone_count) throw ShapeError("bases count does not match weight volume");
  }

  int bone_count() const { return vol_.bone_count; }
  const MatX<Scalar>& probabilities() const { return prob_; }

  struct Result {
    Vec3<Scalar> x_can;
    Scalar foreground;
  };

  /// Foreground weight of bone i at its candidate point y_i = R_i x + t_i.
  Scalar bone_weight(int i, const Vec3<Scalar>& y) const {
    const auto s = trilinear_stencil(vol_, y);
    if (!s.inside) return Scalar(0);
    Scalar w(0);
    for (int c = 0; c < 8; ++c) w += s.weight[c] * prob_(i, s.node[c]);
    return w;
  }

  /// f = sum_i w_i(y_i); x_can = sum_i (w_i / f) y_i. f = 0 leaves x unchanged.
  Result warp(const Vec3<Scalar>& x) const {
    Result r{Vec3<Scalar>::Zero(), Scalar(0)};
    for (int i = 0; i < vol_.bone_count; ++i) {
      const Vec3<Scalar> y = bases_.rotation[i] * x + bases_.translation[i];
      const Scalar w = bone_weight(i, y);
      r.foreground += w;
      r.x_can += w * y;
    }
    if (r.foreground > Scalar(0))
      r.x_can /= r.foreground;
    else
      r.x_can = x;
    return r;
  }

  /// Backpropagates (dL/dx_can, dL/df) at observed point x. Either output may be null.
  void backward(const Vec3<Scalar>& x, const Vec3<Scalar>& grad_x_can, Scalar grad_f, MatX<Scalar>* grad_prob,
                BasesGrad<Scalar>* grad_bases) const {
    const Result fwd = warp(x);
    if (!(fwd.foreground > Scalar(0))) return;
    const Scalar f = fwd.foreground;
    for (int i = 0; i < vol_.bone_count; ++i) {
      const Vec3<Scalar> y = bases_.rotation[i] * x + bases_.translation[i];
      const auto s = trilinear_stencil(vol_, y, grad_bases != nullptr);
      if (!s.inside) continue;
      Scalar w(0);
      Vec3<Scalar> dw = Vec3<Scalar>::Zero();
      for (int c = 0; c < 8; ++c) {
        w += s.weight[c] * prob_(i, s.node[c]);
        if (grad_bases) dw += s.dweight[c] * prob_(i, s.node[c]);
      }
      const Scalar g_w = grad_x_can.dot(y - fwd.x_can) / f + grad_f;
      if (grad_prob)
        for (int c = 0; c < 8; ++c) (*grad_prob)(i, s.node[c]) += g_w * s.weight[c];
      if (grad_bases) {
        const Vec3<Scalar> g_y = g_w * dw + grad_x_can * (w / f);
        grad_bases->rotation[i] += g_y * x.transpose();
        grad_bases->translation[i] += g_y;
      }
    }
  }

  /// Chain rule through the per-node softmax.
  static void probabilities_to_logits(const MatX<Scalar>& prob, const MatX<Scalar>& grad_prob,
                                      MatX<Scalar>& grad_logits) {
    for (Eigen::Index n = 0; n < prob.cols(); ++n) {
      const Scalar dot = prob.col(n).dot(grad_prob.col(n));
      grad_logits.col(n).array() += prob.col(n).array() * (grad_prob.col(n).array() - dot);
    }
  }

 private:
  const MotionWeightVolume<Scalar>& vol_;
  const BasesT<Scalar>& bases_;
  MatX<Scalar> prob_;
};

/// Single-point warp: returns (x_can, f).
template <typename Scalar>
typename WarpField<Scalar>::Result warp_to_canonical(const MotionWeightVolume<Scalar>& vol,
                                                     const std::vector<RigidTransform>& bases,
                                                     const Vec3<Scalar>& x_obs) {
  const BasesT<Scalar> b(bases);
  return WarpField<Scalar>(vol, b).warp(x_obs);
}

}  // namespace personerf
