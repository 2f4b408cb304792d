#pragma once

#include "personerf/common.hpp"

#include <cmath>
#include <memory>
#include <vector>

namespace personerf {

struct LossWeights {
  double mse = 0.2;       // lambda1
  double geom = 1.0;      // lambda2
  double opacity = 10.0;  // lambda3
  double epsilon = 1e-3;  // opacity-loss constant
};

/// A scalar loss and its gradient with respect to the loss inputs.
template <typename Scalar>
struct LossValue {
  Scalar value = Scalar(0);
  bool flagged = false;  // set when the loss had no valid support
};

/// Mean squared error over valid pixels and the three channels.
/// `valid` is one flag per pixel; empty means all pixels are valid.
template <typename Scalar>
LossValue<Scalar> loss_mse(const MatX<Scalar>& rendered, const MatX<Scalar>& target, const std::vector<std::uint8_t>& valid,
                           MatX<Scalar>* grad = nullptr) {
  if (rendered.rows() != target.rows() || rendered.cols() != target.cols())
    throw ShapeError("mse inputs have different shapes");
  if (!valid.empty() && valid.size() != static_cast<std::size_t>(rendered.cols()))
    throw ShapeError("mse mask has wrong length");
  LossValue<Scalar> out;
  std::size_t count = 0;
  for (Eigen::Index p = 0; p < rendered.cols(); ++p)
    if (valid.empty() || valid[p]) ++count;
  if (grad) grad->setZero(rendered.rows(), rendered.cols());
  if (count == 0) {
    out.flagged = true;
    return out;
  }
  const Scalar denom = static_cast<Scalar>(count * rendered.rows());
  for (Eigen::Index p = 0; p < rendered.cols(); ++p) {
    if (!valid.empty() && !valid[p]) continue;
    for (Eigen::Index c = 0; c < rendered.rows(); ++c) {
      const Scalar d = rendered(c, p) - target(c, p);
      out.value += d * d;
      if (grad) (*grad)(c, p) = Scalar(2) * d / denom;
    }
  }
  out.value /= denom;
  return out;
}

/// Depth smoothness over a width x height patch (row-major): squared
/// alpha-gated depth differences summed over horizontal and vertical
/// neighbour pairs.
template <typename Scalar>
Scalar loss_geom(const VecX<Scalar>& depth, const VecX<Scalar>& alpha, int width, int height,
                 VecX<Scalar>* grad_depth = nullptr, VecX<Scalar>* grad_alpha = nullptr) {
  if (depth.size() != width * height || alpha.size() != width * height) throw ShapeError("geom inputs have wrong size");
  if (grad_depth) grad_depth->setZero(depth.size());
  if (grad_alpha) grad_alpha->setZero(alpha.size());
  Scalar total(0);
  auto pair = [&](int a, int b) {
    const Scalar diff = depth[a] - depth[b];
    const Scalar q = alpha[a] * alpha[b] * diff;
    total += q * q;
    if (grad_depth) {
      (*grad_depth)[a] += Scalar(2) * q * alpha[a] * alpha[b];
      (*grad_depth)[b] -= Scalar(2) * q * alpha[a] * alpha[b];
    }
    if (grad_alpha) {
      (*grad_alpha)[a] += Scalar(2) * q * alpha[b] * diff;
      (*grad_alpha)[b] += Scalar(2) * q * alpha[a] * diff;
    }
  };
  for (int y = 0; y < height; ++y)
    for (int x = 0; x + 1 < width; ++x) pair(y * width + x, y * width + x + 1);
  for (int y = 0; y + 1 < height; ++y)
    for (int x = 0; x < width; ++x) pair(y * width + x, (y + 1) * width + x);
  return total;
}

/// Binary-alpha prior: sum of log(A + eps) + log(1 - A + eps) - C with
/// C = log(eps) + log(1 + eps), which is zero at A in {0, 1}.
template <typename Scalar>
Scalar loss_opacity(const VecX<Scalar>& alpha, double eps, VecX<Scalar>* grad = nullptr) {
  if (!(eps > 0.0)) throw Error("opacity epsilon must be positive");
  const Scalar e = static_cast<Scalar>(eps);
  const Scalar c = static_cast<Scalar>(std::log(eps) + std::log1p(eps));
  Scalar total(0);
  if (grad) grad->resize(alpha.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    const Scalar a = alpha[i];
    total += std::log(a + e) + std::log(Scalar(1) - a + e) - c;
    if (grad) (*grad)[i] = Scalar(1) / (a + e) - Scalar(1) / (Scalar(1) - a + e);
  }
  return total;
}

/// Image-space perceptual term over a 3 x (width*height) patch.
template <typename Scalar>
class PerceptualLoss {
 public:
  virtual ~PerceptualLoss() = default;
  virtual Scalar evaluate(const MatX<Scalar>& rendered, const MatX<Scalar>& target, int width, int height,
                          MatX<Scalar>* grad_rendered) const = 0;
};

/// Mean absolute difference of horizontal and vertical finite differences,
/// at full resolution and after one 2x2 average pooling. Scales whose side
/// would drop below 2 pixels are skipped.
template <typename Scalar>
class GradientProxyLoss final : public PerceptualLoss<Scalar> {
 public:
  explicit GradientProxyLoss(int scales = 2) : scales_(scales) {}

  Scalar evaluate(const MatX<Scalar>& rendered, const MatX<Scalar>& target, int width, int height,
                  MatX<Scalar>* grad_rendered) const override {
    if (rendered.cols() != width * height || target.cols() != width * height || rendered.rows() != target.rows())
      throw ShapeError("perceptual inputs have wrong size");
    if (width < 2 || height < 2) throw Error("perceptual proxy needs patches of at least 2x2");
    if (grad_rendered) grad_rendered->setZero(rendered.rows(), rendered.cols());

    Scalar total(0);
    MatX<Scalar> r = rendered, t = target;
    int w = width, h = height;
    // factor[s] maps a pooled-pixel gradient back to each contributing input pixel
    std::vector<MatX<Scalar>> grads;
    std::vector<std::pair<int, int>> dims;
    for (int s = 0; s < scales_ && w >= 2 && h >= 2; ++s) {
      MatX<Scalar> g = MatX<Scalar>::Zero(r.rows(), r.cols());
      total += level(r, t, w, h, grad_rendered ? &g : nullptr);
      grads.push_back(std::move(g));
      dims.emplace_back(w, h);
      if (s + 1 < scales_) {
        r = pool(r, w, h);
        t = pool(t, w, h);
        w /= 2;
        h /= 2;
      }
    }
    if (grad_rendered) {
      // unpool each level's gradient back to full resolution
      for (std::size_t s = grads.size(); s-- > 0;) {
        MatX<Scalar> g = grads[s];
        for (std::size_t k = s; k > 0; --k) g = unpool(g, dims[k - 1].first, dims[k - 1].second);
        *grad_rendered += g;
      }
    }
    return total;
  }

 private:
  static Scalar level(const MatX<Scalar>& r, const MatX<Scalar>& t, int w, int h, MatX<Scalar>* grad) {
    const Eigen::Index ch = r.rows();
    const Scalar nx = static_cast<Scalar>(ch * h * (w - 1));
    const Scalar ny = static_cast<Scalar>(ch * (h - 1) * w);
    Scalar sx(0), sy(0);
    for (Eigen::Index c = 0; c < ch; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int p = y * w + x;
          if (x + 1 < w) {
            const Scalar d = (r(c, p + 1) - r(c, p)) - (t(c, p + 1) - t(c, p));
            sx += std::abs(d);
            if (grad) {
              const Scalar s = sign(d) / nx;
              (*grad)(c, p + 1) += s;
              (*grad)(c, p) -= s;
            }
          }
          if (y + 1 < h) {
            const Scalar d = (r(c, p + w) - r(c, p)) - (t(c, p + w) - t(c, p));
            sy += std::abs(d);
            if (grad) {
              const Scalar s = sign(d) / ny;
              (*grad)(c, p + w) += s;
              (*grad)(c, p) -= s;
            }
          }
        }
    return sx / nx + sy / ny;
  }

  static Scalar sign(Scalar v) { return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0)); }

  static MatX<Scalar> pool(const MatX<Scalar>& m, int w, int h) {
    const int pw = w / 2, ph = h / 2;
    MatX<Scalar> out(m.rows(), pw * ph);
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) {
        const int a = 2 * y * w + 2 * x;
        out.col(y * pw + x) = Scalar(0.25) * (m.col(a) + m.col(a + 1) + m.col(a + w) + m.col(a + w + 1));
      }
    return out;
  }

  /// Adjoint of pool for a w x h source.
  static MatX<Scalar> unpool(const MatX<Scalar>& g, int w, int h) {
    const int pw = w / 2, ph = h / 2;
    MatX<Scalar> out = MatX<Scalar>::Zero(g.rows(), w * h);
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) {
        const int a = 2 * y * w + 2 * x;
        const auto v = Scalar(0.25) * g.col(y * pw + x);
        out.col(a) += v;
        out.col(a + 1) += v;
        out.col(a + w) += v;
        out.col(a + w + 1) += v;
      }
    return out;
  }

  int scales_;
};

template <typename Scalar>
Scalar loss_perceptual(const MatX<Scalar>& rendered, const MatX<Scalar>& target, int width, int height,
                       MatX<Scalar>* grad = nullptr) {
  return GradientProxyLoss<Scalar>().evaluate(rendered, target, width, height, grad);
}

struct LossParts {
  double perceptual = 0.0;
  double mse = 0.0;
  double geom = 0.0;
  double opacity = 0.0;
};

struct LossGates {
  bool geom = true;
  bool opacity = true;
};

/// perceptual + l1 * mse + l2 * geom + l3 * opacity; gated-off terms add exactly 0.
inline double loss_total(const LossParts& parts, const LossWeights& w, LossGates gates = {}) {
  double total = parts.perceptual + w.mse * parts.mse;
  if (gates.geom) total += w.geom * parts.geom;
  if (gates.opacity) total += w.opacity * parts.opacity;
  return total;
}

}  // namespace personerf
