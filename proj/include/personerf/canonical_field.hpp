#pragma once

#include "personerf/common.hpp"
#include "personerf/geometry.hpp"
#include "personerf/mlp.hpp"

#include <cmath>
#include <random>
#include <utility>
#include <vector>

namespace personerf {

/// Appearance-conditioned canonical field: 8 ReLU layers over
/// [encoding(x), appearance] with the same input re-injected at the fifth
/// layer, a rectified density head and a sigmoid color head.
///
/// All samples of one batch share the appearance embedding, so its
/// contribution to the two input layers is folded into a per-batch bias.
template <typename Scalar>
struct CanonicalNet {
  static constexpr int kDepth = 8;
  static constexpr int kSkipLayer = 4;

  int bands = 10;
  int embedding_dim = 256;
  int width = 256;
  std::vector<DenseLayer<Scalar>> layers;
  DenseLayer<Scalar> density_head;
  DenseLayer<Scalar> color_head;

  CanonicalNet() = default;
  CanonicalNet(int bands_, int embedding_dim_, int width_)
      : bands(bands_), embedding_dim(embedding_dim_), width(width_) {
    if (bands < 1 || width < 1 || embedding_dim < 0) throw ShapeError("invalid canonical net dimensions");
    const int in = encoding_dim() + embedding_dim;
    for (int l = 0; l < kDepth; ++l) {
      const int fan_in = l == 0 ? in : (l == kSkipLayer ? width + in : width);
      layers.emplace_back(fan_in, width);
    }
    density_head = DenseLayer<Scalar>(width, 1);
    color_head = DenseLayer<Scalar>(width, 3);
  }

  int encoding_dim() const { return 6 * bands; }

  void init(std::mt19937_64& rng, double density_bias = 0.0) {
    for (auto& l : layers) l.init_he(rng);
    density_head.init_he(rng);
    color_head.init_he(rng);
    density_head.weight *= Scalar(0.5);
    color_head.weight *= Scalar(0.5);
    density_head.bias.setConstant(static_cast<Scalar>(density_bias));
  }

  void zero_heads() {
    density_head.set_zero();
    color_head.set_zero();
  }

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    for (int l = 0; l < kDepth; ++l) layers[l].for_each_tensor(prefix + ".layer" + std::to_string(l), f);
    density_head.for_each_tensor(prefix + ".density", f);
    color_head.for_each_tensor(prefix + ".color", f);
  }

  struct Output {
    MatX<Scalar> density;  // 1 x N
    MatX<Scalar> color;    // 3 x N
  };

  struct Cache {
    MatX<Scalar> encoded;                  // E x N
    std::vector<MatX<Scalar>> hidden;      // post-ReLU per layer
    Output out;
  };

  /// Columns of `encoded` are positional encodings of canonical points.
  Output forward(const MatX<Scalar>& encoded, std::span<const Scalar> embedding, Cache* cache = nullptr) const {
    check_embedding(embedding);
    const int e = encoding_dim();
    const Eigen::Map<const VecX<Scalar>> emb(embedding.data(), embedding_dim);
    std::vector<MatX<Scalar>> local;
    std::vector<MatX<Scalar>>& hidden = cache ? cache->hidden : local;
    hidden.assign(kDepth, MatX<Scalar>());

    for (int l = 0; l < kDepth; ++l) {
      const auto& layer = layers[l];
      MatX<Scalar> z;
      if (l == 0) {
        const VecX<Scalar> bias = layer.bias + layer.weight.rightCols(embedding_dim) * emb;
        z.noalias() = layer.weight.leftCols(e) * encoded;
        z.colwise() += bias;
      } else if (l == kSkipLayer) {
        const VecX<Scalar> bias = layer.bias + layer.weight.rightCols(embedding_dim) * emb;
        z.noalias() = layer.weight.leftCols(width) * hidden[l - 1];
        z.noalias() += layer.weight.middleCols(width, e) * encoded;
        z.colwise() += bias;
      } else {
        z.noalias() = layer.weight * hidden[l - 1];
        z.colwise() += layer.bias;
      }
      relu_inplace(z);
      hidden[l] = std::move(z);
    }
    Output out;
    out.density.noalias() = density_head.weight * hidden.back();
    out.density.colwise() += density_head.bias;
    relu_inplace(out.density);
    out.color.noalias() = color_head.weight * hidden.back();
    out.color.colwise() += color_head.bias;
    out.color = (Scalar(1) + (-out.color.array()).exp()).inverse().matrix();
    if (cache) {
      cache->encoded = encoded;
      cache->out = out;
    }
    return out;
  }

  /// Accumulates gradients. `grads` (parameters), `grad_encoded` and
  /// `grad_embedding` are each optional.
  void backward(const Cache& cache, std::span<const Scalar> embedding, const MatX<Scalar>& grad_density,
                const MatX<Scalar>& grad_color, CanonicalNet* grads, MatX<Scalar>* grad_encoded,
                std::span<Scalar> grad_embedding) const {
    const int e = encoding_dim();
    const Eigen::Map<const VecX<Scalar>> emb(embedding.data(), embedding_dim);
    const bool want_emb = !grad_embedding.empty();
    const auto& hidden = cache.hidden;

    MatX<Scalar> dz_density = (cache.out.density.array() > Scalar(0)).select(grad_density, Scalar(0));
    MatX<Scalar> dz_color =
        (grad_color.array() * cache.out.color.array() * (Scalar(1) - cache.out.color.array())).matrix();
    if (grads) {
      grads->density_head.weight.noalias() += dz_density * hidden.back().transpose();
      grads->density_head.bias += dz_density.rowwise().sum();
      grads->color_head.weight.noalias() += dz_color * hidden.back().transpose();
      grads->color_head.bias += dz_color.rowwise().sum();
    }
    MatX<Scalar> g;
    g.noalias() = density_head.weight.transpose() * dz_density;
    g.noalias() += color_head.weight.transpose() * dz_color;

    if (grad_encoded) grad_encoded->setZero(e, cache.encoded.cols());
    for (int l = kDepth - 1; l >= 0; --l) {
      relu_backward_inplace(g, hidden[l]);
      const auto& layer = layers[l];
      const VecX<Scalar> g_sum = g.rowwise().sum();
      if (l == 0 || l == kSkipLayer) {
        const int offset = l == 0 ? 0 : width;
        if (grads) {
          auto& gl = grads->layers[l];
          if (l == kSkipLayer) gl.weight.leftCols(width).noalias() += g * hidden[l - 1].transpose();
          gl.weight.middleCols(offset, e).noalias() += g * cache.encoded.transpose();
          gl.weight.rightCols(embedding_dim).noalias() += g_sum * emb.transpose();
          gl.bias += g_sum;
        }
        if (grad_encoded) grad_encoded->noalias() += layer.weight.middleCols(offset, e).transpose() * g;
        if (want_emb) {
          Eigen::Map<VecX<Scalar>> ge(grad_embedding.data(), embedding_dim);
          ge.noalias() += layer.weight.rightCols(embedding_dim).transpose() * g_sum;
        }
        if (l == kSkipLayer) g = layer.weight.leftCols(width).transpose() * g;
      } else {
        if (grads) {
          grads->layers[l].weight.noalias() += g * hidden[l - 1].transpose();
          grads->layers[l].bias += g_sum;
        }
        g = layer.weight.transpose() * g;
      }
    }
  }

 private:
  void check_embedding(std::span<const Scalar> embedding) const {
    if (static_cast<int>(embedding.size()) != embedding_dim)
      throw ShapeError("appearance embedding has length " + std::to_string(embedding.size()) + ", expected " +
                       std::to_string(embedding_dim));
  }
};

template <typename Scalar>
struct FieldSample {
  Vec3<Scalar> color;
  Scalar density;
};

/// Single-point evaluation of the canonical field.
template <typename Scalar>
FieldSample<Scalar> query_field(const CanonicalNet<Scalar>& net, const Vec3<Scalar>& x_can,
                                std::span<const Scalar> app_embedding) {
  MatX<Scalar> enc(net.encoding_dim(), 1);
  positional_encoding<Scalar>(x_can, net.bands, enc.data());
  const auto out = net.forward(enc, app_embedding);
  return {out.color.col(0), out.density(0, 0)};
}

/// Per-appearance-set embeddings, one column per set.
template <typename Scalar>
struct EmbeddingTables {
  MatX<Scalar> appearance;  // app_dim x S
  MatX<Scalar> pose;        // pose_dim x S

  EmbeddingTables() = default;
  EmbeddingTables(int sets, int app_dim, int pose_dim)
      : appearance(MatX<Scalar>::Zero(app_dim, sets)), pose(MatX<Scalar>::Zero(pose_dim, sets)) {
    if (sets < 1) throw ShapeError("need at least one appearance set");
  }

  int set_count() const { return static_cast<int>(appearance.cols()); }

  void init(std::mt19937_64& rng, double stddev = 0.01) {
    for (Eigen::Index i = 0; i < appearance.size(); ++i)
      appearance.data()[i] = static_cast<Scalar>(stddev * gaussian(rng));
    for (Eigen::Index i = 0; i < pose.size(); ++i) pose.data()[i] = static_cast<Scalar>(stddev * gaussian(rng));
  }

  std::span<const Scalar> app(int set) const {
    check(set);
    return {appearance.col(set).data(), static_cast<std::size_t>(appearance.rows())};
  }
  std::span<const Scalar> pose_vec(int set) const {
    check(set);
    return {pose.col(set).data(), static_cast<std::size_t>(pose.rows())};
  }
  std::span<Scalar> app_mut(int set) {
    check(set);
    return {appearance.col(set).data(), static_cast<std::size_t>(appearance.rows())};
  }
  std::span<Scalar> pose_mut(int set) {
    check(set);
    return {pose.col(set).data(), static_cast<std::size_t>(pose.rows())};
  }

  void check(int set) const {
    if (set < 0 || set >= set_count())
      throw ShapeError("appearance set index " + std::to_string(set) + " out of range [0, " +
                       std::to_string(set_count()) + ")");
  }
};

template <typename Scalar>
std::pair<VecX<Scalar>, VecX<Scalar>> lookup_embeddings(const EmbeddingTables<Scalar>& tables, int appearance_index,
                                                        int pose_index) {
  const auto a = tables.app(appearance_index);
  const auto p = tables.pose_vec(pose_index);
  return {Eigen::Map<const VecX<Scalar>>(a.data(), a.size()), Eigen::Map<const VecX<Scalar>>(p.data(), p.size())};
}

}  // namespace personerf
