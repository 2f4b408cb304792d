#pragma once

#include "personerf/common.hpp"
#include "personerf/geometry.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace personerf {

inline double gaussian(std::mt19937_64& rng) {
  // Box-Muller; one draw per call keeps the stream position easy to reason about.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Fully connected layer y = W x + b, batched with one sample per column.
template <typename Scalar>
struct DenseLayer {
  MatX<Scalar> weight;  // out x in
  VecX<Scalar> bias;    // out

  DenseLayer() = default;
  DenseLayer(int in, int out) : weight(MatX<Scalar>::Zero(out, in)), bias(VecX<Scalar>::Zero(out)) {}

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }

  /// He-uniform weights, zero bias.
  void init_he(std::mt19937_64& rng, int fan_in = -1) {
    const double limit = std::sqrt(6.0 / (fan_in > 0 ? fan_in : in_dim()));
    for (Eigen::Index i = 0; i < weight.size(); ++i)
      weight.data()[i] = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * limit);
    bias.setZero();
  }

  void set_zero() {
    weight.setZero();
    bias.setZero();
  }

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    f(prefix + ".weight", std::vector<int>{out_dim(), in_dim()}, as_span(weight));
    f(prefix + ".bias", std::vector<int>{out_dim()}, as_span(bias));
  }
};

template <typename Scalar>
void relu_inplace(MatX<Scalar>& m) {
  m = m.cwiseMax(Scalar(0));
}

/// Zeroes upstream gradient where the post-activation value is not positive.
template <typename Scalar>
void relu_backward_inplace(MatX<Scalar>& grad, const MatX<Scalar>& activated) {
  grad = (activated.array() > Scalar(0)).select(grad, Scalar(0));
}

/// Plain ReLU MLP with a linear output layer.
template <typename Scalar>
struct Mlp {
  std::vector<DenseLayer<Scalar>> layers;

  struct Cache {
    std::vector<MatX<Scalar>> activations;  // activations[0] = input
  };

  Mlp() = default;
  Mlp(int in, int width, int depth, int out) {
    if (depth < 1) throw Error("MLP needs at least one layer");
    int prev = in;
    for (int l = 0; l < depth; ++l) {
      const int next = (l + 1 == depth) ? out : width;
      layers.emplace_back(prev, next);
      prev = next;
    }
  }

  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }

  MatX<Scalar> forward(const MatX<Scalar>& input, Cache* cache = nullptr) const {
    MatX<Scalar> h = input;
    if (cache) {
      cache->activations.clear();
      cache->activations.push_back(h);
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      MatX<Scalar> z = layers[l].weight * h;
      z.colwise() += layers[l].bias;
      if (l + 1 < layers.size()) relu_inplace(z);
      h = std::move(z);
      if (cache) cache->activations.push_back(h);
    }
    return h;
  }

  /// Accumulates parameter gradients into `grads`; returns d(loss)/d(input).
  MatX<Scalar> backward(const Cache& cache, const MatX<Scalar>& grad_out, Mlp* grads) const {
    MatX<Scalar> g = grad_out;
    for (std::size_t l = layers.size(); l-- > 0;) {
      if (l + 1 < layers.size()) relu_backward_inplace(g, cache.activations[l + 1]);
      if (grads) {
        grads->layers[l].weight.noalias() += g * cache.activations[l].transpose();
        grads->layers[l].bias += g.rowwise().sum();
      }
      g = layers[l].weight.transpose() * g;
    }
    return g;
  }

  template <typename F>
  void for_each_tensor(const std::string& prefix, F&& f) {
    for (std::size_t l = 0; l < layers.size(); ++l)
      layers[l].for_each_tensor(prefix + ".layer" + std::to_string(l), f);
  }
};

}  // namespace personerf
