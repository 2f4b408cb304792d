#pragma once

#include "personerf/model.hpp"

#include <cmath>
#include <cstdint>

namespace personerf {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double delta = 1e-8;
  double lr_canonical = 5e-4;
  double lr_app_embedding = 5e-4;
  double lr_pose_embedding = 5e-4;
  double lr_skel = 5e-5;
  double lr_pose = 5e-5;

  double learning_rate(ParamGroup g) const {
    switch (g) {
      case ParamGroup::canonical: return lr_canonical;
      case ParamGroup::app_embedding: return lr_app_embedding;
      case ParamGroup::pose_embedding: return lr_pose_embedding;
      case ParamGroup::skel: return lr_skel;
      case ParamGroup::pose: return lr_pose;
    }
    return 0.0;
  }
};

template <typename Scalar>
struct AdamState {
  Model<Scalar> m;
  Model<Scalar> v;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(const Model<Scalar>& like) : m(like.zeros_like()), v(like.zeros_like()) {}
};

/// Bias-corrected Adam: p -= lr * m_hat / (sqrt(v_hat) + delta).
template <typename Scalar>
void adam_step(Model<Scalar>& params, Model<Scalar>& grads, AdamState<Scalar>& state, const AdamConfig& cfg) {
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
    throw ShapeError("adam: parameter, gradient and moment layouts differ");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const Scalar b1 = static_cast<Scalar>(cfg.beta1), b2 = static_cast<Scalar>(cfg.beta2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].data.size() != g[i].data.size()) throw ShapeError("adam: shape mismatch for " + p[i].name);
    const Scalar lr = static_cast<Scalar>(cfg.learning_rate(p[i].group));
    const Scalar c1 = static_cast<Scalar>(1.0 / bc1), c2 = static_cast<Scalar>(1.0 / bc2);
    const Scalar delta = static_cast<Scalar>(cfg.delta);
    for (std::size_t j = 0; j < p[i].data.size(); ++j) {
      const Scalar gj = g[i].data[j];
      Scalar& mj = m[i].data[j];
      Scalar& vj = v[i].data[j];
      mj = b1 * mj + (Scalar(1) - b1) * gj;
      vj = b2 * vj + (Scalar(1) - b2) * gj * gj;
      p[i].data[j] -= lr * (mj * c1) / (std::sqrt(vj * c2) + delta);
    }
  }
}

template <typename Scalar>
bool all_finite(Model<Scalar>& grads) {
  bool ok = true;
  grads.for_each_tensor([&](TensorRef<Scalar> t) {
    for (Scalar x : t.data)
      if (!std::isfinite(x)) ok = false;
  });
  return ok;
}

struct StageFlags {
  bool pose = false;
  bool geom = false;
  bool opacity = false;
};

/// Iteration delays after which pose refinement, the geometry loss and the
/// opacity loss switch on.
struct StageSchedule {
  std::int64_t pose_delay = 1000;
  std::int64_t geom_delay = 10000;
  std::int64_t opacity_delay = 200000;
  std::int64_t total = 600000;

  static StageSchedule single_network() { return {1000, 10000, 200000, 600000}; }
  static StageSchedule separate_networks() { return {1000, 1000, 50000, 200000}; }
  /// Delays as fractions of `total`.
  static StageSchedule fractions(std::int64_t total, double pose, double geom, double opacity) {
    auto at = [&](double f) { return static_cast<std::int64_t>(std::llround(f * static_cast<double>(total))); };
    return {at(pose), at(geom), at(opacity), total};
  }
  /// 0.5% / 5% / 33% of the run.
  static StageSchedule desk(std::int64_t total) { return fractions(total, 0.005, 0.05, 1.0 / 3.0); }

  /// Same ratios over a different total iteration count.
  StageSchedule scaled_to(std::int64_t new_total) const {
    auto scale = [&](std::int64_t d) {
      return static_cast<std::int64_t>(std::llround(static_cast<double>(d) * new_total / static_cast<double>(total)));
    };
    return {scale(pose_delay), scale(geom_delay), scale(opacity_delay), new_total};
  }

  void validate() const {
    for (auto d : {pose_delay, geom_delay, opacity_delay})
      if (d < 0 || d > total) throw Error("stage delay outside [0, total]");
  }
};

inline StageFlags stage_active(const StageSchedule& s, std::int64_t iteration) {
  return {iteration >= s.pose_delay, iteration >= s.geom_delay, iteration >= s.opacity_delay};
}

}  // namespace personerf
