#pragma once

#include "personerf/canonical_field.hpp"
#include "personerf/motion_field.hpp"
#include "personerf/skeleton.hpp"

#include <array>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace personerf {

/// Disjoint parameter groups with their own learning rates.
enum class ParamGroup { canonical, skel, pose, app_embedding, pose_embedding };

inline constexpr std::array<ParamGroup, 5> kAllGroups = {ParamGroup::canonical, ParamGroup::skel, ParamGroup::pose,
                                                         ParamGroup::app_embedding, ParamGroup::pose_embedding};

inline std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::canonical: return "canonical";
    case ParamGroup::skel: return "skel";
    case ParamGroup::pose: return "pose";
    case ParamGroup::app_embedding: return "app_embedding";
    case ParamGroup::pose_embedding: return "pose_embedding";
  }
  return "?";
}

struct ModelConfig {
  int bands = 10;
  int app_dim = 256;
  int pose_dim = 16;
  int width = 256;
  int pose_width = 256;
  int pose_depth = 4;
  int grid_resolution = 32;
  double volume_inflation = 1.5;  // canonical box = rest bounds scaled by this
  double density_bias = 0.0;
  double embedding_stddev = 0.01;
};

template <typename Scalar>
struct TensorRef {
  ParamGroup group;
  std::string name;
  std::vector<int> shape;
  std::span<Scalar> data;
};

/// All trainable state: canonical net, motion-weight logits, pose-correction
/// net and the two embedding tables.
template <typename Scalar>
struct Model {
  CanonicalNet<Scalar> net;
  MotionWeightVolume<Scalar> volume;
  PoseCorrectionNet<Scalar> pose_net;
  EmbeddingTables<Scalar> embeddings;

  Model() = default;
  Model(const ModelConfig& cfg, const SkeletonRig& rig, int sets)
      : net(cfg.bands, cfg.app_dim, cfg.width),
        volume(rig.bone_count(), cfg.grid_resolution, rig.rest_bounds().inflated(cfg.volume_inflation)),
        pose_net(rig.bone_count(), cfg.pose_dim, cfg.pose_width, cfg.pose_depth),
        embeddings(sets, cfg.app_dim, cfg.pose_dim) {}

  static Model initialized(const ModelConfig& cfg, const SkeletonRig& rig, int sets, std::uint64_t seed) {
    Model m(cfg, rig, sets);
    std::mt19937_64 rng(seed);
    m.net.init(rng, cfg.density_bias);
    m.volume.init_from_rig(rig);
    m.pose_net.init(rng);
    m.embeddings.init(rng, cfg.embedding_stddev);
    return m;
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    auto tag = [&](ParamGroup g) {
      return [&f, g](const std::string& name, const std::vector<int>& shape, std::span<Scalar> data) {
        f(TensorRef<Scalar>{g, name, shape, data});
      };
    };
    net.for_each_tensor("canonical", tag(ParamGroup::canonical));
    volume.for_each_tensor("skel", tag(ParamGroup::skel));
    pose_net.for_each_tensor("pose", tag(ParamGroup::pose));
    f(TensorRef<Scalar>{ParamGroup::app_embedding, "embedding.appearance",
                        {static_cast<int>(embeddings.appearance.cols()), static_cast<int>(embeddings.appearance.rows())},
                        as_span(embeddings.appearance)});
    f(TensorRef<Scalar>{ParamGroup::pose_embedding, "embedding.pose",
                        {static_cast<int>(embeddings.pose.cols()), static_cast<int>(embeddings.pose.rows())},
                        as_span(embeddings.pose)});
  }

  std::vector<TensorRef<Scalar>> tensors() {
    std::vector<TensorRef<Scalar>> out;
    for_each_tensor([&](TensorRef<Scalar> t) { out.push_back(std::move(t)); });
    return out;
  }

  void set_zero() {
    for_each_tensor([](TensorRef<Scalar> t) { std::fill(t.data.begin(), t.data.end(), Scalar(0)); });
  }

  /// Same shapes, all zeros; used for gradients and optimizer moments.
  Model zeros_like() const {
    Model z = *this;
    z.set_zero();
    return z;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for_each_tensor([&](TensorRef<Scalar> t) { n += t.data.size(); });
    return n;
  }
};

}  // namespace personerf
