#include "personerf/config.hpp"

namespace personerf {

using nlohmann::json;

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.model.bands = 10;
  c.model.app_dim = 256;
  c.model.pose_dim = 16;
  c.model.width = 64;
  c.model.pose_width = 64;
  c.model.pose_depth = 4;
  c.model.grid_resolution = 16;
  c.model.density_bias = 10.0;
  c.step.samples_per_ray = 64;
  c.step.seen_patches = 2;
  c.step.seen_patch_size = 16;
  c.step.unseen_patches = 4;
  c.step.unseen_patch_size = 8;
  c.step.min_foreground = 1e-3;
  // the raw-sum depth loss at weight 1 empties the volume at this scale
  c.step.weights.geom = 0.01;
  // at weight 10 its 1/eps gradients swamp the color head under Adam
  c.step.weights.opacity = 1e-3;
  c.iterations = 20000;
  c.schedule = StageSchedule::desk(c.iterations);
  return c;
}

void TrainConfig::validate() const {
  schedule.validate();
  if (iterations < 0) throw Error("iterations must be non-negative");
  if (model.bands < 1 || model.width < 1 || model.grid_resolution < 2) throw Error("invalid model size");
  if (step.samples_per_ray < 1) throw Error("samples_per_ray must be positive");
  if (step.seen_patches < 1 || step.seen_patch_size < 2) throw Error("need at least one seen patch of side >= 2");
  if (step.unseen_patches < 0 || (step.unseen_patches > 0 && step.unseen_patch_size < 2))
    throw Error("unseen patches need side >= 2");
  for (double w : {step.weights.mse, step.weights.geom, step.weights.opacity})
    if (w < 0.0) throw Error("loss weights must be non-negative");
  if (!(step.weights.epsilon > 0.0)) throw Error("opacity epsilon must be positive");
}

json config_to_json(const TrainConfig& c) {
  return {
      {"model",
       {{"bands", c.model.bands},
        {"app_dim", c.model.app_dim},
        {"pose_dim", c.model.pose_dim},
        {"width", c.model.width},
        {"pose_width", c.model.pose_width},
        {"pose_depth", c.model.pose_depth},
        {"grid_resolution", c.model.grid_resolution},
        {"volume_inflation", c.model.volume_inflation},
        {"density_bias", c.model.density_bias},
        {"embedding_stddev", c.model.embedding_stddev}}},
      {"step",
       {{"samples_per_ray", c.step.samples_per_ray},
        {"seen_patches", c.step.seen_patches},
        {"seen_patch_size", c.step.seen_patch_size},
        {"unseen_patches", c.step.unseen_patches},
        {"unseen_patch_size", c.step.unseen_patch_size},
        {"bounds_inflation", c.step.bounds_inflation},
        {"min_foreground", c.step.min_foreground},
        {"use_perceptual", c.step.use_perceptual},
        {"stop_pose_gradient_from_geom", c.step.stop_pose_gradient_from_geom},
        {"up", {c.step.up.x(), c.step.up.y(), c.step.up.z()}},
        {"lambda_mse", c.step.weights.mse},
        {"lambda_geom", c.step.weights.geom},
        {"lambda_opacity", c.step.weights.opacity},
        {"epsilon", c.step.weights.epsilon}}},
      {"adam",
       {{"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"delta", c.adam.delta},
        {"lr_canonical", c.adam.lr_canonical},
        {"lr_app_embedding", c.adam.lr_app_embedding},
        {"lr_pose_embedding", c.adam.lr_pose_embedding},
        {"lr_skel", c.adam.lr_skel},
        {"lr_pose", c.adam.lr_pose}}},
      {"schedule",
       {{"pose_delay", c.schedule.pose_delay},
        {"geom_delay", c.schedule.geom_delay},
        {"opacity_delay", c.schedule.opacity_delay},
        {"total", c.schedule.total}}},
      {"iterations", c.iterations},
      {"seed", c.seed},
      {"checkpoint_every", c.checkpoint_every},
      {"log_every", c.log_every},
  };
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

TrainConfig config_from_json(const json& j, const TrainConfig& base) {
  TrainConfig c = base;
  if (j.contains("model")) {
    const json& m = j["model"];
    read(m, "bands", c.model.bands);
    read(m, "app_dim", c.model.app_dim);
    read(m, "pose_dim", c.model.pose_dim);
    read(m, "width", c.model.width);
    read(m, "pose_width", c.model.pose_width);
    read(m, "pose_depth", c.model.pose_depth);
    read(m, "grid_resolution", c.model.grid_resolution);
    read(m, "volume_inflation", c.model.volume_inflation);
    read(m, "density_bias", c.model.density_bias);
    read(m, "embedding_stddev", c.model.embedding_stddev);
  }
  if (j.contains("step")) {
    const json& s = j["step"];
    read(s, "samples_per_ray", c.step.samples_per_ray);
    read(s, "seen_patches", c.step.seen_patches);
    read(s, "seen_patch_size", c.step.seen_patch_size);
    read(s, "unseen_patches", c.step.unseen_patches);
    read(s, "unseen_patch_size", c.step.unseen_patch_size);
    read(s, "bounds_inflation", c.step.bounds_inflation);
    read(s, "min_foreground", c.step.min_foreground);
    read(s, "use_perceptual", c.step.use_perceptual);
    read(s, "stop_pose_gradient_from_geom", c.step.stop_pose_gradient_from_geom);
    if (s.contains("up")) {
      const auto up = s["up"].get<std::vector<double>>();
      if (up.size() != 3) throw Error("step.up needs 3 components");
      c.step.up = Vec3d(up[0], up[1], up[2]).normalized();
    }
    read(s, "lambda_mse", c.step.weights.mse);
    read(s, "lambda_geom", c.step.weights.geom);
    read(s, "lambda_opacity", c.step.weights.opacity);
    read(s, "epsilon", c.step.weights.epsilon);
  }
  if (j.contains("adam")) {
    const json& a = j["adam"];
    read(a, "beta1", c.adam.beta1);
    read(a, "beta2", c.adam.beta2);
    read(a, "delta", c.adam.delta);
    read(a, "lr_canonical", c.adam.lr_canonical);
    read(a, "lr_app_embedding", c.adam.lr_app_embedding);
    read(a, "lr_pose_embedding", c.adam.lr_pose_embedding);
    read(a, "lr_skel", c.adam.lr_skel);
    read(a, "lr_pose", c.adam.lr_pose);
  }
  read(j, "iterations", c.iterations);
  // a new iteration count keeps the base schedule's proportions unless one is given
  if (j.contains("iterations") && !j.contains("schedule")) c.schedule = base.schedule.scaled_to(c.iterations);
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    read(s, "pose_delay", c.schedule.pose_delay);
    read(s, "geom_delay", c.schedule.geom_delay);
    read(s, "opacity_delay", c.schedule.opacity_delay);
    read(s, "total", c.schedule.total);
  }
  read(j, "seed", c.seed);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "log_every", c.log_every);
  c.validate();
  return c;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t config_hash(const TrainConfig& cfg) {
  json j = config_to_json(cfg);
  // run length and bookkeeping do not change the trajectory
  j.erase("iterations");
  j.erase("checkpoint_every");
  j.erase("log_every");
  j["schedule"].erase("total");
  return fnv1a(j.dump());
}

}  // namespace personerf
