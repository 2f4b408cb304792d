#pragma once

#include "personerf/config.hpp"
#include "personerf/dataset.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace personerf {

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// What a trained model needs to know about its training data to render
/// space points: rig, per-frame camera/pose/set and the appearance labels.
struct SceneFrame {
  std::string id;
  int set = 0;
  Camera camera;
  BodyPose pose;
};

struct SceneInfo {
  SkeletonRig rig;
  int sets = 0;
  std::vector<std::string> labels;
  std::vector<SceneFrame> frames;
};

SceneInfo scene_info(const Dataset& data);

struct Checkpoint {
  TrainConfig config;
  SceneInfo scene;
  Model<float> model;
  AdamState<float> adam;
  std::int64_t iteration = 0;  // completed iterations
};

/// Fresh model and optimizer state for `config` on `scene`.
Checkpoint initial_checkpoint(const TrainConfig& config, const SceneInfo& scene);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace personerf
