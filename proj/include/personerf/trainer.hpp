#pragma once

#include "personerf/checkpoint.hpp"

#include <functional>

namespace personerf {

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct IterationRecord {
  std::int64_t iteration = 0;
  int frame = 0;
  StageFlags stages;
  StepResult result;
};

nlohmann::json record_to_json(const IterationRecord& r);

/// One logical training sequence. Iteration i draws all of its randomness
/// from mix_seed(seed, i), so a run can stop and resume anywhere.
class Trainer {
 public:
  Trainer(const Dataset& data, Checkpoint start);

  IterationRecord step();
  bool done() const { return state_.iteration >= state_.config.iterations; }
  const Checkpoint& state() const { return state_; }

 private:
  const Dataset& data_;
  Checkpoint state_;
  Model<float> grads_;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  std::int64_t stop_at = -1;  // stop (and save) after this many iterations; -1 runs to the end
  std::function<void(const IterationRecord&)> on_iteration;
};

/// Runs `start` forward, writing out_dir/train_log.ndjson, periodic
/// out_dir/checkpoint-<iter>.ckpt files and out_dir/model.ckpt at the end.
/// On resume the log is cut back to the checkpoint's iteration first.
/// A non-finite loss or gradient saves out_dir/debug-<iter>.ckpt and throws.
Checkpoint run_training(const Dataset& data, Checkpoint start, const TrainOptions& options);

/// Checks that a checkpoint was trained on data with this layout.
void check_scene_matches(const SceneInfo& scene, const Dataset& data);

}  // namespace personerf
