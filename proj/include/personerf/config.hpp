#pragma once

#include "personerf/model.hpp"
#include "personerf/optim.hpp"
#include "personerf/train_step.hpp"

#include <json.hpp>

#include <string>

namespace personerf {

struct TrainConfig {
  ModelConfig model;
  StepConfig step;
  AdamConfig adam;
  StageSchedule schedule;
  std::int64_t iterations = 20000;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_every = 5000;  // 0 disables periodic checkpoints
  std::int64_t log_every = 1;

  /// Laptop-sized defaults used by the CLI and the acceptance runs.
  static TrainConfig desk();

  void validate() const;
};

nlohmann::json config_to_json(const TrainConfig& cfg);

/// Missing keys keep the values of `base`.
TrainConfig config_from_json(const nlohmann::json& j, const TrainConfig& base = TrainConfig::desk());

/// FNV-1a of the settings that change the optimization trajectory.
std::uint64_t config_hash(const TrainConfig& cfg);

std::uint64_t fnv1a(std::string_view bytes);

}  // namespace personerf
