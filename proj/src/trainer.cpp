#include "personerf/trainer.hpp"

#include <fstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace personerf {

namespace fs = std::filesystem;
using nlohmann::json;

json record_to_json(const IterationRecord& r) {
  return {{"iteration", r.iteration},
          {"frame", r.frame},
          {"stages", {{"pose", r.stages.pose}, {"geom", r.stages.geom}, {"opacity", r.stages.opacity}}},
          {"mse", r.result.parts.mse},
          {"perceptual", r.result.parts.perceptual},
          {"geom", r.result.parts.geom},
          {"opacity", r.result.parts.opacity},
          {"total", r.result.total}};
}

void check_scene_matches(const SceneInfo& scene, const Dataset& data) {
  if (static_cast<int>(scene.frames.size()) != data.size() || scene.sets != data.sets ||
      scene.rig.bone_count() != data.rig.bone_count())
    throw TrainingError("checkpoint was trained on a different dataset layout");
}

Trainer::Trainer(const Dataset& data, Checkpoint start) : data_(data), state_(std::move(start)) {
  state_.config.validate();
  check_scene_matches(state_.scene, data);
  for (const auto& f : data.frames)
    if (f.image.cols() != f.camera.width * f.camera.height) throw TrainingError("dataset was loaded without pixels");
  grads_ = state_.model.zeros_like();
}

IterationRecord Trainer::step() {
  const TrainConfig& cfg = state_.config;
  IterationRecord rec;
  rec.iteration = state_.iteration;
  rec.stages = stage_active(cfg.schedule, rec.iteration);

  std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(rec.iteration)));
  rec.frame = static_cast<int>(rng() % static_cast<std::uint64_t>(data_.size()));
  const DatasetFrame& f = data_.frames[rec.frame];
  FrameView<float> view;
  view.camera = &f.camera;
  view.pose = &f.pose;
  view.set = f.set;
  view.image = &f.image;
  view.valid = &f.valid;
  view.subject_box = f.subject_box;
  const StepPlan plan = plan_step(rng, data_.rig, view, cfg.step);

  grads_.set_zero();
  rec.result = evaluate_step<float>(state_.model, data_.rig, view, plan, cfg.step, rec.stages, &grads_);
  if (!std::isfinite(rec.result.total) || !all_finite(grads_))
    throw TrainingError("non-finite loss or gradient at iteration " + std::to_string(rec.iteration));
  adam_step(state_.model, grads_, state_.adam, cfg.adam);
  ++state_.iteration;
  return rec;
}

namespace {

// Keeps the log lines of iterations before `iteration`.
void truncate_log(const fs::path& path, std::int64_t iteration) {
  if (!fs::exists(path)) return;
  std::vector<std::string> kept;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("iteration")) continue;
      if (j["iteration"].get<std::int64_t>() < iteration) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
}

// Each step allocates and frees large network batches; keeping them off
// mmap avoids a page-fault storm on every iteration.
void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace

Checkpoint run_training(const Dataset& data, Checkpoint start, const TrainOptions& options) {
  tune_allocator();
  fs::create_directories(options.out_dir);
  const fs::path log_path = options.out_dir / "train_log.ndjson";
  if (start.iteration == 0)
    std::ofstream(log_path, std::ios::trunc);
  else
    truncate_log(log_path, start.iteration);

  Trainer trainer(data, std::move(start));
  std::ofstream log(log_path, std::ios::app);
  const TrainConfig& cfg = trainer.state().config;
  const std::int64_t end = options.stop_at >= 0 ? std::min(options.stop_at, cfg.iterations) : cfg.iterations;
  while (trainer.state().iteration < end) {
    IterationRecord rec;
    try {
      rec = trainer.step();
    } catch (const TrainingError&) {
      // parameters are untouched when a step is rejected
      save_checkpoint(options.out_dir / ("debug-" + std::to_string(trainer.state().iteration) + ".ckpt"),
                      trainer.state());
      throw;
    }
    if (cfg.log_every > 0 && rec.iteration % cfg.log_every == 0) log << record_to_json(rec).dump() << '\n';
    if (options.on_iteration) options.on_iteration(rec);
    const std::int64_t done = trainer.state().iteration;
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.iterations) {
      log.flush();
      save_checkpoint(options.out_dir / ("checkpoint-" + std::to_string(done) + ".ckpt"), trainer.state());
    }
  }
  log.flush();
  const bool finished = trainer.done();
  save_checkpoint(options.out_dir / (finished ? std::string("model.ckpt")
                                              : "checkpoint-" + std::to_string(trainer.state().iteration) + ".ckpt"),
                  trainer.state());
  return trainer.state();
}

}  // namespace personerf
