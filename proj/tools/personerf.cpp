#include "personerf/evaluate.hpp"
#include "personerf/service.hpp"
#include "personerf/space.hpp"
#include "personerf/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace personerf;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  json config_section(const char* key) const {
    if (config_path.empty()) return json::object();
    const json j = read_json_file(config_path);
    return j.contains(key) ? j.at(key) : j;
  }
};

std::pair<int, int> parse_size(const std::string& text, const char* what) {
  int a = 0, b = 0;
  char x = 0;
  if (std::sscanf(text.c_str(), "%d%c%d", &a, &x, &b) != 3 || (x != 'x' && x != 'X') || a < 1 || b < 1)
    throw CLI::ValidationError(what, "expected WxH, e.g. 8x8");
  return {a, b};
}

void write_image(const fs::path& path, const Image8& img) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_png(path, img);
  std::cerr << "wrote " << path.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized-space human NeRF: synthetic data, training, rendering and serving"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed");

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Write an oracle-rendered capsule-figure dataset");
  std::string gen_out;
  std::optional<int> bones, sets, poses, gen_size;
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--bones", bones, "Bone count (1-6)");
  gen->add_option("--sets", sets, "Appearance sets");
  gen->add_option("--poses", poses, "Poses per set");
  gen->add_option("--size", gen_size, "Image side in pixels");

  // train
  auto* train = app.add_subcommand("train", "Train a model on a dataset directory");
  std::string data_dir, train_out, resume;
  std::optional<std::int64_t> iterations, stop_at;
  train->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Run directory (log and checkpoints)")->required();
  train->add_option("--iterations", iterations, "Total iterations (rescales the stage schedule)");
  train->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--stop-at", stop_at, "Stop after this many iterations and save a checkpoint");

  // render
  auto* render = app.add_subcommand("render", "Render one point of the (appearance, pose, view) cube");
  std::string ckpt_path, render_out = "render.png";
  double a = 0, b = 0, c = 0;
  std::optional<int> rw, rh;
  render->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  render->add_option("-a", a, "Appearance coordinate in [0, 1]")->check(CLI::Range(0.0, 1.0));
  render->add_option("-b", b, "Pose coordinate in [0, 1]")->check(CLI::Range(0.0, 1.0));
  render->add_option("-c", c, "View coordinate in [0, 1]")->check(CLI::Range(0.0, 1.0));
  render->add_option("--width", rw, "Output width (default: training size)");
  render->add_option("--height", rh, "Output height (default: training size)");
  render->add_option("--out", render_out, "Color PNG; alpha, depth and a json sidecar go beside it");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Render a plane of the cube as a montage");
  std::string plane_name = "app-view", fixed_text = "0.5", grid_text = "3x8", cell_text, sweep_out = "montage.png";
  sweep->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--plane", plane_name, "app-view, app-pose or pose-view");
  sweep->add_option("--fixed", fixed_text, "Value of the remaining axis, e.g. b=0.5");
  sweep->add_option("--grid", grid_text, "Rows x columns, e.g. 8x8");
  sweep->add_option("--cell", cell_text, "Tile size WxH (default: training size)");
  sweep->add_option("--out", sweep_out, "Output PNG");

  // eval
  auto* eval = app.add_subcommand("eval", "Metrics on training views and oracle held-out views");
  std::string eval_out, sweep_dir;
  std::optional<int> sweep_frame;
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", eval_out, "Write the report JSON here");
  eval->add_option("--sweep-frame", sweep_frame, "Also render 10-degree orbit steps of this frame");
  eval->add_option("--sweep-dir", sweep_dir, "Directory for the orbit renders")->default_str("sweep");

  // serve
  auto* srv = app.add_subcommand("serve", "HTTP render service (/api/meta, /api/render)");
  std::string host = "127.0.0.1";
  int port = 8080;
  srv->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      SyntheticSpec spec = spec_from_json(g.config_section("synthetic"));
      if (bones) spec.bones = *bones;
      if (sets) spec.sets = *sets;
      if (poses) spec.poses_per_set = *poses;
      if (gen_size) spec.width = spec.height = *gen_size;
      if (g.seed) spec.seed = *g.seed;
      generate_synthetic(spec, gen_out);
      std::cerr << "wrote " << spec.sets * spec.poses_per_set << " frames to " << gen_out << '\n';
    } else if (*train) {
      const Dataset data = load_dataset(data_dir);
      Checkpoint start;
      if (!resume.empty()) {
        start = load_checkpoint(resume);
        if (!g.config_path.empty() || g.seed || iterations) {
          TrainConfig cfg = config_from_json(g.config_section("train"), start.config);
          if (g.seed) cfg.seed = *g.seed;
          if (iterations) {
            cfg.iterations = *iterations;
            cfg.schedule.total = *iterations;
          }
          if (config_hash(cfg) != config_hash(start.config))
            throw Error("config differs from the one the checkpoint was trained with");
          start.config = cfg;
        }
      } else {
        json j = g.config_section("train");
        if (iterations) j["iterations"] = *iterations;
        TrainConfig cfg = config_from_json(j);
        if (g.seed) cfg.seed = *g.seed;
        start = initial_checkpoint(cfg, scene_info(data));
      }
      std::cerr << "training " << start.config.iterations << " iterations on " << data.size() << " frames, "
                << start.scene.sets << " sets, seed " << start.config.seed << '\n';
      const auto t0 = std::chrono::steady_clock::now();
      TrainOptions opts;
      opts.out_dir = train_out;
      opts.stop_at = stop_at.value_or(-1);
      opts.on_iteration = [&](const IterationRecord& r) {
        if ((r.iteration + 1) % 500 != 0) return;
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "iter %lld  total %.5f  mse %.5f  geom %.4f  opacity %.4f  (%.0f s)\n",
                     static_cast<long long>(r.iteration + 1), r.result.total, r.result.parts.mse,
                     r.result.parts.geom, r.result.parts.opacity, s);
      };
      const auto done = run_training(data, std::move(start), opts);
      std::cerr << "finished at iteration " << done.iteration << '\n';
    } else if (*render) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const auto& cam = ckpt.scene.frames.front().camera;
      const SpaceCoord coord{a, b, c};
      const auto out = render_space_point(ckpt, coord, rw.value_or(cam.width), rh.value_or(cam.height));
      const auto files = write_render_files(render_out, coord, out);
      std::cerr << "wrote " << files.color.string() << ", " << files.alpha.filename().string() << ", "
                << files.depth.filename().string() << " and " << files.sidecar.filename().string() << '\n';
    } else if (*sweep) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const auto plane = parse_plane(plane_name);
      const auto eq = fixed_text.find('=');
      const double fixed = std::stod(eq == std::string::npos ? fixed_text : fixed_text.substr(eq + 1));
      const auto [rows, cols] = parse_size(grid_text, "--grid");
      const auto& cam = ckpt.scene.frames.front().camera;
      const auto [cw, ch] = cell_text.empty() ? std::pair{cam.width, cam.height} : parse_size(cell_text, "--cell");
      write_image(sweep_out, sweep_plane(ckpt, plane, fixed, rows, cols, cw, ch));
    } else if (*eval) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const Dataset data = load_dataset(data_dir);
      const auto report = evaluate(ckpt, data, load_synthetic_scene(data_dir));
      const std::string text = report_to_json(report).dump(2);
      std::cout << text << '\n';
      if (!eval_out.empty()) {
        std::ofstream(eval_out) << text << '\n';
      }
      if (sweep_frame) {
        const auto views = orbit_sweep(ckpt, *sweep_frame);
        for (std::size_t k = 0; k < views.size(); ++k) {
          char name[32];
          std::snprintf(name, sizeof name, "orbit_%03zu.png", k * 10);
          write_image(fs::path(sweep_dir) / name,
                      rgba_image(views[k].color, views[k].alpha, views[k].width, views[k].height));
        }
      }
    } else if (*srv) {
      serve(ckpt_path, host, port);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
