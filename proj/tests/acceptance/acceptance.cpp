// Acceptance suite: one PASS/FAIL line per criterion.
//
//   personerf_acceptance [--cache DIR] [--only N[,N...]]
//
// The two 20K-iteration training runs (full loss and the lambda_geom =
// lambda_opacity = 0 ablation) are kept under the cache directory and reused
// when their config hash and iteration count still match.

#include "personerf/dataset.hpp"
#include "personerf/evaluate.hpp"
#include "personerf/inference.hpp"
#include "personerf/space.hpp"
#include "personerf/synthetic.hpp"
#include "personerf/trainer.hpp"

#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace personerf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- 1

Outcome gradient_suite() {
  Stopwatch clock;
  const testing::TinyScene scene;
  auto only = [&](double mse, bool perceptual, double geom, double opacity) {
    StepConfig c = scene.step_cfg;
    c.weights.mse = mse;
    c.use_perceptual = perceptual;
    c.weights.geom = geom;
    c.weights.opacity = opacity;
    c.stop_pose_gradient_from_geom = false;
    return c;
  };
  const std::vector<std::pair<std::string, StepConfig>> terms{{"mse", only(1, false, 0, 0)},
                                                              {"perceptual", only(0, true, 0, 0)},
                                                              {"geom", only(0, false, 1, 0)},
                                                              {"opacity", only(0, false, 0, 1)},
                                                              {"total", only(0.2, true, 1, 10)}};
  auto total = [](const StepResult& r) { return r.total; };
  double worst32 = 0, worst64 = 0;
  std::string where;
  bool covered = true;
  for (const auto& [name, cfg] : terms) {
    const auto e32 = testing::check_step_gradient<float>(scene, testing::all_stages(), cfg, total);
    const auto e64 = testing::check_step_gradient<double>(scene, testing::all_stages(), cfg, total);
    covered = covered && e32.size() == kAllGroups.size() && e64.size() == kAllGroups.size();
    for (const auto& [group, e] : e32)
      if (e.relative > worst32) {
        worst32 = e.relative;
        where = name + "/" + std::string(group_name(group));
      }
    for (const auto& [group, e] : e64) worst64 = std::max(worst64, e.relative);
    if (name == "total")
      for (const auto& [group, e] : e64) covered = covered && e.fd_norm > 0.0;
  }
  const double secs = clock.seconds();
  return {covered && worst32 <= 1e-3 && worst64 <= 1e-6 && secs < 60.0,
          fmt("worst rel err 32-bit %.2e (%s), 64-bit %.2e over 5 terms x %zu groups, %.1f s", worst32,
              where.c_str(), worst64, kAllGroups.size(), secs)};
}

// ---------------------------------------------------------------- 2

Outcome rendering_invariants() {
  Stopwatch clock;
  std::mt19937_64 rng(2024);
  double worst_sum = 0, worst_alpha = 0;
  bool ranges = true, trailing = true;
  for (int ray = 0; ray < 10000; ++ray) {
    const int g = 1 + static_cast<int>(rng() % 64);
    std::vector<double> t, dt, sigma, f;
    std::vector<Vec3d> c;
    double pos = 0.5 + 3.0 * uniform01(rng);
    for (int i = 0; i < g; ++i) {
      const double step = 0.01 + 0.2 * uniform01(rng);
      t.push_back(pos);
      dt.push_back(step);
      pos += step;
      sigma.push_back(uniform01(rng) < 0.3 ? 0.0 : 50.0 * uniform01(rng) * uniform01(rng));
      f.push_back(uniform01(rng));
      c.emplace_back(uniform01(rng), uniform01(rng), uniform01(rng));
    }
    const auto r = integrate_ray<double>(t, dt, c, sigma, f);
    // independent oracle: A = 1 - prod(1 - a_i)
    double transmit = 1.0;
    for (int i = 0; i < g; ++i) transmit *= 1.0 - f[i] * (1.0 - std::exp(-sigma[i] * dt[i]));
    worst_alpha = std::max(worst_alpha, std::abs(r.alpha - (1.0 - transmit)));
    double sum = 0;
    for (double w : r.weights) {
      ranges = ranges && w >= 0.0;
      sum += w;
    }
    ranges = ranges && r.alpha >= 0.0 && r.alpha <= 1.0;
    worst_sum = std::max(worst_sum, std::abs(sum - r.alpha));

    const int extra = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < extra; ++i) {
      t.push_back(pos);
      dt.push_back(0.1);
      pos += 0.1;
      sigma.push_back(0.0);
      f.push_back(uniform01(rng));
      c.emplace_back(uniform01(rng), uniform01(rng), uniform01(rng));
    }
    const auto longer = integrate_ray<double>(t, dt, c, sigma, f);
    trailing = trailing && longer.color == r.color && longer.depth == r.depth && longer.alpha == r.alpha;
  }

  const double ln2 = std::log(2.0);
  const auto two = integrate_ray<float>(std::vector<float>{1, 2}, std::vector<float>{1, 1},
                                        std::vector<Vec3<float>>{{1, 0, 0}, {0, 1, 0}},
                                        std::vector<float>{float(ln2), float(ln2)}, std::vector<float>{1, 1});
  const double closed = std::max({(two.color.cast<double>() - Vec3d(0.5, 0.25, 0)).cwiseAbs().maxCoeff(),
                                  std::abs(two.depth - 1.0), std::abs(two.alpha - 0.75)});
  const double secs = clock.seconds();
  const bool pass = ranges && trailing && worst_sum <= 1e-6 && worst_alpha <= 1e-6 && closed <= 1e-6 && secs < 10.0;
  return {pass, fmt("10000 rays: |sum w - A| %.1e, |A - oracle| %.1e, ranges %s, trailing %s; closed form err %.1e; "
                    "%.1f s",
                    worst_sum, worst_alpha, ranges ? "ok" : "VIOLATED", trailing ? "exact" : "CHANGED", closed, secs)};
}

// ---------------------------------------------------------------- 3

Outcome motion_field_identity() {
  Stopwatch clock;
  const SkeletonRig rig = synthetic_rig(4);
  const Aabb box = rig.rest_bounds().inflated(1.5);
  MotionWeightVolume<double> vol(rig.bone_count(), 16, box);
  vol.init_from_rig(rig);
  std::mt19937_64 rng(33);
  for (Eigen::Index i = 0; i < vol.logits.size(); ++i) vol.logits.data()[i] += uniform01(rng) - 0.5;

  const BasesT<double> bases(motion_bases(rig, BodyPose::canonical(rig)));
  const WarpField<double> field(vol, bases);
  auto random_point = [&] {
    const Vec3d u(uniform01(rng), uniform01(rng), uniform01(rng));
    const Aabb wide = box.inflated(1.2);
    return Vec3d(wide.min + u.cwiseProduct(wide.extent()));
  };
  double worst_identity = 0, worst_sum = 0;
  int foreground_points = 0;
  for (int i = 0; i < 20000; ++i) {
    const Vec3d x = random_point();
    const auto w = sample_weights<double>(vol, x);
    worst_sum = std::max(worst_sum, std::abs(w.sum() - 1.0));
    const auto r = field.warp(x);
    if (r.foreground > 0.0) {
      ++foreground_points;
      worst_identity = std::max(worst_identity, (r.x_can - x).norm());
    }
  }

  // one bone, constant logits: x_can = R x + t, f = e / (1 + e)
  MotionWeightVolume<double> one(1, 5, Aabb{Vec3d(-3, -3, -3), Vec3d(3, 3, 3)});
  one.logits.row(0).setConstant(1.0);
  one.logits.row(1).setConstant(0.0);
  double worst_single = 0;
  for (int i = 0; i < 200; ++i) {
    const Vec3d axis = Vec3d(uniform01(rng) - 0.5, uniform01(rng) - 0.5, uniform01(rng) - 0.5).normalized();
    const RigidTransform b{axis_rotation(axis, 3.0 * uniform01(rng)),
                           Vec3d(uniform01(rng), uniform01(rng), uniform01(rng)) - Vec3d::Constant(0.5)};
    const Vec3d x = Vec3d(uniform01(rng), uniform01(rng), uniform01(rng)) - Vec3d::Constant(0.5);
    const auto r = warp_to_canonical<double>(one, {b}, x);
    const Vec3d expect = b.rotation * x + b.translation;
    worst_single = std::max({worst_single, (r.x_can - expect).norm(),
                             std::abs(r.foreground - std::exp(1.0) / (1.0 + std::exp(1.0)))});
  }
  const double secs = clock.seconds();
  const bool pass = foreground_points > 1000 && worst_identity <= 1e-6 && worst_sum <= 1e-6 && worst_single <= 1e-6 &&
                    secs < 10.0;
  return {pass, fmt("identity err %.1e over %d f>0 points, |sum w - 1| %.1e, single-bone err %.1e, %.1f s",
                    worst_identity, foreground_points, worst_sum, worst_single, secs)};
}

// ---------------------------------------------------------------- 4

Outcome loss_minima() {
  Stopwatch clock;
  const double eps = LossWeights{}.epsilon;
  VecX<double> binary(6);
  binary << 0, 1, 1, 0, 0, 1;
  const double at_binary = loss_opacity<double>(binary, eps);
  double interior_min = std::numeric_limits<double>::infinity();
  bool endpoints_zero = true;
  for (int k = 0; k <= 100; ++k) {
    VecX<double> a(1);
    a[0] = k / 100.0;
    const double v = loss_opacity<double>(a, eps);
    if (k == 0 || k == 100)
      endpoints_zero = endpoints_zero && v == 0.0;
    else
      interior_min = std::min(interior_min, v);
  }

  std::mt19937_64 rng(4);
  VecX<double> depth = VecX<double>::Constant(16, 2.5), alpha(16), any_depth(16);
  for (int i = 0; i < 16; ++i) {
    alpha[i] = uniform01(rng);
    any_depth[i] = 1.0 + 3.0 * uniform01(rng);
  }
  const double constant = loss_geom<double>(depth, alpha, 4, 4);
  const double transparent = loss_geom<double>(any_depth, VecX<double>::Zero(16), 4, 4);
  VecX<double> d2(4), a2 = VecX<double>::Ones(4);
  d2 << 1, 1, 1, 2;
  const double hand = loss_geom<double>(d2, a2, 2, 2);
  const double secs = clock.seconds();
  const bool pass = at_binary == 0.0 && endpoints_zero && interior_min > 0.0 && constant == 0.0 && transparent == 0.0 &&
                    hand == 2.0 && secs < 5.0;
  return {pass, fmt("L_opacity binary %.3g, min over 99 interior points %.3g; L_geom constant %.3g, zero-alpha %.3g, "
                    "2x2 case %.6g; %.2f s",
                    at_binary, interior_min, constant, transparent, hand, secs)};
}

// ---------------------------------------------------------------- 5

double pose_gradient_norm(Model<double>& g) {
  double s = 0;
  g.pose_net.for_each_tensor("pose", [&](const std::string&, const std::vector<int>&, std::span<double> d) {
    for (double v : d) s += v * v;
  });
  s += g.embeddings.pose.squaredNorm();
  return std::sqrt(s);
}

Outcome stop_gradient() {
  Stopwatch clock;
  const testing::TinyScene scene;
  auto gradient = [&](double mse, double geom) {
    StepConfig c = scene.step_cfg;
    c.weights.mse = mse;
    c.use_perceptual = false;
    c.weights.geom = geom;
    c.weights.opacity = 0;
    c.stop_pose_gradient_from_geom = true;
    Model<double> g = scene.model.zeros_like();
    evaluate_step<double>(scene.model, scene.rig, scene.frame<double>(&scene.image), scene.plan, c,
                          testing::all_stages(), &g);
    return g;
  };
  auto from_geom = gradient(0, 1);
  auto from_mse = gradient(1, 0);
  const double geom_norm = pose_gradient_norm(from_geom);
  const double mse_norm = pose_gradient_norm(from_mse);
  // the geometry loss must still be live for the other groups
  const double geom_elsewhere = from_geom.volume.logits.norm();
  const double secs = clock.seconds();
  return {geom_norm == 0.0 && mse_norm > 0.0 && geom_elsewhere > 0.0 && secs < 30.0,
          fmt("|d L_geom / d theta_pose| = %.3g, |d L_MSE / d theta_pose| = %.3g, |d L_geom / d theta_skel| = %.3g, "
              "%.2f s",
              geom_norm, mse_norm, geom_elsewhere, secs)};
}

// ---------------------------------------------------------------- 6-8

SyntheticSpec desk_spec() {
  SyntheticSpec s;
  s.bones = 4;
  s.sets = 3;
  s.poses_per_set = 8;
  s.width = s.height = 128;
  s.seed = 7;
  return s;
}

struct TrainedRun {
  Checkpoint ckpt;
  std::vector<double> totals;
  double seconds = 0.0;  // wall time of the training, from the cache note when reused
  bool reused = false;
};

fs::path ensure_dataset(const fs::path& cache) {
  const fs::path dir = cache / "data";
  const SyntheticSpec spec = desk_spec();
  if (fs::exists(dir / "synthetic.json")) {
    const json j = read_json_file(dir / "synthetic.json");
    if (j.at("spec") == spec_to_json(spec)) return dir;
    fs::remove_all(dir);
  }
  generate_synthetic(spec, dir);
  return dir;
}

std::vector<double> read_totals(const fs::path& log) {
  std::vector<double> out;
  std::ifstream in(log);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line).at("total").get<double>());
  return out;
}

TrainedRun train_cached(const Dataset& data, const TrainConfig& cfg, const fs::path& dir) {
  TrainedRun run;
  const fs::path model = dir / "model.ckpt";
  const fs::path note = dir / "run.json";
  if (fs::exists(model) && fs::exists(note)) {
    try {
      Checkpoint c = load_checkpoint(model);
      const json n = read_json_file(note);
      if (config_hash(c.config) == config_hash(cfg) && c.iteration == cfg.iterations &&
          c.config.iterations == cfg.iterations) {
        run.ckpt = std::move(c);
        run.totals = read_totals(dir / "train_log.ndjson");
        run.seconds = n.value("seconds", 0.0);
        run.reused = true;
        if (static_cast<std::int64_t>(run.totals.size()) == cfg.iterations) return run;
      }
    } catch (const std::exception& e) {
      std::cerr << "ignoring cached run in " << dir << ": " << e.what() << '\n';
    }
  }
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::cerr << "training " << dir.filename().string() << " (" << cfg.iterations << " iterations)\n";
  Stopwatch clock;
  TrainOptions opts;
  opts.out_dir = dir;
  opts.on_iteration = [&](const IterationRecord& r) {
    if ((r.iteration + 1) % 1000 == 0)
      std::cerr << "  " << r.iteration + 1 << " / " << cfg.iterations << "  " << clock.seconds() << " s\n";
  };
  run.ckpt = run_training(data, initial_checkpoint(cfg, scene_info(data)), opts);
  run.seconds = clock.seconds();
  run.totals = read_totals(dir / "train_log.ndjson");
  run.reused = false;
  write_json_file(note, {{"seconds", run.seconds}, {"config_hash", config_hash(cfg)}});
  return run;
}

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  double s = 0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return s / static_cast<double>(end - begin);
}

struct Experiments {
  fs::path cache;
  std::optional<Dataset> data;
  std::optional<SyntheticScene> oracle;
  std::optional<TrainedRun> full, ablation;
  std::optional<EvalReport> full_report, ablation_report;

  const Dataset& dataset() {
    if (!data) {
      const fs::path dir = ensure_dataset(cache);
      data = load_dataset(dir);
      oracle = load_synthetic_scene(dir);
    }
    return *data;
  }

  // a failed run is reported by every criterion that needs it, not retrained
  std::exception_ptr full_error, ablation_error;

  TrainedRun& full_run() {
    if (full_error) std::rethrow_exception(full_error);
    if (!full) try {
        full = train_cached(dataset(), TrainConfig::desk(), cache / "full");
      } catch (...) {
        full_error = std::current_exception();
        throw;
      }
    return *full;
  }

  TrainedRun& ablation_run() {
    if (ablation_error) std::rethrow_exception(ablation_error);
    if (!ablation) try {
        TrainConfig cfg = TrainConfig::desk();
        cfg.step.weights.geom = 0.0;
        cfg.step.weights.opacity = 0.0;
        ablation = train_cached(dataset(), cfg, cache / "ablation");
      } catch (...) {
        ablation_error = std::current_exception();
        throw;
      }
    return *ablation;
  }

  const EvalReport& full_eval() {
    if (!full_report) full_report = evaluate(full_run().ckpt, dataset(), oracle);
    return *full_report;
  }

  // The ablation's unseen L_geom is measured with the full run's weights so
  // both models are scored by the same loss.
  const EvalReport& ablation_eval() {
    if (!ablation_report) {
      Checkpoint scored = ablation_run().ckpt;
      scored.config.step.weights = full_run().ckpt.config.step.weights;
      ablation_report = evaluate(scored, dataset(), oracle);
    }
    return *ablation_report;
  }
};

Outcome end_to_end(Experiments& ex) {
  TrainedRun& run = ex.full_run();
  const EvalReport& report = ex.full_eval();
  const std::size_t n = run.totals.size();
  const std::size_t window = std::max<std::size_t>(1, n / 20);
  const double first = window_mean(run.totals, 0, window);
  const double last = window_mean(run.totals, n - window, n);
  const double ratio = last / first;
  const bool pass = ratio < 0.5 && report.train_psnr >= 24.0 && report.held_out_iou >= 0.85 && run.seconds <= 7200.0;
  return {pass, fmt("(a) final/first window (%zu its) mean total %.4f / %.4f = %.1f%%; (b) train PSNR %.2f dB; "
                    "(c) held-out 90 deg IoU %.3f; training %.0f s%s",
                    window, last, first, 100.0 * ratio, report.train_psnr, report.held_out_iou, run.seconds,
                    run.reused ? " (cached)" : "")};
}

Outcome pose_consistency(Experiments& ex) {
  const Checkpoint& ckpt = ex.full_run().ckpt;
  const int sets = ckpt.scene.sets;
  double worst = 1.0;
  int worst_frame = -1;
  // every training pose, rendered under each appearance embedding
  for (int f = 0; f < static_cast<int>(ckpt.scene.frames.size()); ++f) {
    ViewRequest req = frame_request(ckpt, f);
    std::vector<VecX<float>> alphas;
    for (int s = 0; s < sets; ++s) {
      req.app_set = s;
      alphas.push_back(render_view(ckpt.model, ckpt.scene.rig, ckpt.config, req).alpha);
    }
    for (int a = 0; a < sets; ++a)
      for (int b = a + 1; b < sets; ++b) {
        const double iou = alpha_iou(alphas[a], alphas[b]);
        if (iou < worst) {
          worst = iou;
          worst_frame = f;
        }
      }
  }
  return {worst >= 0.95, fmt("min pairwise alpha IoU across %d appearances %.4f (frame %d) over %zu poses", sets,
                             worst, worst_frame, ckpt.scene.frames.size())};
}

Outcome ablation_direction(Experiments& ex) {
  const EvalReport& full = ex.full_eval();
  const EvalReport& ablated = ex.ablation_eval();
  const bool pass = full.held_out_iou >= ablated.held_out_iou && ablated.unseen_geom > full.unseen_geom;
  return {pass, fmt("held-out IoU full %.3f vs unregularized %.3f; mean unseen L_geom full %.4g vs unregularized %.4g",
                    full.held_out_iou, ablated.held_out_iou, full.unseen_geom, ablated.unseen_geom)};
}

// ---------------------------------------------------------------- 9

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism(Experiments& ex) {
  const Dataset& data = ex.dataset();
  testing::TempDir tmp;
  TrainConfig cfg = TrainConfig::desk();
  cfg.iterations = 60;
  cfg.schedule = StageSchedule::desk(20000).scaled_to(60);
  cfg.checkpoint_every = 0;
  auto run = [&](const std::string& name, std::uint64_t seed, std::int64_t stop_at) {
    TrainConfig c = cfg;
    c.seed = seed;
    TrainOptions o;
    o.out_dir = tmp.path / name;
    o.stop_at = stop_at;
    return run_training(data, initial_checkpoint(c, scene_info(data)), o);
  };
  const Checkpoint a = run("a", 5, -1);
  const Checkpoint b = run("b", 5, -1);
  const Checkpoint other = run("c", 6, -1);
  const std::string log_a = slurp(tmp.path / "a" / "train_log.ndjson");
  const bool same_seed = log_a == slurp(tmp.path / "b" / "train_log.ndjson") &&
                         encode_checkpoint(a) == encode_checkpoint(b);
  const bool seed_matters = log_a != slurp(tmp.path / "c" / "train_log.ndjson");

  // stop at 23, reload from disk, continue to the end
  run("r", 5, 23);
  TrainOptions resume;
  resume.out_dir = tmp.path / "r";
  const Checkpoint resumed = run_training(data, load_checkpoint(tmp.path / "r" / "checkpoint-23.ckpt"), resume);
  const bool resume_exact =
      slurp(tmp.path / "r" / "train_log.ndjson") == log_a && encode_checkpoint(resumed) == encode_checkpoint(a);

  // identical quantized coordinates render byte-identical images
  const Checkpoint& model = ex.full_run().ckpt;
  const SpaceCoord c1{0.3141, 0.5926, 0.5358};
  const SpaceCoord c2{0.31412, 0.59258, 0.53581};
  const auto r1 = render_space_point(model, quantize(c1), 96, 96);
  const auto r2 = render_space_point(model, quantize(c2), 96, 96);
  const auto r3 = render_space_point(model, quantize(c1), 96, 96);
  const bool space_exact = r1.rgba.pixels == r2.rgba.pixels && r1.rgba.pixels == r3.rgba.pixels;

  return {same_seed && seed_matters && resume_exact && space_exact,
          fmt("same-seed logs+checkpoints %s, other seed %s, resume at 23 of 60 %s, space renders %s",
              same_seed ? "identical" : "DIFFER", seed_matters ? "differs" : "IDENTICAL",
              resume_exact ? "identical" : "DIFFERS", space_exact ? "byte-identical" : "DIFFER")};
}

}  // namespace
}  // namespace personerf

int main(int argc, char** argv) {
  using namespace personerf;
  CLI::App app{"PersonNeRF acceptance suite"};
  std::string cache = "acceptance-cache";
  std::vector<int> only;
  app.add_option("--cache", cache, "directory for the dataset and the cached training runs");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  Experiments ex;
  ex.cache = cache;
  fs::create_directories(ex.cache);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"rendering invariants", rendering_invariants},
      {"motion-field identity", motion_field_identity},
      {"loss minima", loss_minima},
      {"stop-gradient rule", stop_gradient},
      {"end-to-end desk training", [&] { return end_to_end(ex); }},
      {"pose consistency", [&] { return pose_consistency(ex); }},
      {"ablation direction", [&] { return ablation_direction(ex); }},
      {"determinism and persistence", [&] { return determinism(ex); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
