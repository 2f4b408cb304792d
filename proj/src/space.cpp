#include "personerf/space.hpp"

#include "personerf/dataset.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

namespace personerf {

namespace {

double clamp01(double v) { return std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0); }

int cell(double v, int n) { return std::min(static_cast<int>(std::floor(v * n)), n - 1); }

}  // namespace

SpaceIndex map_coord(const SpaceCoord& coord, int S, const std::vector<int>& sets) {
  const int n = static_cast<int>(sets.size());
  if (S < 1 || n < 1) throw Error("space needs at least one appearance and one pose");
  SpaceIndex idx;
  idx.appearance = cell(clamp01(coord.a), S);
  idx.pose = cell(clamp01(coord.b), n);
  idx.source_set = sets[idx.pose];
  idx.phi = std::fmod(2.0 * std::numbers::pi * clamp01(coord.c), 2.0 * std::numbers::pi);
  return idx;
}

SpaceCoord quantize(const SpaceCoord& coord) {
  auto q = [](double v) { return static_cast<double>(std::llround(clamp01(v) * 1e4)) / 1e4; };
  return {q(coord.a), q(coord.b), q(coord.c)};
}

SpaceRender render_space_point(const Checkpoint& ckpt, const SpaceCoord& coord, int width, int height) {
  if (width < 1 || height < 1) throw Error("render size must be positive");
  std::vector<int> sets;
  for (const auto& f : ckpt.scene.frames) sets.push_back(f.set);
  const SpaceIndex idx = map_coord(coord, ckpt.scene.sets, sets);
  const SceneFrame& frame = ckpt.scene.frames[idx.pose];
  ViewRequest req;
  req.pose = frame.pose;
  req.app_set = idx.appearance;
  req.pose_set = idx.source_set;
  req.correct_pose = pose_stage_reached(ckpt);
  req.camera = resized_camera(unseen_camera(ckpt.scene.rig, frame.pose, frame.camera, idx.phi, ckpt.config.step.up),
                              width, height);
  SpaceRender out;
  out.index = idx;
  out.camera = req.camera;
  out.view = render_view(ckpt.model, ckpt.scene.rig, ckpt.config, req);
  out.rgba = rgba_image(out.view.color, out.view.alpha, width, height);
  return out;
}

RenderFiles write_render_files(const std::filesystem::path& color_png, const SpaceCoord& coord,
                               const SpaceRender& render) {
  const auto& v = render.view;
  const int n = v.width * v.height;
  const std::filesystem::path dir = color_png.parent_path(), stem = color_png.stem();
  RenderFiles files{color_png, dir / (stem.string() + "_alpha.png"), dir / (stem.string() + "_depth.f32"),
                    dir / (stem.string() + ".json")};
  if (!dir.empty()) std::filesystem::create_directories(dir);

  write_png(files.color, rgb_image(v.color, v.width, v.height));
  std::vector<std::uint16_t> alpha(n);
  for (int p = 0; p < n; ++p)
    alpha[p] = static_cast<std::uint16_t>(std::lround(std::clamp(static_cast<double>(v.alpha[p]), 0.0, 1.0) * 65535.0));
  write_png16(files.alpha, alpha, v.width, v.height);

  std::vector<std::uint8_t> depth(4 * static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v.depth[p]);
    for (int k = 0; k < 4; ++k) depth[4 * p + k] = static_cast<std::uint8_t>(bits >> (8 * k));
  }
  std::ofstream out(files.depth, std::ios::binary);
  out.write(reinterpret_cast<const char*>(depth.data()), static_cast<std::streamsize>(depth.size()));
  if (!out) throw Error("failed writing " + files.depth.string());

  write_json_file(files.sidecar,
                  {{"width", v.width},
                   {"height", v.height},
                   {"coord", {{"a", coord.a}, {"b", coord.b}, {"c", coord.c}}},
                   {"appearance", render.index.appearance},
                   {"pose", render.index.pose},
                   {"pose_source_set", render.index.source_set},
                   {"phi", render.index.phi},
                   {"camera", camera_to_json(render.camera)},
                   {"color", files.color.filename().string()},
                   {"alpha", {{"file", files.alpha.filename().string()}, {"bits", 16}, {"scale", 65535}}},
                   {"depth",
                    {{"file", files.depth.filename().string()},
                     {"type", "float32"},
                     {"byte_order", "little"},
                     {"layout", "row-major"},
                     {"units", "scene"}}}});
  return files;
}

SpacePlane parse_plane(std::string_view name) {
  if (name == "app-view" || name == "app_view") return SpacePlane::app_view;
  if (name == "app-pose" || name == "app_pose") return SpacePlane::app_pose;
  if (name == "pose-view" || name == "pose_view") return SpacePlane::pose_view;
  throw Error("unknown plane '" + std::string(name) + "' (app-view, app-pose, pose-view)");
}

Image8 sweep_plane(const Checkpoint& ckpt, SpacePlane plane, double fixed, int rows, int cols, int cw, int ch) {
  if (rows < 1 || cols < 1) throw Error("grid must be at least 1x1");
  Image8 montage(cols * cw, rows * ch, 4);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double u = (r + 0.5) / rows, v = (c + 0.5) / cols;
      SpaceCoord coord;
      switch (plane) {
        case SpacePlane::app_view: coord = {u, fixed, v}; break;
        case SpacePlane::app_pose: coord = {u, v, fixed}; break;
        case SpacePlane::pose_view: coord = {fixed, u, v}; break;
      }
      const auto tile = render_space_point(ckpt, coord, cw, ch).rgba;
      for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
          for (int k = 0; k < 4; ++k) montage.at(c * cw + x, r * ch + y, k) = tile.at(x, y, k);
    }
  return montage;
}

}  // namespace personerf
