#pragma once

#include "personerf/image_io.hpp"
#include "personerf/inference.hpp"

#include <string_view>

namespace personerf {

struct SpaceCoord {
  double a = 0.0;  // appearance
  double b = 0.0;  // body pose
  double c = 0.0;  // camera view
};

struct SpaceIndex {
  int appearance = 0;
  int pose = 0;
  int source_set = 0;  // appearance set the pose was observed in
  double phi = 0.0;
};

/// Cube coordinate to (appearance, pose, view). Coordinates are clamped to
/// [0, 1] and 1.0 maps to the last index. `sets` gives s_i per frame.
SpaceIndex map_coord(const SpaceCoord& coord, int S, const std::vector<int>& sets);

/// Rounds each coordinate to a multiple of 1e-4.
SpaceCoord quantize(const SpaceCoord& coord);

struct SpaceRender {
  SpaceIndex index;
  Camera camera;
  RenderedPatch<float> view;
  Image8 rgba;  // straight alpha
};

/// Render of one point of the space; the pose embedding follows the pose's
/// source set and the camera orbits the pose's own training camera.
SpaceRender render_space_point(const Checkpoint& ckpt, const SpaceCoord& coord, int width, int height);

struct RenderFiles {
  std::filesystem::path color;    // 8-bit rgb composited on black
  std::filesystem::path alpha;    // 16-bit gray
  std::filesystem::path depth;    // float32 little-endian, row-major, scene units
  std::filesystem::path sidecar;  // json
};

/// Writes a render next to `color_png` as <stem>.png, <stem>_alpha.png,
/// <stem>_depth.f32 and <stem>.json.
RenderFiles write_render_files(const std::filesystem::path& color_png, const SpaceCoord& coord,
                               const SpaceRender& render);

enum class SpacePlane { app_view, app_pose, pose_view };

SpacePlane parse_plane(std::string_view name);

/// rows x cols renders tiled row-major into one rgba image. Rows vary the
/// first axis of the plane, columns the second; the remaining axis is `fixed`.
/// Cells sit at the centers of [k/n, (k+1)/n).
Image8 sweep_plane(const Checkpoint& ckpt, SpacePlane plane, double fixed, int rows, int cols, int cell_width,
                   int cell_height);

}  // namespace personerf
