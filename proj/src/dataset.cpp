#include "personerf/dataset.hpp"

#include "personerf/image_io.hpp"

#include <fstream>
#include <set>

namespace personerf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view dataset_error_name(DatasetErrorKind kind) {
  switch (kind) {
    case DatasetErrorKind::missing_file: return "missing file";
    case DatasetErrorKind::malformed: return "malformed metadata";
    case DatasetErrorKind::dimension_mismatch: return "dimension mismatch";
    case DatasetErrorKind::invalid_index: return "invalid index";
  }
  return "dataset error";
}

DatasetError::DatasetError(DatasetErrorKind kind, const std::string& frame, const std::string& what)
    : Error(std::string(dataset_error_name(kind)) + (frame.empty() ? "" : " in frame " + frame) + ": " + what),
      kind_(kind),
      frame_(frame) {}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError(DatasetErrorKind::missing_file, "", path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError(DatasetErrorKind::malformed, "", path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

namespace {

Vec3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Mat3d mat3(const json& j) {
  if (!j.is_array() || j.size() != 9) throw std::invalid_argument("expected 9 numbers (row-major 3x3)");
  Mat3d m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = j[i].get<double>();
  return m;
}

json to_json(const Vec3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json to_json(const Mat3d& m) {
  json out = json::array();
  for (int i = 0; i < 9; ++i) out.push_back(m(i / 3, i % 3));
  return out;
}

}  // namespace

json rig_to_json(const SkeletonRig& rig) {
  json bones = json::array();
  for (int i = 0; i < rig.bone_count(); ++i) {
    bones.push_back({{"name", i < static_cast<int>(rig.names.size()) ? rig.names[i] : "bone" + std::to_string(i)},
                     {"parent", rig.parent[i]},
                     {"head", to_json(rig.rest_head[i])},
                     {"tail", to_json(rig.rest_tail[i])},
                     {"radius", rig.bone_radius[i]}});
  }
  return {{"bones", bones}};
}

SkeletonRig rig_from_json(const json& j) {
  SkeletonRig rig;
  for (const auto& b : j.at("bones")) {
    rig.names.push_back(b.value("name", "bone" + std::to_string(rig.names.size())));
    rig.parent.push_back(b.at("parent").get<int>());
    rig.rest_head.push_back(vec3(b.at("head")));
    rig.rest_tail.push_back(vec3(b.at("tail")));
    rig.bone_radius.push_back(b.at("radius").get<double>());
  }
  rig.validate();
  return rig;
}

json camera_to_json(const Camera& cam) {
  return {{"intrinsics", to_json(cam.intrinsics)},
          {"rotation", to_json(cam.extrinsics.rotation)},
          {"translation", to_json(cam.extrinsics.translation)}};
}

Camera camera_from_json(const json& j, int width, int height) {
  Camera cam;
  cam.intrinsics = mat3(j.at("intrinsics"));
  cam.extrinsics.rotation = mat3(j.at("rotation"));
  cam.extrinsics.translation = vec3(j.at("translation"));
  cam.width = width;
  cam.height = height;
  cam.validate();
  return cam;
}

json pose_to_json(const BodyPose& pose) {
  json angles = json::array();
  for (const auto& w : pose.joint_angles) angles.push_back(to_json(w));
  return {{"root_rotation", to_json(pose.root.rotation)},
          {"root_translation", to_json(pose.root.translation)},
          {"joint_angles", angles}};
}

BodyPose pose_from_json(const json& j, const SkeletonRig& rig) {
  BodyPose pose = BodyPose::canonical(rig);
  pose.root.rotation = mat3(j.at("root_rotation"));
  pose.root.translation = vec3(j.at("root_translation"));
  const auto& angles = j.at("joint_angles");
  if (static_cast<int>(angles.size()) != rig.bone_count())
    throw ShapeError("pose has " + std::to_string(angles.size()) + " joint angles, rig has " +
                     std::to_string(rig.bone_count()) + " bones");
  for (int i = 0; i < rig.bone_count(); ++i) pose.joint_angles[i] = vec3(angles[i]);
  return with_joints(rig, pose);
}

PixelBox mask_box(const std::vector<std::uint8_t>& mask, int width, int height) {
  PixelBox box{width, height, 0, 0};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (mask[static_cast<std::size_t>(y) * width + x]) {
        box.x0 = std::min(box.x0, x);
        box.y0 = std::min(box.y0, y);
        box.x1 = std::max(box.x1, x + 1);
        box.y1 = std::max(box.y1, y + 1);
      }
  if (box.empty()) return {0, 0, width, height};
  return box;
}

namespace {

Image8 read_frame_png(const fs::path& path, int channels, const std::string& id) {
  if (!fs::exists(path)) throw DatasetError(DatasetErrorKind::missing_file, id, path.string());
  try {
    return read_png(path, channels);
  } catch (const ImageError& e) {
    throw DatasetError(DatasetErrorKind::malformed, id, e.what());
  }
}

}  // namespace

Dataset load_dataset(const fs::path& dir, bool load_pixels) {
  Dataset data;
  data.root = dir;
  for (const char* name : {"rig.json", "metadata.json"})
    if (!fs::exists(dir / name)) throw DatasetError(DatasetErrorKind::missing_file, "", (dir / name).string());
  for (const char* name : {"images", "masks"})
    if (!fs::is_directory(dir / name)) throw DatasetError(DatasetErrorKind::missing_file, "", (dir / name).string());

  try {
    data.rig = rig_from_json(read_json_file(dir / "rig.json"));
  } catch (const DatasetError&) {
    throw;
  } catch (const std::exception& e) {
    throw DatasetError(DatasetErrorKind::malformed, "", std::string("rig.json: ") + e.what());
  }

  const json meta = read_json_file(dir / "metadata.json");
  const json& frames = meta.is_array() ? meta : meta.at("frames");
  if (!frames.is_array() || frames.empty()) throw DatasetError(DatasetErrorKind::malformed, "", "no frames");

  std::set<int> distinct;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const json& f = frames[i];
    DatasetFrame frame;
    frame.id = f.value("id", std::to_string(i));
    try {
      frame.image_path = f.at("image").get<std::string>();
      frame.mask_path = f.at("mask").get<std::string>();
      if (f.contains("ignore_mask") && !f["ignore_mask"].is_null()) frame.ignore_path = f["ignore_mask"].get<std::string>();
      frame.set = f.at("appearance_set").get<int>();
      frame.pose = pose_from_json(f.at("pose"), data.rig);
      // image size is needed for the camera; read the header via the image itself below
      frame.camera = camera_from_json(f.at("camera"), 1, 1);
    } catch (const DatasetError&) {
      throw;
    } catch (const ShapeError& e) {
      throw DatasetError(DatasetErrorKind::dimension_mismatch, frame.id, e.what());
    } catch (const std::exception& e) {
      throw DatasetError(DatasetErrorKind::malformed, frame.id, e.what());
    }
    if (frame.set < 0) throw DatasetError(DatasetErrorKind::invalid_index, frame.id, "negative appearance set");
    distinct.insert(frame.set);

    const Image8 image = read_frame_png(dir / frame.image_path, 3, frame.id);
    const Image8 mask = read_frame_png(dir / frame.mask_path, 1, frame.id);
    if (mask.width != image.width || mask.height != image.height)
      throw DatasetError(DatasetErrorKind::dimension_mismatch, frame.id,
                         "mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) + ", image is " +
                             std::to_string(image.width) + "x" + std::to_string(image.height));
    frame.camera.width = image.width;
    frame.camera.height = image.height;
    const int n = image.width * image.height;
    frame.mask.resize(n);
    for (int p = 0; p < n; ++p) frame.mask[p] = mask.pixels[p] >= 128;
    if (!frame.ignore_path.empty()) {
      const Image8 ignore = read_frame_png(dir / frame.ignore_path, 1, frame.id);
      if (ignore.width != image.width || ignore.height != image.height)
        throw DatasetError(DatasetErrorKind::dimension_mismatch, frame.id, "ignore mask size differs from image");
      frame.valid.resize(n);
      for (int p = 0; p < n; ++p) frame.valid[p] = ignore.pixels[p] < 128;
    }
    frame.subject_box = mask_box(frame.mask, image.width, image.height);
    if (load_pixels) {
      frame.image.resize(3, n);
      for (int p = 0; p < n; ++p)
        for (int c = 0; c < 3; ++c)
          frame.image(c, p) = frame.mask[p] ? static_cast<float>(image.pixels[3 * p + c]) / 255.0f : 0.0f;
    }
    data.frames.push_back(std::move(frame));
  }

  data.sets = static_cast<int>(distinct.size());
  for (const auto& f : data.frames)
    if (f.set >= data.sets)
      throw DatasetError(DatasetErrorKind::invalid_index, f.id,
                         "appearance set " + std::to_string(f.set) + " with only " + std::to_string(data.sets) +
                             " distinct sets");
  if (!meta.is_array() && meta.contains("appearance_labels"))
    data.labels = meta["appearance_labels"].get<std::vector<std::string>>();
  if (data.labels.size() != static_cast<std::size_t>(data.sets)) {
    data.labels.clear();
    for (int s = 0; s < data.sets; ++s) data.labels.push_back("set " + std::to_string(s));
  }
  return data;
}

}  // namespace personerf
