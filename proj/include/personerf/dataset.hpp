#pragma once

#include "personerf/renderer.hpp"
#include "personerf/skeleton.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace personerf {

enum class DatasetErrorKind { missing_file, malformed, dimension_mismatch, invalid_index };

std::string_view dataset_error_name(DatasetErrorKind kind);

class DatasetError : public Error {
 public:
  DatasetError(DatasetErrorKind kind, const std::string& frame, const std::string& what);
  DatasetErrorKind kind() const { return kind_; }
  const std::string& frame() const { return frame_; }

 private:
  DatasetErrorKind kind_;
  std::string frame_;
};

struct DatasetFrame {
  std::string id;
  std::string image_path;
  std::string mask_path;
  std::string ignore_path;  // empty when the frame has no ignore mask
  int set = 0;
  Camera camera;
  BodyPose pose;
  MatX<float> image;                // 3 x (W*H), subject composited on black
  std::vector<std::uint8_t> mask;   // 1 = subject
  std::vector<std::uint8_t> valid;  // empty = all pixels used by the losses
  PixelBox subject_box;
};

struct Dataset {
  std::filesystem::path root;
  SkeletonRig rig;
  std::vector<DatasetFrame> frames;
  int sets = 0;
  std::vector<std::string> labels;

  int size() const { return static_cast<int>(frames.size()); }
};

/// Reads rig.json, metadata.json, images/ and masks/ under `dir`.
/// `load_pixels = false` skips the images (metadata only).
Dataset load_dataset(const std::filesystem::path& dir, bool load_pixels = true);

nlohmann::json rig_to_json(const SkeletonRig& rig);
SkeletonRig rig_from_json(const nlohmann::json& j);
nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j, int width, int height);
nlohmann::json pose_to_json(const BodyPose& pose);
BodyPose pose_from_json(const nlohmann::json& j, const SkeletonRig& rig);

/// Bounding box of the mask, or the whole image if the mask is empty.
PixelBox mask_box(const std::vector<std::uint8_t>& mask, int width, int height);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace personerf
