#include "personerf/synthetic.hpp"

#include "personerf/image_io.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace personerf {

namespace fs = std::filesystem;
using nlohmann::json;

void SyntheticSpec::validate() const {
  if (bones < 1 || bones > 6) throw Error("synthetic figure supports 1 to 6 bones");
  if (sets < 1) throw Error("synthetic spec needs at least one appearance set");
  if (poses_per_set < 1) throw Error("synthetic spec needs at least one pose per set");
  if (width < 8 || height < 8) throw Error("synthetic images must be at least 8x8");
  if (!(camera_distance > 0.0) || !(fill > 0.0)) throw Error("camera distance and fill must be positive");
}

json spec_to_json(const SyntheticSpec& s) {
  return {{"bones", s.bones},
          {"sets", s.sets},
          {"poses_per_set", s.poses_per_set},
          {"width", s.width},
          {"height", s.height},
          {"camera_distance", s.camera_distance},
          {"elevation_deg", s.elevation_deg},
          {"fill", s.fill},
          {"max_angle", s.max_angle},
          {"seed", s.seed}};
}

SyntheticSpec spec_from_json(const json& j) {
  SyntheticSpec s;
  s.bones = j.value("bones", s.bones);
  s.sets = j.value("sets", s.sets);
  s.poses_per_set = j.value("poses_per_set", s.poses_per_set);
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.camera_distance = j.value("camera_distance", s.camera_distance);
  s.elevation_deg = j.value("elevation_deg", s.elevation_deg);
  s.fill = j.value("fill", s.fill);
  s.max_angle = j.value("max_angle", s.max_angle);
  s.seed = j.value("seed", s.seed);
  return s;
}

SkeletonRig synthetic_rig(int bones) {
  struct Bone {
    const char* name;
    int parent;
    Vec3d head, tail;
    double radius;
  };
  static const Bone kBones[] = {
      {"torso", -1, {0.0, 0.9, 0.0}, {0.0, 1.5, 0.0}, 0.18},
      {"head", 0, {0.0, 1.55, 0.0}, {0.0, 1.85, 0.0}, 0.12},
      {"arm_l", 0, {0.2, 1.42, 0.0}, {0.8, 1.42, 0.0}, 0.08},
      {"arm_r", 0, {-0.2, 1.42, 0.0}, {-0.8, 1.42, 0.0}, 0.08},
      {"leg_l", 0, {0.1, 0.85, 0.0}, {0.1, 0.1, 0.0}, 0.09},
      {"leg_r", 0, {-0.1, 0.85, 0.0}, {-0.1, 0.1, 0.0}, 0.09},
  };
  if (bones < 1 || bones > 6) throw Error("synthetic figure supports 1 to 6 bones");
  SkeletonRig rig;
  for (int i = 0; i < bones; ++i) {
    rig.names.emplace_back(kBones[i].name);
    rig.parent.push_back(kBones[i].parent);
    rig.rest_head.push_back(kBones[i].head);
    rig.rest_tail.push_back(kBones[i].tail);
    rig.bone_radius.push_back(kBones[i].radius);
  }
  rig.validate();
  return rig;
}

std::vector<std::vector<Vec3d>> synthetic_palettes(const SyntheticSpec& spec) {
  std::mt19937_64 rng(mix_seed(spec.seed, 0x9a1e77e5));
  std::vector<std::vector<Vec3d>> out(spec.sets);
  for (auto& set : out)
    for (int b = 0; b < spec.bones; ++b) {
      Vec3d c;
      for (int k = 0; k < 3; ++k) c[k] = 0.2 + 0.75 * uniform01(rng);
      set.push_back(c);
    }
  return out;
}

Camera look_at(const Vec3d& eye, const Vec3d& target, const Vec3d& up, double focal, int width, int height) {
  const Vec3d z = (target - eye).normalized();
  const Vec3d x = z.cross(up).normalized();
  const Vec3d y = z.cross(x);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.intrinsics << focal, 0, width / 2.0, 0, focal, height / 2.0, 0, 0, 1;
  cam.extrinsics.rotation.row(0) = x;
  cam.extrinsics.rotation.row(1) = y;
  cam.extrinsics.rotation.row(2) = z;
  cam.extrinsics.translation = -cam.extrinsics.rotation * eye;
  return cam;
}

double ray_capsule(const Vec3d& ro, const Vec3d& rd, const Vec3d& a, const Vec3d& b, double r) {
  const Vec3d ba = b - a, oa = ro - a;
  const double baba = ba.dot(ba), bard = ba.dot(rd), baoa = ba.dot(oa), rdoa = rd.dot(oa), oaoa = oa.dot(oa);
  const double qa = baba - bard * bard;
  const double qb = baba * rdoa - baoa * bard;
  const double qc = baba * oaoa - baoa * baoa - r * r * baba;
  double best = -1.0;
  if (qa > 1e-12) {
    const double h = qb * qb - qa * qc;
    if (h >= 0.0) {
      const double t = (-qb - std::sqrt(h)) / qa;
      const double y = baoa + t * bard;
      if (y > 0.0 && y < baba && t > 0.0) best = t;
    }
  }
  // end caps
  for (const Vec3d& c : {a, b}) {
    const Vec3d oc = ro - c;
    const double hb = rd.dot(oc), hc = oc.dot(oc) - r * r, h = hb * hb - hc;
    if (h < 0.0) continue;
    const double t = -hb - std::sqrt(h);
    if (t > 0.0 && (best < 0.0 || t < best)) best = t;
  }
  return best;
}

OracleImage render_oracle(const SkeletonRig& rig, const BodyPose& pose, const Camera& camera,
                          const std::vector<Vec3d>& palette) {
  if (static_cast<int>(palette.size()) != rig.bone_count()) throw ShapeError("palette size differs from bone count");
  const auto caps = posed_capsules(rig, pose);
  const int w = camera.width, h = camera.height;
  OracleImage out;
  out.color = MatX<float>::Zero(3, w * h);
  out.mask.assign(static_cast<std::size_t>(w) * h, 0);
  out.bone.assign(static_cast<std::size_t>(w) * h, -1);
  const Mat3d kinv = camera.intrinsics.inverse();
  const Mat3d rt = camera.extrinsics.rotation.transpose();
  const Vec3d origin = camera.center();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vec3d dir = (rt * (kinv * Vec3d(x + 0.5, y + 0.5, 1.0))).normalized();
      double best = -1.0;
      int hit = -1;
      for (int i = 0; i < rig.bone_count(); ++i) {
        const double t = ray_capsule(origin, dir, caps[i].first, caps[i].second, rig.bone_radius[i]);
        if (t > 0.0 && (best < 0.0 || t < best)) {
          best = t;
          hit = i;
        }
      }
      if (hit < 0) continue;
      const int p = y * w + x;
      out.mask[p] = 1;
      out.bone[p] = hit;
      out.color.col(p) = palette[hit].cast<float>();
    }
  return out;
}

SyntheticScene build_synthetic_scene(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticScene scene;
  scene.spec = spec;
  scene.rig = synthetic_rig(spec.bones);
  scene.palettes = synthetic_palettes(spec);

  const Aabb rest = scene.rig.rest_bounds();
  const Vec3d target = rest.center();
  // frame the figure's reach in any pose: a sphere about the rest center
  double reach = 0.0;
  for (int i = 0; i < scene.rig.bone_count(); ++i)
    for (const Vec3d& p : {scene.rig.rest_head[i], scene.rig.rest_tail[i]})
      reach = std::max(reach, (p - target).norm() + scene.rig.bone_radius[i]);
  const double focal = spec.fill * spec.width * spec.camera_distance / (2.0 * reach);

  std::mt19937_64 rng(mix_seed(spec.seed, 0x5eed));
  auto sym = [&](double limit) { return limit * (2.0 * uniform01(rng) - 1.0); };
  const double elevation = spec.elevation_deg * std::numbers::pi / 180.0;
  for (int s = 0; s < spec.sets; ++s)
    for (int p = 0; p < spec.poses_per_set; ++p) {
      BodyPose pose = BodyPose::canonical(scene.rig);
      pose.root.rotation = axis_rotation(Vec3d::UnitY(), sym(0.4));
      pose.root.translation = Vec3d(sym(0.05), 0.0, sym(0.05));
      for (int b = 0; b < scene.rig.bone_count(); ++b) {
        const double limit = b == 0 ? 0.15 : spec.max_angle;
        pose.joint_angles[b] = Vec3d(sym(limit), sym(limit), sym(limit));
      }
      scene.poses.push_back(with_joints(scene.rig, pose));
      const double phi = 2.0 * std::numbers::pi * (p + static_cast<double>(s) / spec.sets) / spec.poses_per_set;
      const Vec3d eye = target + spec.camera_distance * Vec3d(std::sin(phi) * std::cos(elevation), std::sin(elevation),
                                                               std::cos(phi) * std::cos(elevation));
      scene.cameras.push_back(look_at(eye, target, Vec3d::UnitY(), focal, spec.width, spec.height));
      scene.sets.push_back(s);
    }
  return scene;
}

void generate_synthetic(const SyntheticSpec& spec, const fs::path& dir) {
  const SyntheticScene scene = build_synthetic_scene(spec);
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  write_json_file(dir / "rig.json", rig_to_json(scene.rig));

  json frames = json::array();
  for (std::size_t i = 0; i < scene.poses.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.png", i);
    const OracleImage img = render_oracle(scene.rig, scene.poses[i], scene.cameras[i], scene.palettes[scene.sets[i]]);
    write_png(dir / "images" / name, rgb_image(img.color, spec.width, spec.height));
    Image8 mask(spec.width, spec.height, 1);
    for (std::size_t p = 0; p < img.mask.size(); ++p) mask.pixels[p] = img.mask[p] ? 255 : 0;
    write_png(dir / "masks" / name, mask);
    frames.push_back({{"id", std::string(name, 4)},
                      {"image", std::string("images/") + name},
                      {"mask", std::string("masks/") + name},
                      {"appearance_set", scene.sets[i]},
                      {"camera", camera_to_json(scene.cameras[i])},
                      {"pose", pose_to_json(scene.poses[i])}});
  }
  write_json_file(dir / "metadata.json", frames);

  json palettes = json::array();
  for (const auto& set : scene.palettes) {
    json bones = json::array();
    for (const auto& c : set) bones.push_back({c.x(), c.y(), c.z()});
    palettes.push_back(bones);
  }
  write_json_file(dir / "synthetic.json", {{"spec", spec_to_json(spec)}, {"palettes", palettes}});
}

std::optional<SyntheticScene> load_synthetic_scene(const fs::path& dir) {
  if (!fs::exists(dir / "synthetic.json")) return std::nullopt;
  const json j = read_json_file(dir / "synthetic.json");
  return build_synthetic_scene(spec_from_json(j.at("spec")));
}

}  // namespace personerf
