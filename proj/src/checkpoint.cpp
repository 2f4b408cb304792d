#include "personerf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace personerf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'N', 'R', 'F', 'C', 'K', 'P', 'T'};
constexpr int kVersion = 1;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(u);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json scene_to_json(const SceneInfo& s) {
  json frames = json::array();
  for (const auto& f : s.frames)
    frames.push_back({{"id", f.id},
                      {"appearance_set", f.set},
                      {"width", f.camera.width},
                      {"height", f.camera.height},
                      {"camera", camera_to_json(f.camera)},
                      {"pose", pose_to_json(f.pose)}});
  return {{"rig", rig_to_json(s.rig)}, {"sets", s.sets}, {"labels", s.labels}, {"frames", frames}};
}

SceneInfo scene_from_json(const json& j) {
  SceneInfo s;
  s.rig = rig_from_json(j.at("rig"));
  s.sets = j.at("sets").get<int>();
  s.labels = j.at("labels").get<std::vector<std::string>>();
  for (const auto& f : j.at("frames")) {
    SceneFrame frame;
    frame.id = f.at("id").get<std::string>();
    frame.set = f.at("appearance_set").get<int>();
    frame.camera = camera_from_json(f.at("camera"), f.at("width").get<int>(), f.at("height").get<int>());
    frame.pose = pose_from_json(f.at("pose"), s.rig);
    s.frames.push_back(std::move(frame));
  }
  return s;
}

// Parameters first, then Adam first and second moments, in model order.
std::vector<TensorRef<float>> all_tensors(Checkpoint& c) {
  std::vector<TensorRef<float>> out = c.model.tensors();
  for (auto t : c.adam.m.tensors()) {
    t.name = "adam.m/" + t.name;
    out.push_back(std::move(t));
  }
  for (auto t : c.adam.v.tensors()) {
    t.name = "adam.v/" + t.name;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

SceneInfo scene_info(const Dataset& data) {
  SceneInfo s;
  s.rig = data.rig;
  s.sets = data.sets;
  s.labels = data.labels;
  for (const auto& f : data.frames) s.frames.push_back({f.id, f.set, f.camera, f.pose});
  return s;
}

Checkpoint initial_checkpoint(const TrainConfig& config, const SceneInfo& scene) {
  Checkpoint c;
  c.config = config;
  c.scene = scene;
  c.model = Model<float>::initialized(config.model, scene.rig, scene.sets, config.seed);
  c.adam = AdamState<float>(c.model);
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Checkpoint& c = const_cast<Checkpoint&>(ckpt);  // tensor views are mutable spans; nothing is written
  const auto tensors = all_tensors(c);
  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    manifest.push_back({{"name", t.name}, {"group", group_name(t.group)}, {"shape", t.shape}, {"offset", offset}});
    offset += 4 * t.data.size();
  }
  const json header = {{"version", kVersion},
                       {"iteration", c.iteration},
                       {"adam_step", c.adam.step},
                       {"config_hash", hex64(config_hash(c.config))},
                       {"config", config_to_json(c.config)},
                       {"scene", scene_to_json(c.scene)},
                       {"tensors", manifest},
                       {"payload_bytes", offset}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& t : tensors)
    for (float v : t.data) put_f32(out, v);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw CheckpointError("not a checkpoint file");
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw CheckpointError("truncated checkpoint header");
  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }

  Checkpoint c;
  try {
    if (header.at("version").get<int>() != kVersion) throw CheckpointError("unsupported checkpoint version");
    c.config = config_from_json(header.at("config"), TrainConfig{});
    if (hex64(config_hash(c.config)) != header.at("config_hash").get<std::string>())
      throw CheckpointError("config hash does not match stored config");
    c.scene = scene_from_json(header.at("scene"));
    c.iteration = header.at("iteration").get<std::int64_t>();
    c.model = Model<float>(c.config.model, c.scene.rig, c.scene.sets);
    c.adam = AdamState<float>(c.model);
    c.adam.step = header.at("adam_step").get<std::int64_t>();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }

  const std::uint8_t* payload = bytes.data() + 16 + header_len;
  const std::uint64_t payload_len = bytes.size() - 16 - header_len;
  const json& manifest = header.at("tensors");
  auto tensors = all_tensors(c);
  if (manifest.size() != tensors.size()) throw CheckpointError("tensor count differs from model layout");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const json& m = manifest[i];
    auto& t = tensors[i];
    if (m.at("name").get<std::string>() != t.name || m.at("shape").get<std::vector<int>>() != t.shape)
      throw CheckpointError("tensor " + m.at("name").get<std::string>() + " does not match model layout");
    const std::uint64_t off = m.at("offset").get<std::uint64_t>();
    if (off + 4 * t.data.size() > payload_len) throw CheckpointError("truncated payload at " + t.name);
    for (std::size_t j = 0; j < t.data.size(); ++j) t.data[j] = get_f32(payload + off + 4 * j);
  }
  return c;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // write then rename so a crash never leaves a half-written checkpoint
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace personerf
