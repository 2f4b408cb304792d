#include "personerf/service.hpp"

#include <httplib.h>

#include <charconv>
#include <cmath>
#include <iostream>
#include <thread>

namespace personerf {

using nlohmann::json;

namespace {

HttpResponse error(int status, const std::string& message) {
  return {status, "application/json", json{{"error", message}}.dump()};
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<int> parse_int(const std::string& s) {
  int v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

void RenderService::install(std::shared_ptr<const Checkpoint> ckpt) {
  {
    std::lock_guard lock(cache_mutex_);
    cache_.clear();
  }
  std::atomic_store(&ckpt_, std::move(ckpt));
}

HttpResponse RenderService::handle(const std::string& path, const std::map<std::string, std::string>& query) {
  if (path == "/api/meta") return meta();
  if (path == "/api/render") return render(query);
  return error(404, "no such endpoint");
}

HttpResponse RenderService::meta() const {
  const auto ckpt = std::atomic_load(&ckpt_);
  if (!ckpt) return error(503, "checkpoint loading");
  const auto& first = ckpt->scene.frames.front().camera;
  const json body = {{"S", ckpt->scene.sets},
                     {"N", ckpt->scene.frames.size()},
                     {"appearance_labels", ckpt->scene.labels},
                     {"image_size_limits", {{"min", kMinSize}, {"max", kMaxSize}}},
                     {"default_size", {{"w", first.width}, {"h", first.height}}}};
  return {200, "application/json", body.dump()};
}

HttpResponse RenderService::render(const std::map<std::string, std::string>& query) {
  const auto ckpt = std::atomic_load(&ckpt_);
  if (!ckpt) return error(503, "checkpoint loading");

  double coord[3];
  const char* names[3] = {"a", "b", "c"};
  for (int i = 0; i < 3; ++i) {
    const auto it = query.find(names[i]);
    if (it == query.end()) return error(400, std::string("missing parameter ") + names[i]);
    const auto v = parse_double(it->second);
    if (!v || *v < 0.0 || *v > 1.0) return error(400, std::string(names[i]) + " must be a number in [0, 1]");
    coord[i] = *v;
  }
  const auto& first = ckpt->scene.frames.front().camera;
  int size[2] = {first.width, first.height};
  const char* dims[2] = {"w", "h"};
  for (int i = 0; i < 2; ++i) {
    const auto it = query.find(dims[i]);
    if (it == query.end()) continue;
    const auto v = parse_int(it->second);
    if (!v || *v < kMinSize || *v > kMaxSize)
      return error(400, std::string(dims[i]) + " must be an integer in [" + std::to_string(kMinSize) + ", " +
                            std::to_string(kMaxSize) + "]");
    size[i] = *v;
  }

  const SpaceCoord q = quantize({coord[0], coord[1], coord[2]});
  const Key key{std::llround(q.a * 1e4), std::llround(q.b * 1e4), std::llround(q.c * 1e4), size[0], size[1]};
  {
    std::lock_guard lock(cache_mutex_);
    if (const auto it = cache_.find(key); it != cache_.end()) {
      ++hits_;
      return {200, "image/png", *it->second};
    }
  }
  const auto png = encode_png(render_space_point(*ckpt, q, size[0], size[1]).rgba);
  auto body = std::make_shared<const std::string>(png.begin(), png.end());
  {
    std::lock_guard lock(cache_mutex_);
    if (cache_.size() >= cache_capacity_) cache_.clear();
    cache_.emplace(key, body);
  }
  return {200, "image/png", *body};
}

void serve(const std::filesystem::path& checkpoint, const std::string& host, int port) {
  auto service = std::make_shared<RenderService>();
  std::thread loader([service, checkpoint] {
    try {
      service->install(std::make_shared<const Checkpoint>(load_checkpoint(checkpoint)));
      std::cerr << "loaded " << checkpoint.string() << '\n';
    } catch (const std::exception& e) {
      std::cerr << "failed to load checkpoint: " << e.what() << '\n';
    }
  });
  loader.detach();

  httplib::Server server;
  auto route = [service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    HttpResponse r;
    try {
      r = service->handle(req.path, query);
    } catch (const std::exception& e) {
      r = error(500, e.what());
    }
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body, r.content_type);
  };
  server.Get("/api/meta", route);
  server.Get("/api/render", route);
  std::cerr << "listening on " << host << ":" << port << '\n';
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace personerf
