#pragma once

#include "personerf/space.hpp"

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

namespace personerf {

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Request handling of the render API, independent of the transport.
/// Until a checkpoint is installed every request answers 503.
class RenderService {
 public:
  static constexpr int kMinSize = 1;
  static constexpr int kMaxSize = 1024;

  explicit RenderService(std::size_t cache_capacity = 512) : cache_capacity_(cache_capacity) {}

  void install(std::shared_ptr<const Checkpoint> ckpt);
  bool ready() const { return std::atomic_load(&ckpt_) != nullptr; }

  HttpResponse handle(const std::string& path, const std::map<std::string, std::string>& query);
  HttpResponse meta() const;
  HttpResponse render(const std::map<std::string, std::string>& query);

  std::size_t cache_hits() const { return hits_; }

 private:
  using Key = std::tuple<long long, long long, long long, int, int>;

  std::shared_ptr<const Checkpoint> ckpt_;
  std::size_t cache_capacity_;
  std::mutex cache_mutex_;
  std::map<Key, std::shared_ptr<const std::string>> cache_;
  std::atomic<std::size_t> hits_{0};
};

/// Blocks serving HTTP on host:port. The checkpoint loads in the background;
/// requests made meanwhile get 503.
void serve(const std::filesystem::path& checkpoint, const std::string& host, int port);

}  // namespace personerf
