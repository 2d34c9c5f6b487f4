#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "securepose/project.hpp"

namespace securepose::review {

struct ServiceOptions {
  std::string bind_address = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;  // browser client assets, served at /
  std::size_t cache_entries = 64;
};

/// Local HTTP service for the quality-check workflow.
///
///   GET  /videos                               stems, frame counts, sign-off state
///   GET  /videos/{stem}/frames/{i}?view=raw|rendered   PNG
///   GET  /videos/{stem}/boxes?frame=i          computed and effective boxes
///   GET  /videos/{stem}/overrides              override set
///   PUT  /videos/{stem}/overrides              replace set, returns new revision
///   DELETE /videos/{stem}/overrides/{id}       drop one override
///   POST /videos/{stem}/signoff                quality check complete
///
/// Rendered frames are produced on demand from the raw frame, the face-box
/// sidecar and the current overrides, cached by (stem, frame, revision). Writes
/// are serialized and persisted before they are acknowledged.
class ReviewService {
 public:
  /// Throws kNotReady unless at least one video has finished rendering.
  ReviewService(pipeline::Project& project, ServiceOptions options);
  ~ReviewService();

  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  /// Binds and starts serving on a background thread. Throws kStartup when the
  /// address cannot be bound.
  void start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

  int port() const;
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace securepose::review
