#include "securepose/review_service.hpp"

#include <list>
#include <map>
#include <shared_mutex>
#include <thread>
#include <tuple>

#include <httplib.h>
#include <json.hpp>

#include "securepose/blur.hpp"
#include "securepose/error.hpp"
#include "securepose/ingest.hpp"
#include "securepose/overrides.hpp"
#include "securepose/pipeline.hpp"

namespace securepose::review {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse:
    case ErrorCode::kSchema:
    case ErrorCode::kValidation:
    case ErrorCode::kInput:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kNotReady:
      return 409;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, {{"error", to_string(code)}, {"message", message}}, http_status(code));
}

json region_json(const blur::Region& r) {
  return {{"id", r.id}, {"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}, {"style", blur::to_string(r.style)}};
}

}  // namespace

struct ReviewService::Impl {
  struct Video {
    pipeline::VideoEntry entry;
    bool rendered = false;
    ingest::FrameStore store;
    std::vector<blur::FaceBox> boxes;
    blur::EffectiveBoxes computed;  // target boxes before overrides
    OverrideSet overrides;
    fs::path override_file;
  };

  using CacheKey = std::tuple<std::string, FrameIndex, std::int64_t>;

  pipeline::Project& project;
  ServiceOptions options;
  httplib::Server server;
  std::thread thread;
  int bound_port = 0;

  mutable std::shared_mutex state_mutex;
  std::map<std::string, Video> videos;

  std::mutex cache_mutex;
  std::list<std::pair<CacheKey, std::string>> cache;  // most recent first

  Impl(pipeline::Project& p, ServiceOptions o) : project(p), options(std::move(o)) {
    const pipeline::ProjectConfig cfg = project.config();
    bool any = false;
    for (const pipeline::VideoEntry& v : cfg.videos) {
      Video video;
      video.entry = v;
      const fs::path dir = project.video_dir(v.stem);
      video.override_file = dir / pipeline::layout::kOverrides;
      video.overrides = load_override_file(video.override_file);
      if (project.ledger(v.stem).done(pipeline::Step::kRender)) {
        video.rendered = true;
        video.store = ingest::FrameStore(v.frame_dir, pipeline::read_geometry(project, v.stem));
        video.boxes = blur::read_face_boxes(dir / pipeline::layout::kFaceBoxes);
        video.computed = blur::target_regions(video.boxes, pipeline::blur_spec(project, v.stem));
        any = true;
      }
      videos.emplace(v.stem, std::move(video));
    }
    if (!any) {
      throw Error(ErrorCode::kNotReady, "no video in project '" + cfg.name + "' has been rendered yet");
    }
    routes();
  }

  Video& rendered_video(const std::string& stem) {
    auto it = videos.find(stem);
    if (it == videos.end()) throw Error(ErrorCode::kNotFound, "unknown video '" + stem + "'");
    if (!it->second.rendered) throw Error(ErrorCode::kNotReady, "video '" + stem + "' has not been rendered");
    return it->second;
  }

  FrameIndex frame_arg(const Video& v, const std::string& text) {
    FrameIndex f = -1;
    try {
      f = std::stoll(text);
    } catch (...) {
      throw Error(ErrorCode::kValidation, "frame index '" + text + "' is not a number");
    }
    if (!v.store.contains(f)) throw Error(ErrorCode::kNotFound, "frame " + text + " is out of range");
    return f;
  }

  std::optional<std::string> cached(const CacheKey& key) {
    std::lock_guard lock(cache_mutex);
    for (auto it = cache.begin(); it != cache.end(); ++it) {
      if (it->first == key) {
        cache.splice(cache.begin(), cache, it);
        return cache.front().second;
      }
    }
    return std::nullopt;
  }

  void remember(const CacheKey& key, const std::string& bytes) {
    std::lock_guard lock(cache_mutex);
    cache.emplace_front(key, bytes);
    while (cache.size() > options.cache_entries) cache.pop_back();
  }

  template <typename Fn>
  void guarded(httplib::Response& res, Fn&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const std::exception& e) {
      send_error(res, ErrorCode::kInternal, e.what());
    }
  }

  void routes() {
    server.Get("/videos", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        std::shared_lock lock(state_mutex);
        json list = json::array();
        for (const auto& [stem, v] : videos) {
          list.push_back({{"stem", stem},
                          {"frame_count", v.rendered ? json(v.store.geometry().frame_count) : json(nullptr)},
                          {"rendered", v.rendered},
                          {"revision", v.overrides.revision},
                          {"quality_check", pipeline::to_string(project.ledger(stem).quality_check)}});
        }
        send_json(res, list);
      });
    });

    server.Get(R"(/videos/([^/]+)/frames/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::string view = req.has_param("view") ? req.get_param_value("view") : "rendered";
        if (view != "raw" && view != "rendered") {
          throw Error(ErrorCode::kValidation, "view must be raw or rendered");
        }
        std::shared_lock lock(state_mutex);
        Video& v = rendered_video(req.matches[1]);
        const FrameIndex f = frame_arg(v, req.matches[2]);
        const CacheKey key{v.entry.stem + (view == "raw" ? "#raw" : ""), f,
                           view == "raw" ? std::int64_t{-1} : v.overrides.revision};
        std::optional<std::string> bytes = cached(key);
        if (!bytes) {
          cv::Mat image = v.store.read(f);
          if (view == "rendered") {
            const blur::EffectiveBoxes effective = apply_overrides(v.computed, v.overrides);
            if (auto it = effective.find(f); it != effective.end()) blur::render_frame(image, it->second);
          }
          std::vector<unsigned char> png = ingest::encode_png(image);
          bytes = std::string(png.begin(), png.end());
          remember(key, *bytes);
        }
        res.set_header("X-Revision", std::to_string(v.overrides.revision));
        res.set_content(*bytes, "image/png");
      });
    });

    server.Get(R"(/videos/([^/]+)/boxes)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::shared_lock lock(state_mutex);
        Video& v = rendered_video(req.matches[1]);
        if (!req.has_param("frame")) throw Error(ErrorCode::kValidation, "frame parameter is required");
        const FrameIndex f = frame_arg(v, req.get_param_value("frame"));
        const blur::EffectiveBoxes effective = apply_overrides(v.computed, v.overrides);
        std::vector<blur::Region> active;
        if (auto it = effective.find(f); it != effective.end()) active = it->second;
        json computed = json::array();
        for (const blur::FaceBox& b : v.boxes) {
          if (b.frame != f) continue;
          const std::string id = blur::track_box_id(b.track_id);
          const bool on = std::any_of(active.begin(), active.end(), [&](const blur::Region& r) { return r.id == id; });
          computed.push_back({{"id", id},
                              {"track_id", b.track_id},
                              {"cx", b.center.x},
                              {"cy", b.center.y},
                              {"side", b.side},
                              {"origin", blur::to_string(b.origin)},
                              {"active", on}});
        }
        json eff = json::array();
        for (const blur::Region& r : active) eff.push_back(region_json(r));
        send_json(res, {{"frame", f}, {"revision", v.overrides.revision}, {"computed", computed}, {"effective", eff}});
      });
    });

    server.Get(R"(/videos/([^/]+)/overrides)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::shared_lock lock(state_mutex);
        Video& v = rendered_video(req.matches[1]);
        res.set_content(to_json(v.overrides), "application/json");
      });
    });

    server.Put(R"(/videos/([^/]+)/overrides)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::unique_lock lock(state_mutex);
        Video& v = rendered_video(req.matches[1]);
        OverrideSet incoming = parse_override_set(req.body);
        const json raw = json::parse(req.body);
        if (raw.contains("revision") && raw["revision"].get<std::int64_t>() != v.overrides.revision) {
          throw Error(ErrorCode::kConflict, "stale revision " + raw["revision"].dump() + ", current is " +
                                                std::to_string(v.overrides.revision));
        }
        std::int64_t next_id = 0;
        for (const Override& o : incoming.overrides) next_id = std::max(next_id, o.id);
        for (const Override& o : v.overrides.overrides) next_id = std::max(next_id, o.id);
        for (Override& o : incoming.overrides) {
          if (o.id <= 0) o.id = ++next_id;
          o.stem = v.entry.stem;
        }
        commit(v, std::move(incoming.overrides));
        send_json(res, {{"revision", v.overrides.revision}});
      });
    });

    server.Delete(R"(/videos/([^/]+)/overrides/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::unique_lock lock(state_mutex);
        Video& v = rendered_video(req.matches[1]);
        const std::int64_t id = std::stoll(req.matches[2]);
        std::vector<Override> list = v.overrides.overrides;
        auto removed = std::erase_if(list, [&](const Override& o) { return o.id == id; });
        if (removed == 0) throw Error(ErrorCode::kNotFound, "no override with id " + std::to_string(id));
        commit(v, std::move(list));
        send_json(res, {{"revision", v.overrides.revision}});
      });
    });

    server.Post(R"(/videos/([^/]+)/signoff)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::unique_lock lock(state_mutex);
        Video& v = rendered_video(req.matches[1]);
        project.set_quality_check(v.entry.stem, pipeline::QualityCheck::kComplete);
        project.log("[" + v.entry.stem + "] quality check signed off at override revision " +
                    std::to_string(v.overrides.revision));
        send_json(res, {{"stem", v.entry.stem}, {"quality_check", "complete"}, {"revision", v.overrides.revision}});
      });
    });

    if (options.static_dir) server.set_mount_point("/", options.static_dir->string());
  }

  // Caller holds the exclusive lock. Validates, persists, then publishes.
  void commit(Video& v, std::vector<Override> list) {
    OverrideSet next{std::move(list), v.overrides.revision + 1};
    validate(next, v.store.geometry().frame_count);
    apply_overrides(v.computed, next);
    save_override_file(v.override_file, next);
    v.overrides = std::move(next);
    if (project.ledger(v.entry.stem).quality_check == pipeline::QualityCheck::kComplete) {
      project.set_quality_check(v.entry.stem, pipeline::QualityCheck::kPending);
    }
    project.log("[" + v.entry.stem + "] overrides updated to revision " + std::to_string(v.overrides.revision));
  }
};

ReviewService::ReviewService(pipeline::Project& project, ServiceOptions options)
    : impl_(std::make_unique<Impl>(project, std::move(options))) {}

ReviewService::~ReviewService() { stop(); }

void ReviewService::start() {
  if (impl_->thread.joinable()) return;
  const std::string& host = impl_->options.bind_address;
  // httplib's default adds SO_REUSEPORT, which lets a second server share a busy port.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (impl_->options.port == 0) {
    impl_->bound_port = impl_->server.bind_to_any_port(host);
    if (impl_->bound_port < 0) throw Error(ErrorCode::kStartup, "cannot bind " + host);
  } else {
    if (!impl_->server.bind_to_port(host, impl_->options.port)) {
      throw Error(ErrorCode::kStartup,
                  "cannot bind " + host + ":" + std::to_string(impl_->options.port) + " (port busy?)");
    }
    impl_->bound_port = impl_->options.port;
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  impl_->project.log("review service listening on " + host + ":" + std::to_string(impl_->bound_port));
}

void ReviewService::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void ReviewService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int ReviewService::port() const { return impl_->bound_port; }

bool ReviewService::running() const { return impl_->server.is_running(); }

}  // namespace securepose::review
