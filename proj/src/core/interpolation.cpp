#include "securepose/interpolation.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <tuple>

#include "securepose/error.hpp"
#include "util.hpp"

namespace securepose::interp {

namespace {

constexpr std::array<int, body25::kCount> kAllIndices = [] {
  std::array<int, body25::kCount> a{};
  for (int i = 0; i < body25::kCount; ++i) a[static_cast<std::size_t>(i)] = i;
  return a;
}();

}  // namespace

const char* to_string(Scope s) { return s == Scope::kFaceOnly ? "face" : "body"; }

Scope parse_scope(const std::string& s) {
  if (s == "face") return Scope::kFaceOnly;
  if (s == "body") return Scope::kWholeBody;
  throw Error(ErrorCode::kValidation, "unknown interpolation scope '" + s + "' (face|body)");
}

const char* to_string(Repair r) {
  switch (r) {
    case Repair::kInterpolated: return "interpolated";
    case Repair::kHeld: return "held";
    case Repair::kUnrecoverable: return "unrecoverable";
  }
  return "?";
}

std::span<const int> scope_indices(Scope s) {
  if (s == Scope::kFaceOnly) return body25::kFace;
  return kAllIndices;
}

TrackRepair interpolate_track(const Track& track, Scope scope, double conf_threshold) {
  if (!(conf_threshold > 0.0 && conf_threshold < 1.0)) {
    throw Error(ErrorCode::kValidation, "confidence threshold must lie in (0, 1)");
  }
  TrackRepair out;
  out.track = track;

  std::vector<FrameIndex> order;
  order.reserve(track.frames.size());
  for (const auto& [f, s] : track.frames) order.push_back(f);

  for (int k : scope_indices(scope)) {
    std::vector<std::size_t> good;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (track.frames.at(order[i])[k].c >= conf_threshold) good.push_back(i);
    }
    auto mark = [&](std::size_t i, Repair r) {
      out.report.push_back({order[i], track.track_id, k, r});
    };
    if (good.empty()) {
      if (!order.empty()) out.unrecoverable.push_back(k);
      for (std::size_t i = 0; i < order.size(); ++i) mark(i, Repair::kUnrecoverable);
      continue;
    }
    auto repair = [&](std::size_t i, double x, double y) {
      Keypoint& kp = out.track.frames[order[i]][k];
      kp = {x, y, conf_threshold, true};
    };

    const Keypoint first = track.frames.at(order[good.front()])[k];
    for (std::size_t i = 0; i < good.front(); ++i) {
      repair(i, first.x, first.y);
      mark(i, Repair::kHeld);
    }
    for (std::size_t g = 0; g + 1 < good.size(); ++g) {
      std::size_t lo = good[g];
      std::size_t hi = good[g + 1];
      if (hi == lo + 1) continue;
      const Keypoint a = track.frames.at(order[lo])[k];
      const Keypoint b = track.frames.at(order[hi])[k];
      const double fa = static_cast<double>(order[lo]);
      const double span = static_cast<double>(order[hi]) - fa;
      for (std::size_t i = lo + 1; i < hi; ++i) {
        const double t = (static_cast<double>(order[i]) - fa) / span;
        repair(i, a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
        mark(i, Repair::kInterpolated);
      }
    }
    const Keypoint last = track.frames.at(order[good.back()])[k];
    for (std::size_t i = good.back() + 1; i < order.size(); ++i) {
      repair(i, last.x, last.y);
      mark(i, Repair::kHeld);
    }
  }
  std::sort(out.report.begin(), out.report.end(), [](const BadFrame& a, const BadFrame& b) {
    return std::tie(a.frame, a.keypoint) < std::tie(b.frame, b.keypoint);
  });
  return out;
}

FramesRepair interpolate_frames(std::vector<FramePose> frames, Scope scope, double conf_threshold) {
  std::vector<Track> tracks = group_tracks(frames, static_cast<FrameIndex>(frames.size()));
  std::vector<TrackRepair> repaired(tracks.size());
  detail::parallel_for(tracks.size(), [&](std::size_t i) {
    repaired[i] = interpolate_track(tracks[i], scope, conf_threshold);
  });

  std::map<TrackId, const Track*> by_id;
  FramesRepair out;
  for (const TrackRepair& r : repaired) {
    by_id[r.track.track_id] = &r.track;
    out.report.insert(out.report.end(), r.report.begin(), r.report.end());
    if (!r.unrecoverable.empty()) out.unrecoverable[r.track.track_id] = r.unrecoverable;
  }
  for (FramePose& f : frames) {
    for (PersonEntry& p : f.people) p.skeleton = by_id.at(*p.track_id)->frames.at(f.frame_index);
  }
  std::sort(out.report.begin(), out.report.end(), [](const BadFrame& a, const BadFrame& b) {
    return std::tie(a.frame, a.track_id, a.keypoint) < std::tie(b.frame, b.track_id, b.keypoint);
  });
  out.frames = std::move(frames);
  return out;
}

}  // namespace securepose::interp
