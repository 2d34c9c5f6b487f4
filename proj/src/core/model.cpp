#include "securepose/model.hpp"

#include <cmath>
#include <string>

#include "securepose/error.hpp"

namespace securepose {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInput: return "input error";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kSchema: return "schema error";
    case ErrorCode::kGeometry: return "geometry error";
    case ErrorCode::kGap: return "gap error";
    case ErrorCode::kIo: return "I/O error";
    case ErrorCode::kContract: return "contract violation";
    case ErrorCode::kNotFound: return "not found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kValidation: return "validation error";
    case ErrorCode::kNotReady: return "not ready";
    case ErrorCode::kNoPatient: return "no patient";
    case ErrorCode::kStep: return "step failure";
    case ErrorCode::kPrivacy: return "privacy guard refusal";
    case ErrorCode::kAlignment: return "alignment error";
    case ErrorCode::kUndefinedAp: return "undefined average precision";
    case ErrorCode::kUnrecoverable: return "unrecoverable keypoint";
    case ErrorCode::kStartup: return "startup error";
    case ErrorCode::kInternal: return "internal error";
  }
  return "unknown error";
}

namespace body25 {
const char* name(int index) {
  static constexpr std::array<const char*, kCount> kNames = {
      "Nose",    "Neck",      "RShoulder", "RElbow", "RWrist",    "LShoulder", "LElbow",
      "LWrist",  "MidHip",    "RHip",      "RKnee",  "RAnkle",    "LHip",      "LKnee",
      "LAnkle",  "REye",      "LEye",      "REar",   "LEar",      "LBigToe",   "LSmallToe",
      "LHeel",   "RBigToe",   "RSmallToe", "RHeel"};
  if (index < 0 || index >= kCount) return "?";
  return kNames[static_cast<std::size_t>(index)];
}
}  // namespace body25

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::optional<Point> centroid(const Skeleton& s) {
  double sx = 0.0;
  double sy = 0.0;
  int n = 0;
  for (const Keypoint& k : s.keypoints) {
    if (k.c >= kReliableConfidence) {
      sx += k.x;
      sy += k.y;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return Point{sx / n, sy / n};
}

Skeleton shifted(const Skeleton& s, Point delta) {
  Skeleton out = s;
  for (Keypoint& k : out.keypoints) {
    k.x += delta.x;
    k.y += delta.y;
  }
  return out;
}

double VideoGeometry::diagonal() const {
  return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

void VideoGeometry::validate() const {
  if (width <= 0 || height <= 0 || frame_count <= 0 || !(fps > 0.0)) {
    throw Error(ErrorCode::kGeometry,
                "video geometry must be positive (width=" + std::to_string(width) +
                    ", height=" + std::to_string(height) +
                    ", frames=" + std::to_string(frame_count) + ")");
  }
}

std::vector<Track> group_tracks(const std::vector<FramePose>& frames, FrameIndex counted_frames) {
  std::map<TrackId, Track> by_id;
  for (const FramePose& f : frames) {
    for (const PersonEntry& p : f.people) {
      if (!p.track_id) {
        throw Error(ErrorCode::kContract,
                    "frame " + std::to_string(f.frame_index) + " has a person without track_id");
      }
      Track& t = by_id[*p.track_id];
      t.track_id = *p.track_id;
      if (!t.frames.emplace(f.frame_index, p.skeleton).second) {
        throw Error(ErrorCode::kContract, "track " + std::to_string(*p.track_id) +
                                              " appears twice in frame " +
                                              std::to_string(f.frame_index));
      }
    }
  }
  std::vector<Track> out;
  out.reserve(by_id.size());
  for (auto& [id, t] : by_id) {
    t.presence_ratio =
        counted_frames > 0 ? static_cast<double>(t.frames.size()) / static_cast<double>(counted_frames)
                           : 0.0;
    if (t.presence_ratio > 1.0) t.presence_ratio = 1.0;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace securepose
