#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "securepose/model.hpp"

namespace securepose::interp {

enum class Scope { kFaceOnly, kWholeBody };

const char* to_string(Scope s);
Scope parse_scope(const std::string& s);  // "face" | "body"

/// Keypoint indices a scope is allowed to touch.
std::span<const int> scope_indices(Scope s);

enum class Repair {
  kInterpolated,   // interior gap, linear between bounding good frames
  kHeld,           // leading/trailing run, nearest good value held
  kUnrecoverable,  // no good observation of this keypoint anywhere in the track
};

const char* to_string(Repair r);

struct BadFrame {
  FrameIndex frame = 0;
  TrackId track_id = 0;
  int keypoint = 0;
  Repair repair = Repair::kInterpolated;

  friend bool operator==(const BadFrame&, const BadFrame&) = default;
};

struct TrackRepair {
  Track track;
  std::vector<BadFrame> report;
  std::vector<int> unrecoverable;  // keypoint indices left as-is
};

/// Replaces every observation with c < conf_threshold inside `scope`.
///
/// Interior runs bounded by good frames a < b get per-axis linear values
/// x(f) = x(a) + (x(b) - x(a)) * (f - a) / (b - a); edge runs hold the nearest good
/// value. Repaired keypoints get c = conf_threshold and the interpolated flag.
/// Good observations are returned untouched.
TrackRepair interpolate_track(const Track& track, Scope scope, double conf_threshold = kReliableConfidence);

struct FramesRepair {
  std::vector<FramePose> frames;
  std::vector<BadFrame> report;
  std::map<TrackId, std::vector<int>> unrecoverable;
};

/// Groups tracked frames by ID, repairs each track (in parallel) and writes the
/// repaired skeletons back in place. People keep their order within each frame.
FramesRepair interpolate_frames(std::vector<FramePose> frames, Scope scope,
                                double conf_threshold = kReliableConfidence);

}  // namespace securepose::interp
