#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace securepose {

using FrameIndex = std::int64_t;
using TrackId = std::int64_t;

// BODY_25 keypoint layout.
namespace body25 {
inline constexpr int kNose = 0;
inline constexpr int kNeck = 1;
inline constexpr int kRShoulder = 2;
inline constexpr int kRElbow = 3;
inline constexpr int kRWrist = 4;
inline constexpr int kLShoulder = 5;
inline constexpr int kLElbow = 6;
inline constexpr int kLWrist = 7;
inline constexpr int kMidHip = 8;
inline constexpr int kRHip = 9;
inline constexpr int kRKnee = 10;
inline constexpr int kRAnkle = 11;
inline constexpr int kLHip = 12;
inline constexpr int kLKnee = 13;
inline constexpr int kLAnkle = 14;
inline constexpr int kREye = 15;
inline constexpr int kLEye = 16;
inline constexpr int kREar = 17;
inline constexpr int kLEar = 18;
inline constexpr int kLBigToe = 19;
inline constexpr int kLSmallToe = 20;
inline constexpr int kLHeel = 21;
inline constexpr int kRBigToe = 22;
inline constexpr int kRSmallToe = 23;
inline constexpr int kRHeel = 24;

inline constexpr int kCount = 25;
inline constexpr std::array<int, 5> kFace = {kNose, kREye, kLEye, kREar, kLEar};

const char* name(int index);
}  // namespace body25

/// Confidence at or above which a keypoint counts as reliable.
inline constexpr double kReliableConfidence = 0.5;

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

double distance(Point a, Point b);

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double c = 0.0;
  // Set when the coordinates were synthesized by interpolation rather than measured.
  bool interpolated = false;

  /// (0, 0, 0) is the estimator's encoding for "not detected".
  bool undetected() const { return x == 0.0 && y == 0.0 && c == 0.0; }
  Point point() const { return {x, y}; }

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct Skeleton {
  std::array<Keypoint, body25::kCount> keypoints{};

  Keypoint& operator[](int i) { return keypoints[static_cast<std::size_t>(i)]; }
  const Keypoint& operator[](int i) const { return keypoints[static_cast<std::size_t>(i)]; }

  friend bool operator==(const Skeleton&, const Skeleton&) = default;
};

/// Mean (x, y) of all keypoints with c >= 0.5; absent when none qualify.
std::optional<Point> centroid(const Skeleton& s);

Skeleton shifted(const Skeleton& s, Point delta);

struct PersonEntry {
  Skeleton skeleton;
  std::optional<TrackId> track_id;

  friend bool operator==(const PersonEntry&, const PersonEntry&) = default;
};

struct FramePose {
  FrameIndex frame_index = 0;
  std::vector<PersonEntry> people;

  friend bool operator==(const FramePose&, const FramePose&) = default;
};

struct Track {
  TrackId track_id = 0;
  std::map<FrameIndex, Skeleton> frames;
  double presence_ratio = 0.0;

  friend bool operator==(const Track&, const Track&) = default;
};

struct VideoGeometry {
  int width = 0;
  int height = 0;
  FrameIndex frame_count = 0;
  double fps = 30.0;

  double diagonal() const;
  Point center() const { return {width / 2.0, height / 2.0}; }
  /// Throws Error(kGeometry) unless every field is positive.
  void validate() const;

  friend bool operator==(const VideoGeometry&, const VideoGeometry&) = default;
};

/// Groups tracked frames into per-ID tracks. presence_ratio uses `counted_frames`
/// as the denominator. Throws kContract if any person lacks a track_id.
std::vector<Track> group_tracks(const std::vector<FramePose>& frames, FrameIndex counted_frames);

}  // namespace securepose
