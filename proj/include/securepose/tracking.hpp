#pragma once

#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "securepose/model.hpp"

namespace securepose::tracking {

inline constexpr double kDefaultNewPersonFraction = 0.15;
inline constexpr FrameIndex kHistoryWindow = 5;

/// Where a person is for matching purposes: the confident centroid, else the
/// mean of every detected keypoint (c > 0), else nothing.
std::optional<Point> matching_position(const Skeleton& s);

/// Centroid-history tracker. Each track remembers the positions it was observed
/// at during the last five frames; a person is matched against the average of
/// that window.
class TrackerState {
 public:
  explicit TrackerState(double new_person_distance);

  /// Assigns an ID to every person of one frame. Frames must arrive in strictly
  /// increasing index order.
  std::vector<TrackId> observe(FrameIndex frame, const std::vector<std::optional<Point>>& people);

  TrackId next_id() const { return next_id_; }
  double new_person_distance() const { return threshold_; }
  /// Averaged window centroid for each track still inside the window of `frame`.
  std::map<TrackId, Point> averaged_centroids(FrameIndex frame) const;

 private:
  struct Observation {
    FrameIndex frame;
    Point position;
  };

  double threshold_;
  TrackId next_id_ = 0;
  bool started_ = false;
  std::optional<FrameIndex> last_frame_;
  std::map<TrackId, std::deque<Observation>> history_;
};

struct NewIdEvent {
  FrameIndex frame = 0;
  TrackId track_id = 0;
  std::size_t person_index = 0;  // position within the frame's people list
};

struct TrackingResult {
  std::vector<FramePose> frames;
  std::vector<Track> tracks;
  std::vector<NewIdEvent> new_ids;
};

/// Tags every person with a track ID. `counted_frames` is the presence-ratio
/// denominator and defaults to geom.frame_count.
/// Errors: kInput for an empty list, kValidation for a threshold outside (0, 1]
/// or frames out of order.
TrackingResult assign_ids(std::vector<FramePose> frames, const VideoGeometry& geom,
                          double threshold_fraction = kDefaultNewPersonFraction,
                          std::optional<FrameIndex> counted_frames = std::nullopt);

}  // namespace securepose::tracking
