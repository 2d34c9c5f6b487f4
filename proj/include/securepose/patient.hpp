#pragma once

#include <optional>
#include <vector>

#include "securepose/model.hpp"

namespace securepose::patient {

inline constexpr double kDefaultPresence = 0.8;

struct TrackScore {
  TrackId track_id = 0;
  double presence_ratio = 0.0;
  bool eligible = false;              // passed the presence filter and has a score
  std::optional<double> mean_center_distance;  // absent when no frame had a centroid
  std::size_t scored_frames = 0;

  friend bool operator==(const TrackScore&, const TrackScore&) = default;
};

struct Selection {
  std::optional<TrackId> patient;  // absent when no track qualified
  std::vector<TrackScore> scores;  // one row per input track, ordered by track_id
};

/// Score table for every track: presence filter plus mean centroid distance to
/// the frame center (frames without a centroid are skipped).
Selection score_tracks(const std::vector<Track>& tracks, const VideoGeometry& geom,
                       double presence_threshold = kDefaultPresence);

/// Picks the eligible track closest on average to the frame center, lowest ID on
/// ties. Throws kNoPatient when nothing passes the presence filter, kInput for an
/// empty track list and kValidation for a threshold outside (0, 1].
Selection identify_patient(const std::vector<Track>& tracks, const VideoGeometry& geom,
                           double presence_threshold = kDefaultPresence);

}  // namespace securepose::patient
