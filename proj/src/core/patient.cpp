#include "securepose/patient.hpp"

#include <algorithm>
#include <string>

#include "securepose/error.hpp"

namespace securepose::patient {

Selection score_tracks(const std::vector<Track>& tracks, const VideoGeometry& geom,
                       double presence_threshold) {
  if (!(presence_threshold > 0.0 && presence_threshold <= 1.0)) {
    throw Error(ErrorCode::kValidation, "presence threshold must lie in (0, 1]");
  }
  const Point center = geom.center();
  Selection sel;
  for (const Track& t : tracks) {
    TrackScore row;
    row.track_id = t.track_id;
    row.presence_ratio = t.presence_ratio;
    double sum = 0.0;
    for (const auto& [frame, skeleton] : t.frames) {
      if (auto c = centroid(skeleton)) {
        sum += distance(*c, center);
        ++row.scored_frames;
      }
    }
    if (row.scored_frames > 0) row.mean_center_distance = sum / static_cast<double>(row.scored_frames);
    row.eligible = t.presence_ratio >= presence_threshold && row.mean_center_distance.has_value();
    sel.scores.push_back(row);
  }
  std::sort(sel.scores.begin(), sel.scores.end(),
            [](const TrackScore& a, const TrackScore& b) { return a.track_id < b.track_id; });

  for (const TrackScore& row : sel.scores) {
    if (!row.eligible) continue;
    if (!sel.patient) {
      sel.patient = row.track_id;
      continue;
    }
    const auto best = std::find_if(sel.scores.begin(), sel.scores.end(), [&](const TrackScore& r) {
      return r.track_id == *sel.patient;
    });
    // Rows are in ascending ID order, so strict < keeps the lower ID on ties.
    if (*row.mean_center_distance < *best->mean_center_distance) sel.patient = row.track_id;
  }
  return sel;
}

Selection identify_patient(const std::vector<Track>& tracks, const VideoGeometry& geom,
                           double presence_threshold) {
  if (tracks.empty()) throw Error(ErrorCode::kInput, "no tracks to choose a patient from");
  Selection sel = score_tracks(tracks, geom, presence_threshold);
  if (!sel.patient) {
    throw Error(ErrorCode::kNoPatient,
                "no track is present in at least " + std::to_string(presence_threshold * 100.0) +
                    "% of frames; blur all persons instead");
  }
  return sel;
}

}  // namespace securepose::patient
