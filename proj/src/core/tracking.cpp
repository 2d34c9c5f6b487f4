#include "securepose/tracking.hpp"

#include <algorithm>
#include <string>
#include <tuple>

#include "securepose/error.hpp"

namespace securepose::tracking {

std::optional<Point> matching_position(const Skeleton& s) {
  if (auto c = centroid(s)) return c;
  double sx = 0.0;
  double sy = 0.0;
  int n = 0;
  for (const Keypoint& k : s.keypoints) {
    if (k.c > 0.0) {
      sx += k.x;
      sy += k.y;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return Point{sx / n, sy / n};
}

TrackerState::TrackerState(double new_person_distance) : threshold_(new_person_distance) {}

std::map<TrackId, Point> TrackerState::averaged_centroids(FrameIndex frame) const {
  std::map<TrackId, Point> out;
  for (const auto& [id, window] : history_) {
    double sx = 0.0;
    double sy = 0.0;
    int n = 0;
    for (const Observation& o : window) {
      if (o.frame >= frame - kHistoryWindow && o.frame < frame) {
        sx += o.position.x;
        sy += o.position.y;
        ++n;
      }
    }
    if (n > 0) out.emplace(id, Point{sx / n, sy / n});
  }
  return out;
}

std::vector<TrackId> TrackerState::observe(FrameIndex frame,
                                           const std::vector<std::optional<Point>>& people) {
  if (last_frame_ && frame <= *last_frame_) {
    throw Error(ErrorCode::kValidation, "frame " + std::to_string(frame) +
                                            " arrived after frame " + std::to_string(*last_frame_));
  }
  last_frame_ = frame;

  std::vector<std::optional<TrackId>> assigned(people.size());
  if (started_) {
    // Drop observations that have slid out of the window.
    for (auto it = history_.begin(); it != history_.end();) {
      auto& window = it->second;
      while (!window.empty() && window.front().frame < frame - kHistoryWindow) window.pop_front();
      it = window.empty() ? history_.erase(it) : std::next(it);
    }
    const std::map<TrackId, Point> reference = averaged_centroids(frame);

    using Candidate = std::tuple<double, TrackId, std::size_t>;
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < people.size(); ++p) {
      if (!people[p]) continue;
      for (const auto& [id, avg] : reference) {
        double d = distance(*people[p], avg);
        if (d <= threshold_) candidates.emplace_back(d, id, p);
      }
    }
    std::sort(candidates.begin(), candidates.end());
    std::vector<bool> person_used(people.size(), false);
    std::map<TrackId, bool> track_used;
    for (const auto& [d, id, p] : candidates) {
      if (person_used[p] || track_used[id]) continue;
      person_used[p] = true;
      track_used[id] = true;
      assigned[p] = id;
    }
  }
  started_ = true;

  std::vector<TrackId> ids(people.size());
  for (std::size_t p = 0; p < people.size(); ++p) {
    ids[p] = assigned[p] ? *assigned[p] : next_id_++;
    if (people[p]) history_[ids[p]].push_back({frame, *people[p]});
  }
  return ids;
}

TrackingResult assign_ids(std::vector<FramePose> frames, const VideoGeometry& geom,
                          double threshold_fraction, std::optional<FrameIndex> counted_frames) {
  if (frames.empty()) throw Error(ErrorCode::kInput, "no frames to track");
  if (!(threshold_fraction > 0.0 && threshold_fraction <= 1.0)) {
    throw Error(ErrorCode::kValidation, "new-person threshold must lie in (0, 1]");
  }
  geom.validate();

  TrackingResult result;
  TrackerState state(threshold_fraction * geom.diagonal());
  for (FramePose& f : frames) {
    std::vector<std::optional<Point>> positions;
    positions.reserve(f.people.size());
    for (const PersonEntry& p : f.people) positions.push_back(matching_position(p.skeleton));

    TrackId before = state.next_id();
    std::vector<TrackId> ids = state.observe(f.frame_index, positions);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      f.people[i].track_id = ids[i];
      if (ids[i] >= before) result.new_ids.push_back({f.frame_index, ids[i], i});
    }
  }
  result.tracks = group_tracks(frames, counted_frames.value_or(geom.frame_count));
  result.frames = std::move(frames);
  return result;
}

}  // namespace securepose::tracking
