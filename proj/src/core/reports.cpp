#include "reports.hpp"

#include <map>

namespace securepose::detail {

using nlohmann::json;

json tracking_report(const tracking::TrackingResult& r, double threshold_fraction, const VideoGeometry& geom) {
  json tracks = json::array();
  for (const Track& t : r.tracks) {
    tracks.push_back({{"track_id", t.track_id},
                      {"frames", t.frames.size()},
                      {"first_frame", t.frames.begin()->first},
                      {"last_frame", t.frames.rbegin()->first},
                      {"presence_ratio", t.presence_ratio}});
  }
  json events = json::array();
  for (const auto& e : r.new_ids) {
    events.push_back({{"frame", e.frame}, {"track_id", e.track_id}, {"person_index", e.person_index}});
  }
  return {{"threshold_fraction", threshold_fraction},
          {"threshold_px", threshold_fraction * geom.diagonal()},
          {"tracks", tracks},
          {"new_ids", events}};
}

json interpolation_report(const interp::FramesRepair& r, interp::Scope scope, double conf_threshold) {
  json bad = json::array();
  for (const interp::BadFrame& b : r.report) {
    bad.push_back({{"frame", b.frame}, {"track_id", b.track_id}, {"keypoint", b.keypoint},
                   {"reason", interp::to_string(b.repair)}});
  }
  json unrecoverable = json::object();
  for (const auto& [id, ks] : r.unrecoverable) unrecoverable[std::to_string(id)] = ks;
  return {{"scope", interp::to_string(scope)},
          {"conf_threshold", conf_threshold},
          {"bad_frames", bad},
          {"unrecoverable", unrecoverable}};
}

json patient_report(const patient::Selection& sel, const std::string& source, double presence_threshold) {
  json scores = json::array();
  for (const patient::TrackScore& s : sel.scores) {
    scores.push_back({{"track_id", s.track_id},
                      {"presence_ratio", s.presence_ratio},
                      {"eligible", s.eligible},
                      {"mean_center_distance",
                       s.mean_center_distance ? json(*s.mean_center_distance) : json(nullptr)},
                      {"scored_frames", s.scored_frames}});
  }
  return {{"patient", sel.patient ? json(*sel.patient) : json(nullptr)},
          {"source", source},
          {"presence_threshold", presence_threshold},
          {"scores", scores}};
}

json face_box_report(const blur::FaceBoxes& boxes) {
  std::map<std::string, int> origins;
  for (const blur::FaceBox& b : boxes.boxes) ++origins[blur::to_string(b.origin)];
  json unlocated = json::array();
  for (const auto& [f, id] : boxes.unlocated) unlocated.push_back({{"frame", f}, {"track_id", id}});
  return {{"boxes", boxes.boxes.size()}, {"side_origins", origins}, {"unlocated", unlocated}};
}

json eval_report(const eval::EvalReport& r, double iou_threshold) {
  json curve = json::array();
  for (const eval::PrPoint& p : r.pr_curve) curve.push_back({{"recall", p.recall}, {"precision", p.precision}});
  return {{"iou_threshold", iou_threshold},
          {"tp", r.tp},
          {"fp", r.fp},
          {"fn", r.fn},
          {"precision", r.metrics.precision},
          {"recall", r.metrics.recall},
          {"f1", r.metrics.f1},
          {"degenerate", r.metrics.degenerate},
          {"ap", r.ap ? json(*r.ap) : json(nullptr)},
          {"pr_curve", curve}};
}

}  // namespace securepose::detail
