#include "securepose/evaluation.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "securepose/error.hpp"
#include "util.hpp"

namespace securepose::eval {

namespace {

void check_box(const Box& b, const std::string& where) {
  if (!(b.w > 0.0 && b.h > 0.0)) throw Error(ErrorCode::kValidation, where + ": box needs w > 0 and h > 0");
}

// Indices sorted by descending confidence, input order among equals.
std::vector<std::size_t> confidence_order(std::span<const DetectionBox> detections) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].confidence.value_or(0.0) > detections[b].confidence.value_or(0.0);
  });
  return order;
}

// Claims the best unmatched truth for one detection; returns its index or npos.
std::size_t claim(const Box& det, std::span<const GroundTruthBox> truths,
                  std::span<const std::size_t> candidates, std::vector<bool>& used, double threshold) {
  std::size_t best = static_cast<std::size_t>(-1);
  double best_iou = -1.0;
  for (std::size_t g : candidates) {
    if (used[g]) continue;
    double v = iou(det, truths[g].box);
    if (v > best_iou) {
      best_iou = v;
      best = g;
    }
  }
  if (best != static_cast<std::size_t>(-1) && best_iou >= threshold) {
    used[best] = true;
    return best;
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  if (!(uni > 0.0)) return 0.0;
  return inter / uni;
}

MatchResult match(std::span<const DetectionBox> detections, std::span<const GroundTruthBox> truths,
                  double iou_threshold) {
  MatchResult r;
  r.detection_is_tp.assign(detections.size(), false);
  std::vector<bool> used(truths.size(), false);
  std::vector<std::size_t> all(truths.size());
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t d : confidence_order(detections)) {
    std::size_t g = claim(detections[d].box, truths, all, used, iou_threshold);
    if (g != static_cast<std::size_t>(-1)) {
      ++r.tp;
      r.detection_is_tp[d] = true;
      r.pairs.emplace_back(d, g);
    } else {
      ++r.fp;
    }
  }
  r.fn = static_cast<int>(truths.size()) - r.tp;
  return r;
}

Metrics metrics(int tp, int fp, int fn) {
  Metrics m;
  if (tp + fp > 0) {
    m.precision = static_cast<double>(tp) / (tp + fp);
  } else {
    m.degenerate = true;
  }
  if (tp + fn > 0) {
    m.recall = static_cast<double>(tp) / (tp + fn);
  } else {
    m.degenerate = true;
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.degenerate = true;
  }
  return m;
}

double eleven_point_ap(std::span<const PrPoint> curve) {
  double sum = 0.0;
  for (int i = 0; i <= 10; ++i) {
    const double r = i / 10.0;
    double best = 0.0;
    for (const PrPoint& p : curve) {
      if (p.recall >= r - 1e-12) best = std::max(best, p.precision);
    }
    sum += best;
  }
  return sum / 11.0;
}

ApResult average_precision(std::span<const DetectionBox> detections,
                           std::span<const GroundTruthBox> truths, double iou_threshold) {
  if (truths.empty()) throw Error(ErrorCode::kUndefinedAp, "average precision needs ground truths");
  for (const DetectionBox& d : detections) {
    if (!d.confidence) {
      throw Error(ErrorCode::kValidation, "average precision needs a confidence on every detection");
    }
  }
  std::map<FrameIndex, std::vector<std::size_t>> truths_by_frame;
  for (std::size_t g = 0; g < truths.size(); ++g) truths_by_frame[truths[g].frame].push_back(g);

  ApResult out;
  std::vector<bool> used(truths.size(), false);
  int tp = 0;
  int fp = 0;
  const double total = static_cast<double>(truths.size());
  static const std::vector<std::size_t> kNone;
  for (std::size_t d : confidence_order(detections)) {
    auto it = truths_by_frame.find(detections[d].frame);
    const auto& candidates = it == truths_by_frame.end() ? kNone : it->second;
    if (claim(detections[d].box, truths, candidates, used, iou_threshold) != static_cast<std::size_t>(-1)) {
      ++tp;
    } else {
      ++fp;
    }
    out.curve.push_back({tp / total, static_cast<double>(tp) / (tp + fp)});
  }
  out.ap = eleven_point_ap(out.curve);
  return out;
}

EvalReport evaluate(std::span<const DetectionBox> detections, std::span<const GroundTruthBox> truths,
                    double iou_threshold) {
  std::map<FrameIndex, std::pair<std::vector<DetectionBox>, std::vector<GroundTruthBox>>> frames;
  for (const DetectionBox& d : detections) frames[d.frame].first.push_back(d);
  for (const GroundTruthBox& g : truths) frames[g.frame].second.push_back(g);

  EvalReport report;
  for (const auto& [f, pair] : frames) {
    MatchResult m = match(pair.first, pair.second, iou_threshold);
    report.tp += m.tp;
    report.fp += m.fp;
    report.fn += m.fn;
  }
  report.metrics = metrics(report.tp, report.fp, report.fn);
  const bool have_conf = std::all_of(detections.begin(), detections.end(),
                                     [](const DetectionBox& d) { return d.confidence.has_value(); });
  if (have_conf && !truths.empty()) {
    ApResult ap = average_precision(detections, truths, iou_threshold);
    report.ap = ap.ap;
    report.pr_curve = std::move(ap.curve);
  }
  return report;
}

std::vector<GroundTruthBox> read_ground_truth(const fs::path& file) {
  std::vector<GroundTruthBox> out;
  const std::string where = file.string();
  for (const auto& row : detail::read_csv(file, {"frame", "x", "y", "w", "h"})) {
    GroundTruthBox g;
    g.frame = static_cast<FrameIndex>(detail::parse_number(row[0], where));
    g.box = {detail::parse_number(row[1], where), detail::parse_number(row[2], where),
             detail::parse_number(row[3], where), detail::parse_number(row[4], where)};
    check_box(g.box, where);
    out.push_back(g);
  }
  return out;
}

std::vector<DetectionBox> read_detections(const fs::path& file) {
  const std::string where = file.string();
  std::vector<std::vector<std::string>> rows;
  try {
    rows = detail::read_csv(file, {"frame", "x", "y", "w", "h", "confidence"});
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSchema) throw;
    rows = detail::read_csv(file, {"frame", "x", "y", "w", "h"});
  }
  std::vector<DetectionBox> out;
  for (const auto& row : rows) {
    DetectionBox d;
    d.frame = static_cast<FrameIndex>(detail::parse_number(row[0], where));
    d.box = {detail::parse_number(row[1], where), detail::parse_number(row[2], where),
             detail::parse_number(row[3], where), detail::parse_number(row[4], where)};
    check_box(d.box, where);
    if (row.size() > 5 && !row[5].empty()) {
      d.confidence = detail::parse_number(row[5], where);
      if (*d.confidence < 0.0 || *d.confidence > 1.0) {
        throw Error(ErrorCode::kValidation, where + ": confidence outside [0, 1]");
      }
    }
    out.push_back(d);
  }
  return out;
}

void write_detections(const fs::path& file, std::span<const DetectionBox> detections) {
  std::string text = "frame,x,y,w,h,confidence\n";
  for (const DetectionBox& d : detections) {
    text += std::to_string(d.frame) + "," + detail::format_double(d.box.x) + "," +
            detail::format_double(d.box.y) + "," + detail::format_double(d.box.w) + "," +
            detail::format_double(d.box.h) + "," +
            (d.confidence ? detail::format_double(*d.confidence) : std::string{}) + "\n";
  }
  detail::write_file_atomic(file, text);
}

void write_pr_curve(const fs::path& file, std::span<const PrPoint> curve) {
  std::string text = "recall,precision\n";
  for (const PrPoint& p : curve) {
    text += detail::format_double(p.recall) + "," + detail::format_double(p.precision) + "\n";
  }
  detail::write_file_atomic(file, text);
}

std::vector<DetectionBox> face_boxes_to_detections(std::span<const blur::FaceBox> boxes) {
  std::vector<DetectionBox> out;
  out.reserve(boxes.size());
  for (const blur::FaceBox& b : boxes) {
    out.push_back({b.frame,
                   {b.center.x - b.side / 2.0, b.center.y - b.side / 2.0, b.side, b.side},
                   1.0});
  }
  return out;
}

KeypointComparison keypoint_diff(const std::vector<FramePose>& a, const std::vector<FramePose>& b) {
  std::map<FrameIndex, const FramePose*> fa;
  std::map<FrameIndex, const FramePose*> fb;
  for (const FramePose& f : a) fa[f.frame_index] = &f;
  for (const FramePose& f : b) fb[f.frame_index] = &f;
  if (fa.size() != fb.size() ||
      !std::equal(fa.begin(), fa.end(), fb.begin(), [](const auto& x, const auto& y) { return x.first == y.first; })) {
    throw Error(ErrorCode::kAlignment, "keypoint sets cover different frames");
  }

  KeypointComparison out;
  std::array<double, body25::kCount> conf_a{};
  std::array<double, body25::kCount> conf_b{};
  std::array<double, body25::kCount> err{};
  std::size_t n = 0;
  for (const auto& [frame, pa] : fa) {
    const FramePose* pb = fb.at(frame);
    std::map<TrackId, const Skeleton*> rb;
    for (const PersonEntry& p : pb->people) {
      if (!p.track_id) throw Error(ErrorCode::kAlignment, "untracked person in frame " + std::to_string(frame));
      rb[*p.track_id] = &p.skeleton;
    }
    std::size_t matched = 0;
    for (const PersonEntry& p : pa->people) {
      if (!p.track_id) throw Error(ErrorCode::kAlignment, "untracked person in frame " + std::to_string(frame));
      auto it = rb.find(*p.track_id);
      if (it == rb.end()) {
        ++out.unmatched_people;
        continue;
      }
      ++matched;
      ++n;
      for (int k = 0; k < body25::kCount; ++k) {
        const auto i = static_cast<std::size_t>(k);
        conf_a[i] += p.skeleton[k].c;
        conf_b[i] += (*it->second)[k].c;
        err[i] += distance(p.skeleton[k].point(), (*it->second)[k].point());
      }
    }
    out.unmatched_people += rb.size() - matched;
  }
  for (int k = 0; k < body25::kCount; ++k) {
    const auto i = static_cast<std::size_t>(k);
    KeypointDiff& row = out.rows[i];
    row.index = k;
    row.samples = n;
    if (n > 0) {
      row.mean_confidence_a = conf_a[i] / static_cast<double>(n);
      row.mean_confidence_b = conf_b[i] / static_cast<double>(n);
      row.mean_error = err[i] / static_cast<double>(n);
    }
  }
  return out;
}

}  // namespace securepose::eval
