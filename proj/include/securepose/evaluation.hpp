#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "securepose/blur.hpp"
#include "securepose/model.hpp"

namespace securepose::eval {

namespace fs = std::filesystem;

inline constexpr double kDefaultIou = 0.5;

/// Axis-aligned rectangle, top-left corner plus size.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  friend bool operator==(const Box&, const Box&) = default;
};

struct GroundTruthBox {
  FrameIndex frame = 0;
  Box box;

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct DetectionBox {
  FrameIndex frame = 0;
  Box box;
  std::optional<double> confidence;  // absent for detectors that report none

  friend bool operator==(const DetectionBox&, const DetectionBox&) = default;
};

/// Intersection over union; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (detection, ground truth)
  std::vector<bool> detection_is_tp;                       // parallel to the input detections
};

/// Greedy matching of one frame. Detections are taken by descending confidence
/// (input order for equal or missing confidences); each claims the unmatched
/// ground truth of highest IoU when that IoU reaches the threshold, otherwise it
/// is a false positive. Unclaimed ground truths are false negatives.
MatchResult match(std::span<const DetectionBox> detections,
                  std::span<const GroundTruthBox> truths, double iou_threshold = kDefaultIou);

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // some denominator was zero and the value was reported as 0
};

Metrics metrics(int tp, int fp, int fn);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;

  friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

/// Mean over r in {0, 0.1, ..., 1} of the best precision at recall >= r.
double eleven_point_ap(std::span<const PrPoint> curve);

struct ApResult {
  double ap = 0.0;
  std::vector<PrPoint> curve;  // one point per detection, in sweep order
};

/// Confidence-ordered sweep across all frames. Throws kUndefinedAp without ground
/// truths and kValidation when a detection has no confidence.
ApResult average_precision(std::span<const DetectionBox> detections,
                           std::span<const GroundTruthBox> truths, double iou_threshold = kDefaultIou);

struct EvalReport {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  Metrics metrics;
  std::vector<PrPoint> pr_curve;
  std::optional<double> ap;  // absent when detections lack confidences or no truths exist
};

/// Per-frame matching plus the metrics and, when confidences exist, the AP sweep.
EvalReport evaluate(std::span<const DetectionBox> detections,
                    std::span<const GroundTruthBox> truths, double iou_threshold = kDefaultIou);

// CSV files. Ground truth: frame,x,y,w,h. Detections: frame,x,y,w,h,confidence
// (the confidence column may be omitted or left empty).
std::vector<GroundTruthBox> read_ground_truth(const fs::path& file);
std::vector<DetectionBox> read_detections(const fs::path& file);
void write_detections(const fs::path& file, std::span<const DetectionBox> detections);
void write_pr_curve(const fs::path& file, std::span<const PrPoint> curve);

/// Face boxes in detection form, confidence 1.0.
std::vector<DetectionBox> face_boxes_to_detections(std::span<const blur::FaceBox> boxes);

struct KeypointDiff {
  int index = 0;
  double mean_confidence_a = 0.0;
  double mean_confidence_b = 0.0;
  double mean_error = 0.0;  // mean Euclidean distance, pixels
  std::size_t samples = 0;
};

struct KeypointComparison {
  std::array<KeypointDiff, body25::kCount> rows{};
  std::size_t unmatched_people = 0;  // track IDs present in only one of the two sets
};

/// Per-keypoint comparison of two tracked pose sets over the same frames, people
/// paired by track_id. Throws kAlignment when the frame sets differ.
KeypointComparison keypoint_diff(const std::vector<FramePose>& a, const std::vector<FramePose>& b);

}  // namespace securepose::eval
