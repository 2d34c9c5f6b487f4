#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "securepose/error.hpp"
#include "securepose/project.hpp"

namespace securepose::pipeline {

/// A failed step. code() is kStep; cause() keeps the underlying category.
class StepFailure : public Error {
 public:
  StepFailure(std::string stem, Step step, ErrorCode cause, const std::string& message)
      : Error(ErrorCode::kStep, message), stem_(std::move(stem)), step_(step), cause_(cause) {}

  const std::string& stem() const { return stem_; }
  Step step() const { return step_; }
  ErrorCode cause() const { return cause_; }

 private:
  std::string stem_;
  Step step_;
  ErrorCode cause_;
};

// Per-video output layout inside the project tree.
namespace layout {
inline constexpr const char* kGeometry = "geometry.json";
inline constexpr const char* kLoadReport = "load_report.json";
inline constexpr const char* kTrackedPoses = "poses_tracked";
inline constexpr const char* kTrackingReport = "tracking_report.json";
inline constexpr const char* kInterpolatedPoses = "poses_interpolated";
inline constexpr const char* kInterpolationReport = "interpolation_report.json";
inline constexpr const char* kPatient = "patient.json";
inline constexpr const char* kFaceBoxes = "face_boxes.csv";
inline constexpr const char* kFaceBoxReport = "face_boxes_report.json";
inline constexpr const char* kOverrides = "overrides.json";
inline constexpr const char* kRendered = "rendered";
inline constexpr const char* kRenderReport = "render_report.json";
}  // namespace layout

struct RunOptions {
  std::optional<std::string> stem;       // default: every video
  std::optional<Step> stop_after;        // stop once this step is complete
};

struct StepRecord {
  std::string stem;
  Step step = Step::kStandardize;
  bool resumed = false;  // already complete in the ledger, not re-run
  std::string summary;
};

struct RunReport {
  std::vector<StepRecord> steps;
};

/// Runs each selected video from its first incomplete step, persisting every
/// step's outputs and the ledger as it goes. Videos run concurrently. The first
/// failure (in video order) is rethrown as StepFailure.
RunReport run_pipeline(Project& project, const RunOptions& options = {});

/// Runs exactly one step for one video; the previous steps must be complete.
StepRecord run_step(Project& project, const std::string& stem, Step step);

VideoGeometry read_geometry(const Project& project, const std::string& stem);

/// Patient chosen by the identify step, if any.
std::optional<TrackId> read_patient(const Project& project, const std::string& stem);

/// Spec for rendering: project settings plus the identified patient.
blur::BlurSpec blur_spec(const Project& project, const std::string& stem);

enum class KeypointFormat { kJson, kCsv };
enum class KeypointVariant { kRaw, kInterpolated };

struct ExportRequest {
  fs::path dest;
  std::optional<std::string> stem;  // default: every video
  bool blurred_video = false;
  bool backup = false;
  bool keypoints = false;
  KeypointFormat format = KeypointFormat::kCsv;
  std::vector<KeypointVariant> variants = {KeypointVariant::kRaw, KeypointVariant::kInterpolated};
  bool detections = false;           // face boxes in detection CSV form
  bool skip_quality_check = false;   // records the quality check as skipped
};

struct ExportReport {
  std::vector<fs::path> written;
};

/// Copies requested artifacts outside the project tree. Blurred video export is
/// refused (kPrivacy) until the quality check is complete or explicitly skipped;
/// missing artifacts raise kNotReady.
ExportReport export_project(Project& project, const ExportRequest& request);

/// One row per tracked person per frame:
/// frame,track_id,kp0_x,kp0_y,kp0_c,...,kp24_c.
void write_keypoints_csv(const fs::path& file, const std::vector<FramePose>& frames);
std::vector<FramePose> read_keypoints_csv(const fs::path& file);

}  // namespace securepose::pipeline
