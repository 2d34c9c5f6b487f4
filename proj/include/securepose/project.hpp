#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "securepose/blur.hpp"
#include "securepose/interpolation.hpp"
#include "securepose/model.hpp"

namespace securepose::pipeline {

namespace fs = std::filesystem;

/// Pipeline steps in execution order.
enum class Step {
  kStandardize,
  kLoadPoses,
  kTrack,
  kInterpolate,
  kIdentify,
  kFaceBoxes,
  kRender,
};
inline constexpr int kStepCount = 7;

const char* to_string(Step s);
Step parse_step(const std::string& s);
std::vector<Step> all_steps();

enum class QualityCheck { kPending, kComplete, kSkipped };
const char* to_string(QualityCheck q);

struct Settings {
  double track_threshold = 0.15;  // fraction of the frame diagonal
  double conf_threshold = kReliableConfidence;
  double presence_threshold = 0.8;
  interp::Scope scope = interp::Scope::kFaceOnly;
  blur::Targets targets = blur::Targets::kAllPersons;
  blur::Style style = blur::Style::kSolid;
  bool allow_gaps = false;
  double fps = 30.0;
  // External decoder used when a video has no frame directory yet.
  // {input} and {output} are substituted; output is a directory.
  std::string transcoder =
      "ffmpeg -nostdin -loglevel error -i {input} -an -pix_fmt rgb24 {output}/frame_%06d.png";

  void validate() const;
  friend bool operator==(const Settings&, const Settings&) = default;
};

/// First step whose output depends on a field that differs between a and b.
std::optional<Step> earliest_affected_step(const Settings& a, const Settings& b);

struct VideoEntry {
  std::string stem;
  fs::path pose_dir;
  fs::path frame_dir;
  std::optional<fs::path> source_video;
  std::optional<fs::path> metadata;
  std::optional<TrackId> patient_override;  // reviewer's choice, wins over the rule

  friend bool operator==(const VideoEntry&, const VideoEntry&) = default;
};

struct VideoLedger {
  std::vector<Step> completed;  // always a prefix of all_steps()
  QualityCheck quality_check = QualityCheck::kPending;

  bool done(Step s) const;
  std::optional<Step> next() const;
  friend bool operator==(const VideoLedger&, const VideoLedger&) = default;
};

struct ProjectConfig {
  std::string name;
  fs::path input_dir;
  fs::path output_dir;
  fs::path metadata_dir;
  std::vector<VideoEntry> videos;
  Settings settings;
  std::map<std::string, VideoLedger> ledger;

  const VideoEntry& video(const std::string& stem) const;  // kNotFound when absent
  friend bool operator==(const ProjectConfig&, const ProjectConfig&) = default;
};

std::string to_json(const ProjectConfig& cfg);
ProjectConfig parse_project_config(const std::string& text);

struct CreateOptions {
  std::string name;
  fs::path input_dir;
  fs::path output_dir;                // projects live in output_dir/<name>/
  std::optional<fs::path> metadata_dir;  // defaults to input_dir
  std::vector<std::string> stems;     // empty: every subdirectory of input_dir with a poses/ folder
  Settings settings;
};

/// A persisted project: configuration file, append-only log and per-video
/// output tree. Mutations are serialized and written through before returning.
class Project {
 public:
  /// Throws kConflict when the project directory already exists, kInput when a
  /// video cannot be resolved to pose and frame sources.
  static std::unique_ptr<Project> create(const CreateOptions& options);
  /// Throws kNotFound for a missing configuration file.
  static std::unique_ptr<Project> load(const fs::path& config_file);

  ProjectConfig config() const;
  const fs::path& config_path() const { return config_path_; }
  fs::path project_dir() const { return config_path_.parent_path(); }
  fs::path video_dir(const std::string& stem) const;
  fs::path log_path() const { return project_dir() / "project.log"; }

  VideoLedger ledger(const std::string& stem) const;
  void mark_complete(const std::string& stem, Step step);
  /// Forgets `step` and everything after it; resets the quality check when the
  /// render is invalidated.
  void invalidate_from(const std::string& stem, Step step);
  void set_quality_check(const std::string& stem, QualityCheck state);
  void set_patient_override(const std::string& stem, std::optional<TrackId> id);
  /// Applies new settings and invalidates the steps they affect.
  void update_settings(const Settings& settings);

  void log(const std::string& line) const;

 private:
  Project(fs::path config_path, ProjectConfig cfg);
  void save_locked() const;

  fs::path config_path_;
  mutable std::mutex mutex_;
  ProjectConfig cfg_;
};

inline constexpr const char* kConfigFileName = "project.json";

}  // namespace securepose::pipeline
