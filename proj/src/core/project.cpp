#include "securepose/project.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "securepose/error.hpp"
#include "securepose/ingest.hpp"
#include "util.hpp"

namespace securepose::pipeline {

using nlohmann::json;

namespace {

constexpr std::array<Step, kStepCount> kSteps = {Step::kStandardize, Step::kLoadPoses,
                                                 Step::kTrack,       Step::kInterpolate,
                                                 Step::kIdentify,    Step::kFaceBoxes,
                                                 Step::kRender};

constexpr std::array<const char*, 5> kVideoExtensions = {".mp4", ".mov", ".avi", ".mkv", ".m4v"};

QualityCheck parse_quality_check(const std::string& s) {
  if (s == "pending") return QualityCheck::kPending;
  if (s == "complete") return QualityCheck::kComplete;
  if (s == "skipped") return QualityCheck::kSkipped;
  throw Error(ErrorCode::kSchema, "unknown quality-check state '" + s + "'");
}

fs::path absolute_path(const fs::path& p) {
  std::error_code ec;
  fs::path abs = fs::weakly_canonical(fs::absolute(p), ec);
  return ec ? fs::absolute(p) : abs;
}

json settings_to_json(const Settings& s) {
  return {{"track_threshold", s.track_threshold},
          {"conf_threshold", s.conf_threshold},
          {"presence_threshold", s.presence_threshold},
          {"scope", interp::to_string(s.scope)},
          {"targets", blur::to_string(s.targets)},
          {"style", blur::to_string(s.style)},
          {"allow_gaps", s.allow_gaps},
          {"fps", s.fps},
          {"transcoder", s.transcoder}};
}

Settings settings_from_json(const json& j, Settings s = {}) {
  s.track_threshold = j.value("track_threshold", s.track_threshold);
  s.conf_threshold = j.value("conf_threshold", s.conf_threshold);
  s.presence_threshold = j.value("presence_threshold", s.presence_threshold);
  if (j.contains("scope")) s.scope = interp::parse_scope(j["scope"].get<std::string>());
  if (j.contains("targets")) s.targets = blur::parse_targets(j["targets"].get<std::string>());
  if (j.contains("style")) s.style = blur::parse_style(j["style"].get<std::string>());
  s.allow_gaps = j.value("allow_gaps", s.allow_gaps);
  s.fps = j.value("fps", s.fps);
  s.transcoder = j.value("transcoder", s.transcoder);
  return s;
}

}  // namespace

const char* to_string(Step s) {
  switch (s) {
    case Step::kStandardize: return "standardize";
    case Step::kLoadPoses: return "load_poses";
    case Step::kTrack: return "track";
    case Step::kInterpolate: return "interpolate";
    case Step::kIdentify: return "identify";
    case Step::kFaceBoxes: return "face_boxes";
    case Step::kRender: return "render";
  }
  return "?";
}

Step parse_step(const std::string& s) {
  for (Step step : kSteps) {
    if (s == to_string(step)) return step;
  }
  throw Error(ErrorCode::kValidation, "unknown pipeline step '" + s + "'");
}

std::vector<Step> all_steps() { return {kSteps.begin(), kSteps.end()}; }

const char* to_string(QualityCheck q) {
  switch (q) {
    case QualityCheck::kPending: return "pending";
    case QualityCheck::kComplete: return "complete";
    case QualityCheck::kSkipped: return "skipped";
  }
  return "?";
}

void Settings::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kValidation, what); };
  if (!(track_threshold > 0.0 && track_threshold <= 1.0)) fail("track threshold must lie in (0, 1]");
  if (!(conf_threshold > 0.0 && conf_threshold < 1.0)) fail("confidence threshold must lie in (0, 1)");
  if (!(presence_threshold > 0.0 && presence_threshold <= 1.0)) fail("presence threshold must lie in (0, 1]");
  if (!(fps > 0.0)) fail("fps must be positive");
}

std::optional<Step> earliest_affected_step(const Settings& a, const Settings& b) {
  if (a.fps != b.fps) return Step::kStandardize;
  if (a.allow_gaps != b.allow_gaps) return Step::kLoadPoses;
  if (a.track_threshold != b.track_threshold) return Step::kTrack;
  if (a.conf_threshold != b.conf_threshold || a.scope != b.scope) return Step::kInterpolate;
  if (a.presence_threshold != b.presence_threshold || a.targets != b.targets) return Step::kIdentify;
  if (a.style != b.style) return Step::kRender;
  return std::nullopt;
}

bool VideoLedger::done(Step s) const {
  return std::find(completed.begin(), completed.end(), s) != completed.end();
}

std::optional<Step> VideoLedger::next() const {
  if (completed.size() >= kSteps.size()) return std::nullopt;
  return kSteps[completed.size()];
}

const VideoEntry& ProjectConfig::video(const std::string& stem) const {
  for (const VideoEntry& v : videos) {
    if (v.stem == stem) return v;
  }
  throw Error(ErrorCode::kNotFound, "project '" + name + "' has no video '" + stem + "'");
}

std::string to_json(const ProjectConfig& cfg) {
  json videos = json::array();
  for (const VideoEntry& v : cfg.videos) {
    json j = {{"stem", v.stem}, {"pose_dir", v.pose_dir.string()}, {"frame_dir", v.frame_dir.string()}};
    j["source_video"] = v.source_video ? json(v.source_video->string()) : json(nullptr);
    j["metadata"] = v.metadata ? json(v.metadata->string()) : json(nullptr);
    j["patient_override"] = v.patient_override ? json(*v.patient_override) : json(nullptr);
    videos.push_back(j);
  }
  json ledger = json::object();
  for (const auto& [stem, l] : cfg.ledger) {
    json steps = json::array();
    for (Step s : l.completed) steps.push_back(to_string(s));
    ledger[stem] = {{"completed", steps}, {"quality_check", to_string(l.quality_check)}};
  }
  json doc = {{"format", "securepose-project/1"},
              {"name", cfg.name},
              {"input_dir", cfg.input_dir.string()},
              {"output_dir", cfg.output_dir.string()},
              {"metadata_dir", cfg.metadata_dir.string()},
              {"videos", videos},
              {"settings", settings_to_json(cfg.settings)},
              {"ledger", ledger}};
  return doc.dump(2) + "\n";
}

ProjectConfig parse_project_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("project config: ") + e.what());
  }
  try {
    ProjectConfig cfg;
    cfg.name = doc.at("name").get<std::string>();
    cfg.input_dir = doc.at("input_dir").get<std::string>();
    cfg.output_dir = doc.at("output_dir").get<std::string>();
    cfg.metadata_dir = doc.value("metadata_dir", std::string{});
    for (const json& j : doc.at("videos")) {
      VideoEntry v;
      v.stem = j.at("stem").get<std::string>();
      v.pose_dir = j.at("pose_dir").get<std::string>();
      v.frame_dir = j.at("frame_dir").get<std::string>();
      if (j.contains("source_video") && !j["source_video"].is_null()) v.source_video = j["source_video"].get<std::string>();
      if (j.contains("metadata") && !j["metadata"].is_null()) v.metadata = j["metadata"].get<std::string>();
      if (j.contains("patient_override") && !j["patient_override"].is_null()) {
        v.patient_override = j["patient_override"].get<TrackId>();
      }
      cfg.videos.push_back(std::move(v));
    }
    cfg.settings = settings_from_json(doc.at("settings"));
    for (const auto& [stem, l] : doc.at("ledger").items()) {
      VideoLedger ledger;
      for (const json& s : l.at("completed")) ledger.completed.push_back(parse_step(s.get<std::string>()));
      for (std::size_t i = 0; i < ledger.completed.size(); ++i) {
        if (ledger.completed[i] != kSteps[i]) {
          throw Error(ErrorCode::kSchema, "ledger for '" + stem + "' is not a prefix of the step order");
        }
      }
      ledger.quality_check = parse_quality_check(l.value("quality_check", std::string{"pending"}));
      cfg.ledger[stem] = std::move(ledger);
    }
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("project config: ") + e.what());
  }
}

Project::Project(fs::path config_path, ProjectConfig cfg)
    : config_path_(std::move(config_path)), cfg_(std::move(cfg)) {}

std::unique_ptr<Project> Project::create(const CreateOptions& options) {
  if (options.name.empty() || options.name.find_first_of("/\\") != std::string::npos ||
      options.name == "." || options.name == "..") {
    throw Error(ErrorCode::kValidation, "invalid project name '" + options.name + "'");
  }
  options.settings.validate();
  std::error_code ec;
  const fs::path input = absolute_path(options.input_dir);
  const fs::path output = absolute_path(options.output_dir);
  if (!fs::is_directory(input, ec)) throw Error(ErrorCode::kInput, "input directory not found: " + input.string());
  const fs::path project_dir = output / options.name;
  if (fs::exists(project_dir, ec)) {
    throw Error(ErrorCode::kConflict, "project '" + options.name + "' already exists in " + output.string());
  }

  std::vector<std::string> stems = options.stems;
  if (stems.empty()) {
    for (const auto& entry : fs::directory_iterator(input)) {
      if (entry.is_directory() && fs::is_directory(entry.path() / "poses")) {
        stems.push_back(entry.path().filename().string());
      }
    }
    std::sort(stems.begin(), stems.end());
  }
  if (stems.empty()) throw Error(ErrorCode::kInput, "no videos found in " + input.string());

  ProjectConfig cfg;
  cfg.name = options.name;
  cfg.input_dir = input;
  cfg.output_dir = output;
  cfg.metadata_dir = options.metadata_dir ? absolute_path(*options.metadata_dir) : input;
  cfg.settings = options.settings;

  std::vector<fs::path> sources;
  for (const std::string& stem : stems) {
    if (std::count(stems.begin(), stems.end(), stem) > 1) {
      throw Error(ErrorCode::kValidation, "video '" + stem + "' listed twice");
    }
    VideoEntry v;
    v.stem = stem;
    v.pose_dir = input / stem / "poses";
    if (!fs::is_directory(v.pose_dir, ec)) {
      throw Error(ErrorCode::kInput, "video '" + stem + "' has no pose directory " + v.pose_dir.string());
    }
    for (const char* ext : kVideoExtensions) {
      fs::path candidate = input / (stem + ext);
      if (fs::is_regular_file(candidate, ec)) {
        v.source_video = candidate;
        sources.push_back(candidate);
        break;
      }
    }
    if (fs::is_directory(input / stem / "frames", ec)) {
      v.frame_dir = input / stem / "frames";
    } else if (v.source_video) {
      v.frame_dir = project_dir / "videos" / stem / "frames";
    } else {
      throw Error(ErrorCode::kInput, "video '" + stem + "' has neither a frames/ directory nor a source video");
    }
    cfg.videos.push_back(std::move(v));
    cfg.ledger[stem] = {};
  }
  auto linked = ingest::link_sidecars(stems, cfg.metadata_dir, sources);
  for (VideoEntry& v : cfg.videos) {
    if (auto it = linked.find(v.stem); it != linked.end()) v.metadata = it->second;
  }

  fs::create_directories(project_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + project_dir.string() + ": " + ec.message());
  auto project = std::unique_ptr<Project>(new Project(project_dir / kConfigFileName, std::move(cfg)));
  {
    std::lock_guard lock(project->mutex_);
    project->save_locked();
  }
  project->log("project created with " + std::to_string(stems.size()) + " video(s)");
  return project;
}

std::unique_ptr<Project> Project::load(const fs::path& config_file) {
  std::error_code ec;
  if (!fs::is_regular_file(config_file, ec)) {
    throw Error(ErrorCode::kNotFound, "project config not found: " + config_file.string());
  }
  ProjectConfig cfg = parse_project_config(detail::read_file(config_file));
  for (const VideoEntry& v : cfg.videos) cfg.ledger.try_emplace(v.stem);
  auto project = std::unique_ptr<Project>(new Project(absolute_path(config_file), std::move(cfg)));
  project->log("project loaded");
  return project;
}

ProjectConfig Project::config() const {
  std::lock_guard lock(mutex_);
  return cfg_;
}

fs::path Project::video_dir(const std::string& stem) const { return project_dir() / "videos" / stem; }

VideoLedger Project::ledger(const std::string& stem) const {
  std::lock_guard lock(mutex_);
  cfg_.video(stem);
  auto it = cfg_.ledger.find(stem);
  return it == cfg_.ledger.end() ? VideoLedger{} : it->second;
}

void Project::mark_complete(const std::string& stem, Step step) {
  std::lock_guard lock(mutex_);
  VideoLedger& l = cfg_.ledger[stem];
  if (l.done(step)) return;
  if (l.next() != step) {
    throw Error(ErrorCode::kContract, std::string("step ") + to_string(step) +
                                          " completed out of order for '" + stem + "'");
  }
  l.completed.push_back(step);
  save_locked();
}

void Project::invalidate_from(const std::string& stem, Step step) {
  std::lock_guard lock(mutex_);
  VideoLedger& l = cfg_.ledger[stem];
  auto keep = static_cast<std::size_t>(step);
  if (l.completed.size() > keep) l.completed.resize(keep);
  if (!l.done(Step::kRender)) l.quality_check = QualityCheck::kPending;
  save_locked();
}

void Project::set_quality_check(const std::string& stem, QualityCheck state) {
  std::lock_guard lock(mutex_);
  cfg_.video(stem);
  cfg_.ledger[stem].quality_check = state;
  save_locked();
}

void Project::set_patient_override(const std::string& stem, std::optional<TrackId> id) {
  {
    std::lock_guard lock(mutex_);
    cfg_.video(stem);
    for (VideoEntry& v : cfg_.videos) {
      if (v.stem == stem) v.patient_override = id;
    }
    save_locked();
  }
  invalidate_from(stem, Step::kIdentify);
}

void Project::update_settings(const Settings& settings) {
  settings.validate();
  std::optional<Step> from;
  std::vector<std::string> stems;
  {
    std::lock_guard lock(mutex_);
    from = earliest_affected_step(cfg_.settings, settings);
    cfg_.settings = settings;
    save_locked();
    for (const VideoEntry& v : cfg_.videos) stems.push_back(v.stem);
  }
  if (from) {
    for (const std::string& stem : stems) invalidate_from(stem, *from);
  }
}

void Project::log(const std::string& line) const {
  std::lock_guard lock(mutex_);
  std::ofstream out(log_path(), std::ios::app);
  out << detail::utc_timestamp() << " " << line << "\n";
}

void Project::save_locked() const { detail::write_file_atomic(config_path_, to_json(cfg_)); }

}  // namespace securepose::pipeline
