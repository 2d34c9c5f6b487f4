#include "securepose/securepose.h"

#include <cstring>
#include <memory>
#include <string>

#include <json.hpp>

#include "core/reports.hpp"
#include "core/util.hpp"
#include "securepose/blur.hpp"
#include "securepose/error.hpp"
#include "securepose/evaluation.hpp"
#include "securepose/ingest.hpp"
#include "securepose/interpolation.hpp"
#include "securepose/overrides.hpp"
#include "securepose/patient.hpp"
#include "securepose/pipeline.hpp"
#include "securepose/project.hpp"
#include "securepose/review_service.hpp"
#include "securepose/tracking.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
namespace sp = securepose;

struct sp_project {
  std::unique_ptr<sp::pipeline::Project> project;
};

struct sp_review_server {
  std::unique_ptr<sp::review::ReviewService> service;
};

namespace {

thread_local std::string g_last_error;
thread_local sp_status g_failure_cause = SP_OK;

sp_status status_of(sp::ErrorCode code) { return static_cast<sp_status>(static_cast<int>(code)); }

sp_status fail(sp_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs fn, translating exceptions into a status and the thread's last error.
struct NullArgument {
  const char* what;
};

template <typename Fn>
sp_status guard(Fn&& fn) {
  g_last_error.clear();
  g_failure_cause = SP_OK;
  try {
    fn();
    return SP_OK;
  } catch (const NullArgument& e) {
    return fail(SP_ERR_ARGUMENT, e.what);
  } catch (const sp::pipeline::StepFailure& e) {
    g_failure_cause = status_of(e.cause());
    return fail(SP_ERR_STEP, e.what());
  } catch (const sp::Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(SP_ERR_SCHEMA, std::string("malformed options: ") + e.what());
  } catch (const std::exception& e) {
    return fail(SP_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SP_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const json& doc) {
  if (out) *out = dup_string(doc.dump(2));
}

json parse_options(const char* text) {
  if (!text) throw NullArgument{"options document is null"};
  try {
    json doc = json::parse(text);
    if (!doc.is_object()) throw sp::Error(sp::ErrorCode::kSchema, "options must be a JSON object");
    return doc;
  } catch (const json::parse_error& e) {
    throw sp::Error(sp::ErrorCode::kParse, std::string("options are not valid JSON: ") + e.what());
  }
}

fs::path required_path(const json& o, const char* key) {
  if (!o.contains(key) || !o[key].is_string()) {
    throw sp::Error(sp::ErrorCode::kInput, std::string("option '") + key + "' is required");
  }
  return fs::path(o[key].get<std::string>());
}

// Settings are round-tripped through the config document so that the C API and
// the project file share one parser.
sp::pipeline::Settings merge_settings(const sp::pipeline::Settings& base, const json& patch) {
  if (!patch.is_object()) throw sp::Error(sp::ErrorCode::kSchema, "settings must be a JSON object");
  sp::pipeline::ProjectConfig probe;
  probe.name = "settings";
  probe.settings = base;
  json doc = json::parse(sp::pipeline::to_json(probe));
  for (const auto& [key, value] : patch.items()) {
    if (!doc["settings"].contains(key)) throw sp::Error(sp::ErrorCode::kSchema, "unknown setting '" + key + "'");
    doc["settings"][key] = value;
  }
  sp::pipeline::Settings merged = sp::pipeline::parse_project_config(doc.dump()).settings;
  merged.validate();
  return merged;
}

sp::VideoGeometry geometry_from(const json& o, const sp::ingest::PoseSequence& seq) {
  if (o.contains("frames_dir")) return sp::ingest::load_frames(required_path(o, "frames_dir")).geometry();
  if (!o.contains("width") || !o.contains("height")) {
    throw sp::Error(sp::ErrorCode::kInput, "frame geometry needs frames_dir or width and height");
  }
  sp::VideoGeometry g{o["width"].get<int>(), o["height"].get<int>(),
                      o.value("frame_count", seq.frame_count), 30.0};
  g.validate();
  return g;
}

// Pose sequence plus the geometry it is evaluated against. Gaps are excluded
// from presence ratios.
struct Loaded {
  sp::ingest::PoseSequence seq;
  sp::VideoGeometry geom;
  sp::FrameIndex counted = 0;
};

Loaded load_with_geometry(const json& o) {
  Loaded l;
  std::optional<sp::FrameIndex> expected;
  if (o.contains("frames_dir")) {
    l.geom = sp::ingest::load_frames(required_path(o, "frames_dir")).geometry();
    expected = l.geom.frame_count;
  } else if (o.contains("frame_count")) {
    expected = o["frame_count"].get<sp::FrameIndex>();
  }
  l.seq = sp::ingest::load_pose_files(required_path(o, "pose_dir"), expected);
  if (!o.contains("frames_dir")) l.geom = geometry_from(o, l.seq);
  l.counted = l.geom.frame_count - static_cast<sp::FrameIndex>(l.seq.gaps.size());
  return l;
}

void write_report(const fs::path& file, const json& doc) { sp::detail::write_file_atomic(file, doc.dump(2) + "\n"); }

}  // namespace

extern "C" {

const char* sp_version(void) { return "0.3.0"; }

const char* sp_status_name(sp_status status) {
  if (status == SP_OK) return "ok";
  if (status == SP_ERR_ARGUMENT) return "argument";
  if (status >= SP_ERR_INPUT && status <= SP_ERR_INTERNAL) return sp::to_string(static_cast<sp::ErrorCode>(status));
  return "unknown";
}

int sp_status_exit_code(sp_status status) {
  switch (status) {
    case SP_OK:
      return 0;
    case SP_ERR_PRIVACY:
      return 4;
    case SP_ERR_STEP:
    case SP_ERR_NOT_READY:
    case SP_ERR_NO_PATIENT:
    case SP_ERR_UNRECOVERABLE:
      return 3;
    default:
      return 2;
  }
}

const char* sp_last_error_message(void) { return g_last_error.c_str(); }

void sp_free_string(char* s) { std::free(s); }

sp_status sp_project_failure_cause(void) { return g_failure_cause; }

sp_status sp_project_create(const char* options_json, sp_project** out) {
  if (!out) return fail(SP_ERR_ARGUMENT, "out is null");
  *out = nullptr;
  return guard([&] {
    json o = parse_options(options_json);
    sp::pipeline::CreateOptions opts;
    if (!o.contains("name") || !o["name"].is_string()) throw sp::Error(sp::ErrorCode::kInput, "option 'name' is required");
    opts.name = o["name"].get<std::string>();
    opts.input_dir = required_path(o, "input_dir");
    opts.output_dir = required_path(o, "output_dir");
    if (o.contains("metadata_dir")) opts.metadata_dir = required_path(o, "metadata_dir");
    if (o.contains("stems")) opts.stems = o["stems"].get<std::vector<std::string>>();
    if (o.contains("settings")) opts.settings = merge_settings({}, o["settings"]);
    auto handle = std::make_unique<sp_project>();
    handle->project = sp::pipeline::Project::create(opts);
    *out = handle.release();
  });
}

sp_status sp_project_load(const char* config_path, sp_project** out) {
  if (!out || !config_path) return fail(SP_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guard([&] {
    auto handle = std::make_unique<sp_project>();
    handle->project = sp::pipeline::Project::load(config_path);
    *out = handle.release();
  });
}

void sp_project_close(sp_project* project) { delete project; }

sp_status sp_project_config_json(const sp_project* project, char** out_json) {
  if (!project || !out_json) return fail(SP_ERR_ARGUMENT, "null argument");
  return guard([&] { *out_json = dup_string(sp::pipeline::to_json(project->project->config())); });
}

sp_status sp_project_config_path(const sp_project* project, char** out_path) {
  if (!project || !out_path) return fail(SP_ERR_ARGUMENT, "null argument");
  return guard([&] { *out_path = dup_string(project->project->config_path().string()); });
}

sp_status sp_project_update_settings(sp_project* project, const char* settings_json) {
  if (!project) return fail(SP_ERR_ARGUMENT, "project is null");
  return guard([&] {
    json patch = parse_options(settings_json);
    project->project->update_settings(merge_settings(project->project->config().settings, patch));
  });
}

sp_status sp_project_run(sp_project* project, const char* stem, const char* stop_after, char** out_report_json) {
  if (!project) return fail(SP_ERR_ARGUMENT, "project is null");
  return guard([&] {
    sp::pipeline::RunOptions opts;
    if (stem) opts.stem = stem;
    if (stop_after) opts.stop_after = sp::pipeline::parse_step(stop_after);
    sp::pipeline::RunReport report = sp::pipeline::run_pipeline(*project->project, opts);
    json steps = json::array();
    for (const auto& r : report.steps) {
      steps.push_back({{"stem", r.stem}, {"step", sp::pipeline::to_string(r.step)}, {"resumed", r.resumed},
                       {"summary", r.summary}});
    }
    put(out_report_json, {{"steps", steps}});
  });
}

sp_status sp_project_export(sp_project* project, const char* request_json, char** out_written_json) {
  if (!project) return fail(SP_ERR_ARGUMENT, "project is null");
  return guard([&] {
    json o = parse_options(request_json);
    sp::pipeline::ExportRequest req;
    req.dest = required_path(o, "dest");
    if (o.contains("stem")) req.stem = o["stem"].get<std::string>();
    req.blurred_video = o.value("blurred_video", false);
    req.backup = o.value("backup", false);
    req.keypoints = o.value("keypoints", false);
    req.detections = o.value("detections", false);
    req.skip_quality_check = o.value("skip_quality_check", false);
    const std::string format = o.value("format", std::string("csv"));
    if (format == "csv") {
      req.format = sp::pipeline::KeypointFormat::kCsv;
    } else if (format == "json") {
      req.format = sp::pipeline::KeypointFormat::kJson;
    } else {
      throw sp::Error(sp::ErrorCode::kValidation, "keypoint format must be csv or json, got '" + format + "'");
    }
    if (o.contains("variants")) {
      req.variants.clear();
      for (const std::string& v : o["variants"].get<std::vector<std::string>>()) {
        if (v == "raw") {
          req.variants.push_back(sp::pipeline::KeypointVariant::kRaw);
        } else if (v == "interpolated") {
          req.variants.push_back(sp::pipeline::KeypointVariant::kInterpolated);
        } else {
          throw sp::Error(sp::ErrorCode::kValidation, "unknown keypoint variant '" + v + "'");
        }
      }
    }
    sp::pipeline::ExportReport report = sp::pipeline::export_project(*project->project, req);
    json written = json::array();
    for (const fs::path& p : report.written) written.push_back(p.string());
    put(out_written_json, {{"written", written}});
  });
}

sp_status sp_project_signoff(sp_project* project, const char* stem) {
  if (!project || !stem) return fail(SP_ERR_ARGUMENT, "null argument");
  return guard([&] {
    if (!project->project->ledger(stem).done(sp::pipeline::Step::kRender)) {
      throw sp::Error(sp::ErrorCode::kNotReady, std::string("video '") + stem + "' has not been rendered");
    }
    project->project->set_quality_check(stem, sp::pipeline::QualityCheck::kComplete);
    project->project->log(std::string("[") + stem + "] quality check signed off");
  });
}

sp_status sp_project_set_patient(sp_project* project, const char* stem, int64_t patient_id) {
  if (!project || !stem) return fail(SP_ERR_ARGUMENT, "null argument");
  return guard([&] {
    project->project->set_patient_override(stem, patient_id < 0 ? std::nullopt : std::optional<sp::TrackId>(patient_id));
  });
}

sp_status sp_track(const char* options_json, char** out_report_json) {
  return guard([&] {
    json o = parse_options(options_json);
    const fs::path out_dir = required_path(o, "out_dir");
    const double threshold = o.value("threshold", sp::tracking::kDefaultNewPersonFraction);
    Loaded l = load_with_geometry(o);
    sp::tracking::TrackingResult r = sp::tracking::assign_ids(std::move(l.seq.frames), l.geom, threshold, l.counted);
    sp::ingest::write_pose_files(r.frames, out_dir, l.seq.stem);
    json report = sp::detail::tracking_report(r, threshold, l.geom);
    report["gaps"] = l.seq.gaps;
    write_report(out_dir / "tracking_report.json", report);
    put(out_report_json, report);
  });
}

sp_status sp_interpolate(const char* options_json, char** out_report_json) {
  return guard([&] {
    json o = parse_options(options_json);
    const fs::path out_dir = required_path(o, "out_dir");
    const sp::interp::Scope scope = sp::interp::parse_scope(o.value("scope", std::string("face")));
    const double threshold = o.value("threshold", sp::kReliableConfidence);
    sp::ingest::PoseSequence seq = sp::ingest::load_pose_files(required_path(o, "pose_dir"));
    sp::interp::FramesRepair r = sp::interp::interpolate_frames(std::move(seq.frames), scope, threshold);
    sp::ingest::write_pose_files(r.frames, out_dir, seq.stem);
    json report = sp::detail::interpolation_report(r, scope, threshold);
    write_report(out_dir / "interpolation_report.json", report);
    put(out_report_json, report);
  });
}

sp_status sp_identify(const char* options_json, char** out_report_json) {
  return guard([&] {
    json o = parse_options(options_json);
    const double presence = o.value("presence", sp::patient::kDefaultPresence);
    Loaded l = load_with_geometry(o);
    std::vector<sp::Track> tracks = sp::group_tracks(l.seq.frames, l.counted);
    sp::patient::Selection sel = sp::patient::score_tracks(tracks, l.geom, presence);
    put(out_report_json, sp::detail::patient_report(sel, "rule", presence));
    if (tracks.empty()) throw sp::Error(sp::ErrorCode::kInput, "no tracked people in the pose files");
    if (!sel.patient) {
      throw sp::Error(sp::ErrorCode::kNoPatient, "no track is present in enough frames; blur all persons instead");
    }
  });
}

sp_status sp_blur(const char* options_json, char** out_report_json) {
  return guard([&] {
    json o = parse_options(options_json);
    const fs::path out_dir = required_path(o, "out_dir");
    const double conf = o.value("conf_threshold", sp::kReliableConfidence);
    sp::ingest::FrameStore store = sp::ingest::load_frames(required_path(o, "frames_dir"));
    const sp::VideoGeometry& geom = store.geometry();
    sp::ingest::PoseSequence seq = sp::ingest::load_pose_files(required_path(o, "pose_dir"), geom.frame_count);

    sp::blur::BlurSpec spec;
    spec.targets = sp::blur::parse_targets(o.value("targets", std::string("all")));
    spec.style = sp::blur::parse_style(o.value("style", std::string("solid")));
    std::string source = "none";
    if (o.contains("patient")) {
      spec.patient = o["patient"].get<sp::TrackId>();
      source = "option";
    } else if (spec.targets == sp::blur::Targets::kPatientOnly) {
      const sp::FrameIndex counted = geom.frame_count - static_cast<sp::FrameIndex>(seq.gaps.size());
      spec.patient = sp::patient::identify_patient(sp::group_tracks(seq.frames, counted), geom,
                                                   o.value("presence", sp::patient::kDefaultPresence))
                         .patient;
      source = "rule";
    }
    sp::review::OverrideSet overrides;
    if (o.contains("overrides")) {
      overrides = sp::review::load_override_file(required_path(o, "overrides"));
      sp::review::validate(overrides, geom.frame_count);
    }

    sp::blur::FaceBoxes boxes = sp::blur::compute_face_boxes(seq.frames, geom, conf);
    sp::blur::RenderReport r = sp::blur::render(store, boxes.boxes, spec, overrides, out_dir);
    sp::blur::write_face_boxes(out_dir / "face_boxes.csv", boxes.boxes);

    json report = sp::detail::face_box_report(boxes);
    report["targets"] = sp::blur::to_string(spec.targets);
    report["style"] = sp::blur::to_string(spec.style);
    report["patient"] = spec.patient ? json(*spec.patient) : json(nullptr);
    report["patient_source"] = source;
    report["override_revision"] = overrides.revision;
    report["frames_written"] = r.frames_written;
    report["regions_applied"] = r.regions_applied;
    report["warnings"] = r.warnings;
    write_report(out_dir / "render_report.json", report);
    put(out_report_json, report);
  });
}

sp_status sp_evaluate(const char* options_json, char** out_report_json) {
  return guard([&] {
    json o = parse_options(options_json);
    const double iou = o.value("iou", sp::eval::kDefaultIou);
    std::vector<sp::eval::GroundTruthBox> gt = sp::eval::read_ground_truth(required_path(o, "gt"));
    std::vector<sp::eval::DetectionBox> det = sp::eval::read_detections(required_path(o, "det"));
    sp::eval::EvalReport r = sp::eval::evaluate(det, gt, iou);
    if (o.contains("pr_curve")) sp::eval::write_pr_curve(required_path(o, "pr_curve"), r.pr_curve);
    put(out_report_json, sp::detail::eval_report(r, iou));
  });
}

sp_status sp_review_start(sp_project* project, const char* bind_address, int port, const char* static_dir,
                          sp_review_server** out) {
  if (!project || !out) return fail(SP_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guard([&] {
    sp::review::ServiceOptions opts;
    if (bind_address) opts.bind_address = bind_address;
    opts.port = port;
    if (static_dir) opts.static_dir = fs::path(static_dir);
    auto handle = std::make_unique<sp_review_server>();
    handle->service = std::make_unique<sp::review::ReviewService>(*project->project, opts);
    handle->service->start();
    *out = handle.release();
  });
}

int sp_review_port(const sp_review_server* server) { return server ? server->service->port() : -1; }

void sp_review_wait(sp_review_server* server) {
  if (server) server->service->wait();
}

void sp_review_stop(sp_review_server* server) {
  if (server) server->service->stop();
}

void sp_review_close(sp_review_server* server) { delete server; }

}  // extern "C"
