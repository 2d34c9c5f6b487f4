// securepose command-line front end. Talks to the library only through the C API.

#include <signal.h>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "securepose/securepose.h"

using nlohmann::json;

namespace {

int report_failure(sp_status st) {
  std::cerr << "error (" << sp_status_name(st) << "): " << sp_last_error_message() << "\n";
  if (st == SP_ERR_STEP) std::cerr << "cause: " << sp_status_name(sp_project_failure_cause()) << "\n";
  return sp_status_exit_code(st);
}

// Prints and frees a returned document.
void emit(char* doc) {
  if (doc) {
    std::cout << doc << "\n";
    sp_free_string(doc);
  }
}

int finish(sp_status st, char* doc) {
  emit(doc);
  return st == SP_OK ? 0 : report_failure(st);
}

struct ProjectHandle {
  sp_project* p = nullptr;
  ~ProjectHandle() { sp_project_close(p); }
};

struct SettingsFlags {
  std::optional<double> track_threshold, conf_threshold, presence, fps;
  std::optional<std::string> scope, targets, style, transcoder;
  bool allow_gaps = false;
  bool strict_gaps = false;

  void add(CLI::App* app) {
    app->add_option("--track-threshold", track_threshold, "new-person distance as a fraction of the diagonal");
    app->add_option("--conf-threshold", conf_threshold, "keypoint confidence below which values are repaired");
    app->add_option("--presence", presence, "minimum frame presence for the patient");
    app->add_option("--scope", scope, "interpolation scope")->check(CLI::IsMember({"face", "body"}));
    app->add_option("--targets", targets, "who is blurred")->check(CLI::IsMember({"patient", "all"}));
    app->add_option("--style", style, "blur style")->check(CLI::IsMember({"solid", "gaussian"}));
    app->add_option("--fps", fps, "frame rate used when decoding");
    app->add_option("--transcoder", transcoder, "decoder command with {input} and {output}");
    app->add_flag("--allow-gaps", allow_gaps, "accept frames without a keypoint file");
    app->add_flag("--strict-gaps", strict_gaps, "reject frames without a keypoint file");
  }

  json to_json() const {
    json s = json::object();
    if (track_threshold) s["track_threshold"] = *track_threshold;
    if (conf_threshold) s["conf_threshold"] = *conf_threshold;
    if (presence) s["presence_threshold"] = *presence;
    if (fps) s["fps"] = *fps;
    if (scope) s["scope"] = *scope;
    if (targets) s["targets"] = *targets;
    if (style) s["style"] = *style;
    if (transcoder) s["transcoder"] = *transcoder;
    if (allow_gaps) s["allow_gaps"] = true;
    if (strict_gaps) s["allow_gaps"] = false;
    return s;
  }
};

struct Geometry {
  std::optional<std::string> frames_dir;
  std::optional<int> width, height;
  std::optional<long long> frame_count;

  void add(CLI::App* app) {
    app->add_option("--frames-dir", frames_dir, "PNG frame directory supplying the frame geometry");
    app->add_option("--width", width, "frame width in pixels");
    app->add_option("--height", height, "frame height in pixels");
    app->add_option("--frame-count", frame_count, "number of frames (default: from the pose files)");
  }

  void fill(json& o) const {
    if (frames_dir) o["frames_dir"] = *frames_dir;
    if (width) o["width"] = *width;
    if (height) o["height"] = *height;
    if (frame_count) o["frame_count"] = *frame_count;
  }
};

int open_project(const std::string& config, ProjectHandle& h) {
  sp_status st = sp_project_load(config.c_str(), &h.p);
  return st == SP_OK ? 0 : report_failure(st);
}

sp_review_server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"De-identification pipeline for clinical gait videos with 2D pose keypoints"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sp_version()));

  // init
  std::string name, input_dir, output_dir;
  std::optional<std::string> metadata_dir;
  std::vector<std::string> stems;
  SettingsFlags init_settings;
  CLI::App* init = app.add_subcommand("init", "create a project from an input directory");
  init->add_option("--name", name, "project name")->required();
  init->add_option("--input", input_dir, "directory with one <stem>/poses (and <stem>/frames) per video")->required();
  init->add_option("--output", output_dir, "directory that will hold the project")->required();
  init->add_option("--metadata", metadata_dir, "directory searched for per-video sidecar files");
  init->add_option("--stem", stems, "restrict to these videos");
  init_settings.add(init);

  // configure
  std::string config;
  SettingsFlags cfg_settings;
  CLI::App* configure = app.add_subcommand("configure", "change project settings; affected steps are re-run");
  configure->add_option("--config", config, "project file")->required();
  cfg_settings.add(configure);

  // run
  std::optional<std::string> run_stem, stop_after;
  CLI::App* run = app.add_subcommand("run", "run or resume the pipeline");
  run->add_option("--config", config, "project file")->required();
  run->add_option("--stem", run_stem, "only this video");
  run->add_option("--stop-after", stop_after, "stop once this step is complete")
      ->check(CLI::IsMember({"standardize", "load_poses", "track", "interpolate", "identify", "face_boxes", "render"}));

  // track
  std::string pose_dir, out_dir;
  double track_threshold = 0.15;
  Geometry track_geom;
  CLI::App* track = app.add_subcommand("track", "assign track ids to a directory of keypoint files");
  track->add_option("--pose-dir", pose_dir, "keypoint files")->required();
  track->add_option("--out-dir", out_dir, "output directory")->required();
  track->add_option("--threshold", track_threshold, "new-person distance as a fraction of the diagonal");
  track_geom.add(track);

  // interpolate
  std::string scope = "face";
  double conf_threshold = 0.5;
  CLI::App* interpolate = app.add_subcommand("interpolate", "repair low-confidence keypoints of tracked files");
  interpolate->add_option("--pose-dir", pose_dir, "tracked keypoint files")->required();
  interpolate->add_option("--out-dir", out_dir, "output directory")->required();
  interpolate->add_option("--scope", scope, "keypoints to repair")->check(CLI::IsMember({"face", "body"}));
  interpolate->add_option("--threshold", conf_threshold, "confidence threshold");

  // identify
  double presence = 0.8;
  Geometry id_geom;
  std::optional<std::string> id_stem;
  std::optional<long long> patient_override;
  bool clear_override = false;
  CLI::App* identify = app.add_subcommand("identify", "score tracks and pick the patient");
  identify->add_option("--pose-dir", pose_dir, "tracked keypoint files");
  identify->add_option("--presence", presence, "minimum frame presence");
  id_geom.add(identify);
  identify->add_option("--config", config, "project file (with --patient-override)");
  identify->add_option("--stem", id_stem, "video in the project");
  identify->add_option("--patient-override", patient_override, "force this track as the patient");
  identify->add_flag("--clear-override", clear_override, "return to rule-based selection");

  // blur
  std::string frames_dir, targets = "all", style = "solid";
  std::optional<std::string> overrides;
  std::optional<long long> patient;
  CLI::App* blur = app.add_subcommand("blur", "render face blurring onto a frame directory");
  blur->add_option("--pose-dir", pose_dir, "tracked (ideally interpolated) keypoint files")->required();
  blur->add_option("--frames-dir", frames_dir, "PNG frames")->required();
  blur->add_option("--out-dir", out_dir, "rendered frames")->required();
  blur->add_option("--targets", targets, "who is blurred")->check(CLI::IsMember({"patient", "all"}));
  blur->add_option("--style", style, "blur style")->check(CLI::IsMember({"solid", "gaussian"}));
  blur->add_option("--overrides", overrides, "override file");
  blur->add_option("--patient", patient, "patient track id (default: identified)");
  blur->add_option("--presence", presence, "minimum frame presence when identifying");
  blur->add_option("--conf-threshold", conf_threshold, "confidence threshold for face points");

  // eval
  std::string gt, det;
  double iou = 0.5;
  std::optional<std::string> pr_curve, report_file;
  CLI::App* evalc = app.add_subcommand("eval", "score face detections against ground truth");
  evalc->add_option("--gt", gt, "ground truth CSV (frame,x,y,w,h)")->required();
  evalc->add_option("--det", det, "detection CSV (frame,x,y,w,h[,confidence])")->required();
  evalc->add_option("--iou", iou, "match threshold");
  evalc->add_option("--pr-curve", pr_curve, "write recall,precision points here");
  evalc->add_option("--report", report_file, "also write the report here");

  // export
  std::string dest;
  std::optional<std::string> export_stem, keypoints;
  std::vector<std::string> variants;
  bool blurred = false, backup = false, detections = false, skip_qc = false;
  CLI::App* exportc = app.add_subcommand("export", "copy project artifacts to an external directory");
  exportc->add_option("--config", config, "project file")->required();
  exportc->add_option("--dest", dest, "destination directory")->required();
  exportc->add_option("--stem", export_stem, "only this video");
  exportc->add_flag("--blurred-video", blurred, "rendered frames (requires a completed quality check)");
  exportc->add_flag("--backup", backup, "configuration, ledger, face boxes and overrides");
  exportc->add_option("--keypoints", keypoints, "keypoints as csv or json")->check(CLI::IsMember({"csv", "json"}));
  exportc->add_option("--variant", variants, "raw and/or interpolated")
      ->check(CLI::IsMember({"raw", "interpolated"}));
  exportc->add_flag("--detections", detections, "face boxes as a detection CSV");
  exportc->add_flag("--skip-quality-check", skip_qc, "export without review; recorded in the project");

  // signoff
  std::string signoff_stem;
  CLI::App* signoff = app.add_subcommand("signoff", "mark a video's quality check complete");
  signoff->add_option("--config", config, "project file")->required();
  signoff->add_option("--stem", signoff_stem, "video")->required();

  // review
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::optional<std::string> static_dir;
  CLI::App* review = app.add_subcommand("review", "serve the quality-check review API");
  review->add_option("--config", config, "project file")->required();
  review->add_option("--bind", bind, "listen address");
  review->add_option("--port", port, "listen port (0 picks one)");
  review->add_option("--static-dir", static_dir, "browser client assets served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  char* doc = nullptr;

  if (*init) {
    json o = {{"name", name}, {"input_dir", input_dir}, {"output_dir", output_dir}, {"settings", init_settings.to_json()}};
    if (metadata_dir) o["metadata_dir"] = *metadata_dir;
    if (!stems.empty()) o["stems"] = stems;
    ProjectHandle h;
    sp_status st = sp_project_create(o.dump().c_str(), &h.p);
    if (st != SP_OK) return report_failure(st);
    st = sp_project_config_path(h.p, &doc);
    return finish(st, doc);
  }

  if (*configure) {
    ProjectHandle h;
    if (int rc = open_project(config, h)) return rc;
    sp_status st = sp_project_update_settings(h.p, cfg_settings.to_json().dump().c_str());
    if (st != SP_OK) return report_failure(st);
    return finish(sp_project_config_json(h.p, &doc), doc);
  }

  if (*run) {
    ProjectHandle h;
    if (int rc = open_project(config, h)) return rc;
    sp_status st = sp_project_run(h.p, run_stem ? run_stem->c_str() : nullptr,
                                  stop_after ? stop_after->c_str() : nullptr, &doc);
    return finish(st, doc);
  }

  if (*track) {
    json o = {{"pose_dir", pose_dir}, {"out_dir", out_dir}, {"threshold", track_threshold}};
    track_geom.fill(o);
    return finish(sp_track(o.dump().c_str(), &doc), doc);
  }

  if (*interpolate) {
    json o = {{"pose_dir", pose_dir}, {"out_dir", out_dir}, {"scope", scope}, {"threshold", conf_threshold}};
    return finish(sp_interpolate(o.dump().c_str(), &doc), doc);
  }

  if (*identify) {
    if (patient_override || clear_override) {
      if (config.empty() || !id_stem) {
        std::cerr << "error: --patient-override and --clear-override need --config and --stem\n";
        return 2;
      }
      ProjectHandle h;
      if (int rc = open_project(config, h)) return rc;
      sp_status st = sp_project_set_patient(h.p, id_stem->c_str(), clear_override ? -1 : *patient_override);
      return st == SP_OK ? 0 : report_failure(st);
    }
    if (pose_dir.empty()) {
      std::cerr << "error: identify needs --pose-dir\n";
      return 2;
    }
    json o = {{"pose_dir", pose_dir}, {"presence", presence}};
    id_geom.fill(o);
    return finish(sp_identify(o.dump().c_str(), &doc), doc);
  }

  if (*blur) {
    json o = {{"pose_dir", pose_dir}, {"frames_dir", frames_dir}, {"out_dir", out_dir}, {"targets", targets},
              {"style", style}, {"presence", presence}, {"conf_threshold", conf_threshold}};
    if (overrides) o["overrides"] = *overrides;
    if (patient) o["patient"] = *patient;
    return finish(sp_blur(o.dump().c_str(), &doc), doc);
  }

  if (*evalc) {
    json o = {{"gt", gt}, {"det", det}, {"iou", iou}};
    if (pr_curve) o["pr_curve"] = *pr_curve;
    sp_status st = sp_evaluate(o.dump().c_str(), &doc);
    if (st == SP_OK && report_file && doc) {
      if (std::FILE* f = std::fopen(report_file->c_str(), "w")) {
        std::fputs(doc, f);
        std::fputc('\n', f);
        std::fclose(f);
      } else {
        std::cerr << "error: cannot write " << *report_file << "\n";
        sp_free_string(doc);
        return 2;
      }
    }
    return finish(st, doc);
  }

  if (*exportc) {
    json o = {{"dest", dest}, {"blurred_video", blurred}, {"backup", backup}, {"detections", detections},
              {"skip_quality_check", skip_qc}, {"keypoints", keypoints.has_value()}};
    if (keypoints) o["format"] = *keypoints;
    if (!variants.empty()) o["variants"] = variants;
    if (export_stem) o["stem"] = *export_stem;
    ProjectHandle h;
    if (int rc = open_project(config, h)) return rc;
    return finish(sp_project_export(h.p, o.dump().c_str(), &doc), doc);
  }

  if (*signoff) {
    ProjectHandle h;
    if (int rc = open_project(config, h)) return rc;
    sp_status st = sp_project_signoff(h.p, signoff_stem.c_str());
    return st == SP_OK ? 0 : report_failure(st);
  }

  if (*review) {
    ProjectHandle h;
    if (int rc = open_project(config, h)) return rc;
    // Block the stop signals before the server threads start so only sigwait sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);
    sp_status st = sp_review_start(h.p, bind.c_str(), port, static_dir ? static_dir->c_str() : nullptr, &g_server);
    if (st != SP_OK) return report_failure(st);
    std::cout << "review service on http://" << bind << ":" << sp_review_port(g_server) << "/" << std::endl;
    int sig = 0;
    sigwait(&signals, &sig);
    sp_review_stop(g_server);
    sp_review_close(g_server);
    return 0;
  }

  return 2;
}
