#include "securepose/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <thread>

#include <json.hpp>

#include "securepose/blur.hpp"
#include "securepose/evaluation.hpp"
#include "securepose/ingest.hpp"
#include "securepose/interpolation.hpp"
#include "securepose/overrides.hpp"
#include "securepose/patient.hpp"
#include "securepose/tracking.hpp"
#include "reports.hpp"
#include "util.hpp"

namespace securepose::pipeline {

using nlohmann::json;

namespace {

json read_json(const fs::path& file) {
  try {
    return json::parse(detail::read_file(file));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, file.string() + ": " + e.what());
  }
}

void write_json(const fs::path& file, const json& doc) { detail::write_file_atomic(file, doc.dump(2) + "\n"); }

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

bool has_frames(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".png") return true;
  }
  return false;
}

struct Context {
  Project& project;
  VideoEntry video;
  Settings settings;
  fs::path dir;
};

FrameIndex counted_frames(const Context& ctx) {
  json report = read_json(ctx.dir / layout::kLoadReport);
  return report.at("counted_frames").get<FrameIndex>();
}

ingest::PoseSequence load_stage(const Context& ctx, const char* sub, FrameIndex frames) {
  return ingest::load_pose_files(ctx.dir / sub, frames);
}

std::string do_standardize(const Context& ctx) {
  std::string how = "validated existing frames";
  if (!has_frames(ctx.video.frame_dir)) {
    if (!ctx.video.source_video) {
      throw Error(ErrorCode::kInput, "no frames in " + ctx.video.frame_dir.string() + " and no source video");
    }
    std::error_code ec;
    fs::create_directories(ctx.video.frame_dir, ec);
    std::string cmd = ctx.settings.transcoder;
    replace_all(cmd, "{input}", shell_quote(ctx.video.source_video->string()));
    replace_all(cmd, "{output}", shell_quote(ctx.video.frame_dir.string()));
    ctx.project.log("[" + ctx.video.stem + "] transcoder: " + cmd);
    int rc = std::system(cmd.c_str());
    if (rc != 0) {
      throw Error(ErrorCode::kStep, "transcoder exited with status " + std::to_string(rc) + ": " + cmd);
    }
    how = "decoded " + ctx.video.source_video->filename().string();
  }
  ingest::FrameStore store = ingest::load_frames(ctx.video.frame_dir, ctx.settings.fps);
  const VideoGeometry& g = store.geometry();
  write_json(ctx.dir / layout::kGeometry,
             {{"width", g.width}, {"height", g.height}, {"frame_count", g.frame_count}, {"fps", g.fps}});
  return how + ", " + std::to_string(g.frame_count) + " frames " + std::to_string(g.width) + "x" +
         std::to_string(g.height);
}

std::string do_load_poses(const Context& ctx, const VideoGeometry& geom) {
  ingest::PoseSequence seq = ingest::load_pose_files(ctx.video.pose_dir, geom.frame_count);
  if (!seq.gaps.empty() && !ctx.settings.allow_gaps) {
    std::string list;
    for (std::size_t i = 0; i < seq.gaps.size() && i < 10; ++i) list += (i ? ", " : "") + std::to_string(seq.gaps[i]);
    if (seq.gaps.size() > 10) list += ", ...";
    throw Error(ErrorCode::kGap, std::to_string(seq.gaps.size()) + " frame(s) have no keypoint file (" + list +
                                     "); enable allow_gaps to exclude them from presence ratios");
  }
  const FrameIndex counted = geom.frame_count - static_cast<FrameIndex>(seq.gaps.size());
  write_json(ctx.dir / layout::kLoadReport, {{"pose_stem", seq.stem},
                                             {"frame_count", seq.frame_count},
                                             {"gaps", seq.gaps},
                                             {"counted_frames", counted}});
  std::size_t people = 0;
  for (const FramePose& f : seq.frames) people += f.people.size();
  return std::to_string(seq.frames.size()) + " pose files, " + std::to_string(people) + " detections, " +
         std::to_string(seq.gaps.size()) + " gap(s)";
}

std::string do_track(const Context& ctx, const VideoGeometry& geom) {
  ingest::PoseSequence seq = ingest::load_pose_files(ctx.video.pose_dir, geom.frame_count);
  tracking::TrackingResult r =
      tracking::assign_ids(std::move(seq.frames), geom, ctx.settings.track_threshold, counted_frames(ctx));
  ingest::write_pose_files(r.frames, ctx.dir / layout::kTrackedPoses, ctx.video.stem);

  write_json(ctx.dir / layout::kTrackingReport, detail::tracking_report(r, ctx.settings.track_threshold, geom));
  return std::to_string(r.tracks.size()) + " track(s)";
}

std::string do_interpolate(const Context& ctx, const VideoGeometry& geom) {
  ingest::PoseSequence seq = load_stage(ctx, layout::kTrackedPoses, geom.frame_count);
  interp::FramesRepair r = interp::interpolate_frames(std::move(seq.frames), ctx.settings.scope,
                                                      ctx.settings.conf_threshold);
  ingest::write_pose_files(r.frames, ctx.dir / layout::kInterpolatedPoses, ctx.video.stem);

  write_json(ctx.dir / layout::kInterpolationReport,
             detail::interpolation_report(r, ctx.settings.scope, ctx.settings.conf_threshold));
  return std::to_string(r.report.size()) + " bad observation(s), " + std::to_string(r.unrecoverable.size()) +
         " track(s) with unrecoverable keypoints";
}

std::string do_identify(const Context& ctx, const VideoGeometry& geom) {
  ingest::PoseSequence seq = load_stage(ctx, layout::kTrackedPoses, geom.frame_count);
  std::vector<Track> tracks = group_tracks(seq.frames, counted_frames(ctx));
  patient::Selection sel = patient::score_tracks(tracks, geom, ctx.settings.presence_threshold);
  std::string source = "rule";
  if (ctx.video.patient_override) {
    const TrackId id = *ctx.video.patient_override;
    if (std::none_of(tracks.begin(), tracks.end(), [&](const Track& t) { return t.track_id == id; })) {
      throw Error(ErrorCode::kValidation, "patient override names unknown track " + std::to_string(id));
    }
    sel.patient = id;
    source = "override";
  }
  if (!sel.patient && ctx.settings.targets == blur::Targets::kPatientOnly) {
    throw Error(ErrorCode::kNoPatient,
                "no track is present in at least " + detail::format_double(ctx.settings.presence_threshold * 100) +
                    "% of frames; re-run with all-person blurring (targets = all)");
  }
  write_json(ctx.dir / layout::kPatient, detail::patient_report(sel, source, ctx.settings.presence_threshold));
  return sel.patient ? "patient is track " + std::to_string(*sel.patient) + " (" + source + ")"
                     : std::string("no patient identified");
}

std::string do_face_boxes(const Context& ctx, const VideoGeometry& geom) {
  if (ctx.settings.scope == interp::Scope::kFaceOnly) {
    json report = read_json(ctx.dir / layout::kInterpolationReport);
    std::optional<TrackId> patient = read_patient(ctx.project, ctx.video.stem);
    for (const auto& [key, ks] : report.at("unrecoverable").items()) {
      const TrackId id = std::stoll(key);
      if (ctx.settings.targets == blur::Targets::kPatientOnly && patient != id) continue;
      std::vector<int> facial;
      for (int k : ks.get<std::vector<int>>()) {
        if (std::find(body25::kFace.begin(), body25::kFace.end(), k) != body25::kFace.end()) facial.push_back(k);
      }
      if (!facial.empty()) {
        std::string names;
        for (int k : facial) names += std::string(names.empty() ? "" : ", ") + body25::name(k);
        throw Error(ErrorCode::kUnrecoverable,
                    "track " + key + " never has a usable " + names +
                        " keypoint; its face cannot be tracked (review it manually or use whole-body mode)");
      }
    }
  }
  ingest::PoseSequence seq = load_stage(ctx, layout::kInterpolatedPoses, geom.frame_count);
  blur::FaceBoxes boxes = blur::compute_face_boxes(seq.frames, geom, ctx.settings.conf_threshold);
  blur::write_face_boxes(ctx.dir / layout::kFaceBoxes, boxes.boxes);

  write_json(ctx.dir / layout::kFaceBoxReport, detail::face_box_report(boxes));
  return std::to_string(boxes.boxes.size()) + " face box(es)";
}

std::string do_render(const Context& ctx) {
  ingest::FrameStore store = ingest::load_frames(ctx.video.frame_dir, ctx.settings.fps);
  review::OverrideSet overrides = review::load_override_file(ctx.dir / layout::kOverrides);
  blur::RenderReport r = blur::render(store, blur::read_face_boxes(ctx.dir / layout::kFaceBoxes),
                                      blur_spec(ctx.project, ctx.video.stem), overrides, ctx.dir / layout::kRendered);
  write_json(ctx.dir / layout::kRenderReport, {{"frames", r.frames_written},
                                               {"regions", r.regions_applied},
                                               {"override_revision", overrides.revision},
                                               {"warnings", r.warnings}});
  for (const std::string& w : r.warnings) ctx.project.log("[" + ctx.video.stem + "] render warning: " + w);
  return std::to_string(r.frames_written) + " frame(s), " + std::to_string(r.regions_applied) + " region(s)";
}

}  // namespace

VideoGeometry read_geometry(const Project& project, const std::string& stem) {
  json g = read_json(project.video_dir(stem) / layout::kGeometry);
  VideoGeometry geom{g.at("width").get<int>(), g.at("height").get<int>(), g.at("frame_count").get<FrameIndex>(),
                     g.at("fps").get<double>()};
  geom.validate();
  return geom;
}

std::optional<TrackId> read_patient(const Project& project, const std::string& stem) {
  json p = read_json(project.video_dir(stem) / layout::kPatient);
  if (p.at("patient").is_null()) return std::nullopt;
  return p["patient"].get<TrackId>();
}

blur::BlurSpec blur_spec(const Project& project, const std::string& stem) {
  const Settings s = project.config().settings;
  blur::BlurSpec spec{s.targets, read_patient(project, stem), s.style};
  spec.validate();
  return spec;
}

StepRecord run_step(Project& project, const std::string& stem, Step step) {
  const ProjectConfig cfg = project.config();
  Context ctx{project, cfg.video(stem), cfg.settings, project.video_dir(stem)};
  VideoLedger ledger = project.ledger(stem);
  if (ledger.done(step)) {
    project.invalidate_from(stem, step);
  } else if (ledger.next() != step) {
    throw Error(ErrorCode::kNotReady, std::string("step ") + to_string(step) + " for '" + stem +
                                          "' needs " + to_string(*ledger.next()) + " first");
  }

  project.log("[" + stem + "] " + to_string(step) + ": start");
  StepRecord record{stem, step, false, {}};
  try {
    std::error_code ec;
    fs::create_directories(ctx.dir, ec);
    switch (step) {
      case Step::kStandardize: record.summary = do_standardize(ctx); break;
      case Step::kLoadPoses: record.summary = do_load_poses(ctx, read_geometry(project, stem)); break;
      case Step::kTrack: record.summary = do_track(ctx, read_geometry(project, stem)); break;
      case Step::kInterpolate: record.summary = do_interpolate(ctx, read_geometry(project, stem)); break;
      case Step::kIdentify: record.summary = do_identify(ctx, read_geometry(project, stem)); break;
      case Step::kFaceBoxes: record.summary = do_face_boxes(ctx, read_geometry(project, stem)); break;
      case Step::kRender: record.summary = do_render(ctx); break;
    }
  } catch (const Error& e) {
    const std::string msg = "step '" + std::string(to_string(step)) + "' failed for video '" + stem + "' (" +
                            to_string(e.code()) + "; completed outputs in " + ctx.dir.string() + "): " + e.what();
    project.log("[" + stem + "] " + to_string(step) + ": FAILED " + e.what());
    throw StepFailure(stem, step, e.code(), msg);
  } catch (const std::exception& e) {
    project.log("[" + stem + "] " + to_string(step) + ": FAILED " + e.what());
    throw StepFailure(stem, step, ErrorCode::kInternal,
                      "step '" + std::string(to_string(step)) + "' failed for video '" + stem + "': " + e.what());
  }
  project.mark_complete(stem, step);
  project.log("[" + stem + "] " + to_string(step) + ": done, " + record.summary);
  return record;
}

RunReport run_pipeline(Project& project, const RunOptions& options) {
  const ProjectConfig cfg = project.config();
  std::vector<std::string> stems;
  if (options.stem) {
    cfg.video(*options.stem);
    stems.push_back(*options.stem);
  } else {
    for (const VideoEntry& v : cfg.videos) stems.push_back(v.stem);
  }

  std::vector<std::vector<StepRecord>> records(stems.size());
  std::vector<std::exception_ptr> errors(stems.size());
  {
    std::vector<std::jthread> workers;
    for (std::size_t i = 0; i < stems.size(); ++i) {
      workers.emplace_back([&, i] {
        try {
          const std::string& stem = stems[i];
          for (Step step : all_steps()) {
            if (project.ledger(stem).done(step)) {
              records[i].push_back({stem, step, true, "already complete"});
            } else {
              records[i].push_back(run_step(project, stem, step));
            }
            if (options.stop_after == step) break;
          }
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
  }
  RunReport report;
  for (auto& r : records) report.steps.insert(report.steps.end(), r.begin(), r.end());
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

void write_keypoints_csv(const fs::path& file, const std::vector<FramePose>& frames) {
  std::string text = "frame,track_id";
  for (int k = 0; k < body25::kCount; ++k) {
    const std::string p = "kp" + std::to_string(k);
    text += "," + p + "_x," + p + "_y," + p + "_c";
  }
  text += "\n";
  for (const FramePose& f : frames) {
    std::vector<const PersonEntry*> people;
    for (const PersonEntry& p : f.people) {
      if (!p.track_id) throw Error(ErrorCode::kContract, "CSV export needs tracked people");
      people.push_back(&p);
    }
    std::stable_sort(people.begin(), people.end(),
                     [](const PersonEntry* a, const PersonEntry* b) { return *a->track_id < *b->track_id; });
    for (const PersonEntry* p : people) {
      text += std::to_string(f.frame_index) + "," + std::to_string(*p->track_id);
      for (const Keypoint& k : p->skeleton.keypoints) {
        text += "," + detail::format_double(k.x) + "," + detail::format_double(k.y) + "," + detail::format_double(k.c);
      }
      text += "\n";
    }
  }
  detail::write_file_atomic(file, text);
}

std::vector<FramePose> read_keypoints_csv(const fs::path& file) {
  std::vector<std::string> header = {"frame", "track_id"};
  for (int k = 0; k < body25::kCount; ++k) {
    const std::string p = "kp" + std::to_string(k);
    header.push_back(p + "_x");
    header.push_back(p + "_y");
    header.push_back(p + "_c");
  }
  std::map<FrameIndex, FramePose> frames;
  const std::string where = file.string();
  for (const auto& row : detail::read_csv(file, header)) {
    const auto frame = static_cast<FrameIndex>(detail::parse_number(row[0], where));
    PersonEntry p;
    p.track_id = static_cast<TrackId>(detail::parse_number(row[1], where));
    for (int k = 0; k < body25::kCount; ++k) {
      const auto base = static_cast<std::size_t>(2 + 3 * k);
      p.skeleton[k] = {detail::parse_number(row[base], where), detail::parse_number(row[base + 1], where),
                       detail::parse_number(row[base + 2], where), false};
    }
    FramePose& f = frames[frame];
    f.frame_index = frame;
    f.people.push_back(p);
  }
  std::vector<FramePose> out;
  for (auto& [i, f] : frames) out.push_back(std::move(f));
  return out;
}

ExportReport export_project(Project& project, const ExportRequest& request) {
  const ProjectConfig cfg = project.config();
  std::vector<std::string> stems;
  if (request.stem) {
    cfg.video(*request.stem);
    stems.push_back(*request.stem);
  } else {
    for (const VideoEntry& v : cfg.videos) stems.push_back(v.stem);
  }
  auto require = [&](const std::string& stem, Step step, const std::string& what) {
    if (!project.ledger(stem).done(step)) {
      throw Error(ErrorCode::kNotReady, what + " for '" + stem + "' is not available until step " +
                                            to_string(step) + " has completed");
    }
  };

  // Every precondition is checked before anything is written.
  for (const std::string& stem : stems) {
    if (request.blurred_video) {
      require(stem, Step::kRender, "blurred video");
      if (project.ledger(stem).quality_check == QualityCheck::kPending && !request.skip_quality_check) {
        throw Error(ErrorCode::kPrivacy, "blurred video for '" + stem +
                                             "' has not passed quality check; sign it off in the review "
                                             "service or pass the skip flag");
      }
    }
    if (request.keypoints) {
      for (KeypointVariant v : request.variants) {
        require(stem, v == KeypointVariant::kRaw ? Step::kTrack : Step::kInterpolate,
                v == KeypointVariant::kRaw ? "raw keypoints" : "interpolated keypoints");
      }
    }
    if (request.detections) require(stem, Step::kFaceBoxes, "face detections");
  }

  ExportReport report;
  std::error_code ec;
  fs::create_directories(request.dest, ec);
  if (!fs::is_directory(request.dest)) throw Error(ErrorCode::kIo, "cannot create " + request.dest.string());

  for (const std::string& stem : stems) {
    const fs::path vdir = project.video_dir(stem);
    const fs::path out = request.dest / stem;
    const VideoEntry& video = cfg.video(stem);
    if (request.blurred_video) {
      if (project.ledger(stem).quality_check == QualityCheck::kPending) {
        project.set_quality_check(stem, QualityCheck::kSkipped);
        project.log("[" + stem + "] quality check skipped by export flag");
      }
      ingest::FrameStore store = ingest::load_frames(video.frame_dir, cfg.settings.fps);
      blur::render(store, blur::read_face_boxes(vdir / layout::kFaceBoxes), blur_spec(project, stem),
                   review::load_override_file(vdir / layout::kOverrides), out / "blurred");
      report.written.push_back(out / "blurred");
    }
    if (request.keypoints) {
      const VideoGeometry geom = read_geometry(project, stem);
      for (KeypointVariant v : request.variants) {
        const char* label = v == KeypointVariant::kRaw ? "raw" : "interpolated";
        const fs::path src = vdir / (v == KeypointVariant::kRaw ? layout::kTrackedPoses : layout::kInterpolatedPoses);
        if (request.format == KeypointFormat::kJson) {
          const fs::path dst = out / (std::string("keypoints_") + label);
          fs::create_directories(dst, ec);
          for (const auto& entry : fs::directory_iterator(src)) {
            fs::copy_file(entry.path(), dst / entry.path().filename(), fs::copy_options::overwrite_existing);
          }
          report.written.push_back(dst);
        } else {
          const fs::path dst = out / (stem + "_keypoints_" + label + ".csv");
          write_keypoints_csv(dst, ingest::load_pose_files(src, geom.frame_count).frames);
          report.written.push_back(dst);
        }
      }
    }
    if (request.detections) {
      const fs::path dst = out / (stem + "_face_detections.csv");
      fs::create_directories(out, ec);
      const auto boxes = blur::read_face_boxes(vdir / layout::kFaceBoxes);
      eval::write_detections(dst, eval::face_boxes_to_detections(boxes));
      report.written.push_back(dst);
    }
  }
  if (request.backup) {
    const fs::path dst = request.dest / (cfg.name + "_backup");
    fs::create_directories(dst, ec);
    fs::copy_file(project.config_path(), dst / kConfigFileName, fs::copy_options::overwrite_existing);
    if (fs::exists(project.log_path())) {
      fs::copy_file(project.log_path(), dst / "project.log", fs::copy_options::overwrite_existing);
    }
    for (const std::string& stem : stems) {
      const fs::path vdir = project.video_dir(stem);
      for (const char* name : {layout::kGeometry, layout::kLoadReport, layout::kTrackingReport,
                               layout::kInterpolationReport, layout::kPatient, layout::kFaceBoxes,
                               layout::kFaceBoxReport, layout::kOverrides, layout::kRenderReport}) {
        if (fs::exists(vdir / name)) {
          fs::create_directories(dst / stem, ec);
          fs::copy_file(vdir / name, dst / stem / name, fs::copy_options::overwrite_existing);
        }
      }
    }
    report.written.push_back(dst);
  }
  project.log("export to " + request.dest.string() + ": " + std::to_string(report.written.size()) + " item(s)");
  return report;
}

}  // namespace securepose::pipeline
