// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "securepose/blur.hpp"
#include "securepose/error.hpp"
#include "securepose/evaluation.hpp"
#include "securepose/ingest.hpp"
#include "securepose/interpolation.hpp"
#include "securepose/patient.hpp"
#include "securepose/pipeline.hpp"
#include "securepose/tracking.hpp"
#include "synth.hpp"

using namespace securepose;
using securepose::testing::Rng;
using securepose::testing::TempDir;
namespace fs = std::filesystem;

namespace {

// Collects the first few failure descriptions of a criterion.
struct Outcome {
  int failures = 0;
  std::ostringstream detail;

  void fail(const std::string& what) {
    if (failures++ < 5) detail << (failures > 1 ? "; " : "") << what;
  }
  bool ok() const { return failures == 0; }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---- 1: F1 recomputed from the published precision / recall table ----

Outcome table_f1() {
  struct Row {
    const char* method;
    double precision, recall, f1;
  };
  const Row rows[] = {
      {"Viola Jones", 0.937, 0.488, 0.642}, {"HOG", 0.689, 0.282, 0.400}, {"MMOD", 0.822, 0.376, 0.516},
      {"MTCNN", 0.850, 0.579, 0.689},       {"YOLO-face", 0.956, 0.588, 0.728}, {"S3FD", 0.935, 0.580, 0.716},
      {"SecurePose", 0.992, 0.990, 0.991},
  };
  Outcome o;
  for (const Row& r : rows) {
    // Also through metrics(), with counts large enough to carry the rates.
    const double f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
    const int tp = 1000000;
    const int fp = static_cast<int>(std::llround(tp / r.precision - tp));
    const int fn = static_cast<int>(std::llround(tp / r.recall - tp));
    const double via_counts = eval::metrics(tp, fp, fn).f1;
    if (std::abs(via_counts - f1) > 1e-6) o.fail(std::string(r.method) + " metrics() disagrees: " + fmt(via_counts));
    if (std::abs(f1 - r.f1) > 0.0015) o.fail(std::string(r.method) + " F1 " + fmt(f1) + " vs " + fmt(r.f1));
  }
  return o;
}

// ---- 2: IoU against rasterization ----

double raster_iou(const eval::Box& a, const eval::Box& b) {
  const int x0 = static_cast<int>(std::min(a.x, b.x)), x1 = static_cast<int>(std::max(a.x + a.w, b.x + b.w));
  const int y0 = static_cast<int>(std::min(a.y, b.y)), y1 = static_cast<int>(std::max(a.y + a.h, b.y + b.h));
  long in_a = 0, in_b = 0, both = 0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const bool pa = x >= a.x && x < a.x + a.w && y >= a.y && y < a.y + a.h;
      const bool pb = x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
      in_a += pa;
      in_b += pb;
      both += pa && pb;
    }
  }
  return static_cast<double>(both) / static_cast<double>(in_a + in_b - both);
}

eval::Box random_int_box(Rng& rng, int extent, int max_side) {
  std::uniform_int_distribution<int> pos(0, extent), side(1, max_side);
  return {static_cast<double>(pos(rng)), static_cast<double>(pos(rng)), static_cast<double>(side(rng)),
          static_cast<double>(side(rng))};
}

Outcome iou_oracle() {
  Rng rng(2024);
  Outcome o;
  int overlapping = 0;
  for (int i = 0; i < 1000; ++i) {
    const eval::Box a = random_int_box(rng, 40, 25), b = random_int_box(rng, 40, 25);
    const double got = eval::iou(a, b), want = raster_iou(a, b);
    overlapping += want > 0;
    if (std::abs(got - want) > 1e-12) o.fail("pair " + std::to_string(i) + ": " + fmt(got) + " vs " + fmt(want));
  }
  if (overlapping < 200) o.fail("only " + std::to_string(overlapping) + " overlapping pairs generated");
  return o;
}

// ---- 3: 11-point AP against a brute-force threshold sweep ----

double oracle_ap(const std::vector<eval::DetectionBox>& dets, const std::vector<eval::GroundTruthBox>& gts) {
  std::vector<double> levels;
  for (const auto& d : dets) levels.push_back(*d.confidence);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::vector<std::pair<double, double>> points;
  for (double level : levels) {
    std::vector<const eval::DetectionBox*> kept;
    for (const auto& d : dets)
      if (*d.confidence >= level) kept.push_back(&d);
    std::stable_sort(kept.begin(), kept.end(), [](auto* a, auto* b) { return *a->confidence > *b->confidence; });
    std::vector<bool> used(gts.size(), false);
    int tp = 0;
    for (const eval::DetectionBox* d : kept) {
      int best = -1;
      double best_v = -1;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g] || gts[g].frame != d->frame) continue;
        const double v = raster_iou(d->box, gts[g].box);
        if (v > best_v) best_v = v, best = static_cast<int>(g);
      }
      if (best >= 0 && best_v >= 0.5) {
        used[static_cast<std::size_t>(best)] = true;
        ++tp;
      }
    }
    points.emplace_back(static_cast<double>(tp) / static_cast<double>(gts.size()),
                        static_cast<double>(tp) / static_cast<double>(kept.size()));
  }
  double total = 0;
  for (int i = 0; i <= 10; ++i) {
    double best = 0;
    for (const auto& [r, p] : points)
      if (r >= i / 10.0 - 1e-12) best = std::max(best, p);
    total += best;
  }
  return total / 11.0;
}

Outcome ap_oracle() {
  Rng rng(77);
  std::uniform_int_distribution<int> count(1, 20), frame(0, 3), jitter(-3, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Outcome o;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<eval::GroundTruthBox> gts;
    std::vector<eval::DetectionBox> dets;
    const int g = count(rng);
    for (int i = 0; i < g; ++i) gts.push_back({frame(rng), random_int_box(rng, 40, 12)});
    const int d = count(rng);
    std::set<double> confs;
    while (static_cast<int>(confs.size()) < d) confs.insert(u(rng));
    for (double c : confs) {
      eval::DetectionBox det;
      det.confidence = c;
      if (u(rng) < 0.7) {
        const auto& t = gts[rng() % gts.size()];
        det.frame = t.frame;
        det.box = {t.box.x + jitter(rng), t.box.y + jitter(rng), std::max(1.0, t.box.w + jitter(rng)),
                   std::max(1.0, t.box.h + jitter(rng))};
      } else {
        det.frame = frame(rng);
        det.box = random_int_box(rng, 40, 12);
      }
      dets.push_back(det);
    }
    std::shuffle(dets.begin(), dets.end(), rng);
    const double got = eval::average_precision(dets, gts).ap, want = oracle_ap(dets, gts);
    if (std::abs(got - want) > 1e-9) o.fail("set " + std::to_string(trial) + ": " + fmt(got) + " vs " + fmt(want));
  }
  return o;
}

// ---- 4: tracking on generated walker scenes ----

Outcome tracking_scenes() {
  Rng rng(4);
  Outcome o;
  for (int trial = 0; trial < 1000; ++trial) {
    const testing::Scene scene = testing::random_walker_scene(rng);
    const auto r = tracking::assign_ids(scene.frames, scene.geom);
    const testing::SwapCheck c = testing::check_identities(scene, r.frames);
    if (!c.injective || !c.stable) o.fail("scene " + std::to_string(trial) + ": " + c.detail);
  }
  return o;
}

// ---- 5: interpolation ----

Track random_track(Rng& rng, int frames, double bad_rate) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Track t;
  t.track_id = 1;
  FrameIndex f = 0;
  for (int i = 0; i < frames; ++i) {
    f += 1 + (u(rng) < 0.1 ? 2 : 0);
    Skeleton s;
    for (Keypoint& k : s.keypoints) {
      k = {u(rng) * 640, u(rng) * 360, u(rng) < bad_rate ? u(rng) * 0.5 : 0.5 + u(rng) * 0.5, false};
      if (u(rng) < 0.05) k = {};
    }
    t.frames[f] = s;
  }
  return t;
}

Outcome interpolation() {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Outcome o;
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    // Exactness: every keypoint on its own line, 30% of frames punched out.
    const int n = 20 + static_cast<int>(u(rng) * 80);
    std::array<Point, body25::kCount> origin, slope;
    for (std::size_t k = 0; k < origin.size(); ++k) {
      origin[k] = {u(rng) * 1000, u(rng) * 1000};
      slope[k] = {u(rng) * 8 - 4, u(rng) * 8 - 4};
    }
    Track truth, punched;
    std::vector<FrameIndex> interior;
    for (FrameIndex f = 1; f + 1 < n; ++f) interior.push_back(f);
    std::shuffle(interior.begin(), interior.end(), rng);
    const std::set<FrameIndex> holes(interior.begin(), interior.begin() + static_cast<long>(0.3 * n));
    for (FrameIndex f = 0; f < n; ++f) {
      Skeleton s;
      for (int k = 0; k < body25::kCount; ++k) {
        const Point a = origin[static_cast<std::size_t>(k)], m = slope[static_cast<std::size_t>(k)];
        s[k] = {a.x + m.x * static_cast<double>(f), a.y + m.y * static_cast<double>(f), 0.9, false};
      }
      truth.frames[f] = s;
      if (holes.count(f)) {
        for (Keypoint& k : s.keypoints) k = {u(rng) * 50, u(rng) * 50, u(rng) * 0.49, false};
      }
      punched.frames[f] = s;
    }
    const auto r = interp::interpolate_track(punched, interp::Scope::kWholeBody);
    for (const auto& [f, s] : truth.frames) {
      for (int k = 0; k < body25::kCount; ++k) {
        worst = std::max({worst, std::abs(r.track.frames.at(f)[k].x - s[k].x),
                          std::abs(r.track.frames.at(f)[k].y - s[k].y)});
      }
    }

    // Idempotence and no-op on random tracks.
    const Track t = random_track(rng, 5 + static_cast<int>(u(rng) * 40), 0.35);
    for (interp::Scope scope : {interp::Scope::kFaceOnly, interp::Scope::kWholeBody}) {
      const auto once = interp::interpolate_track(t, scope);
      if (interp::interpolate_track(once.track, scope).track != once.track) {
        o.fail("track " + std::to_string(trial) + " not idempotent (" + interp::to_string(scope) + ")");
      }
      for (const auto& [f, s] : t.frames) {
        for (int k = 0; k < body25::kCount; ++k) {
          if (s[k].c >= kReliableConfidence && once.track.frames.at(f)[k] != s[k]) {
            o.fail("track " + std::to_string(trial) + " changed a good keypoint");
          }
        }
      }
    }
    Track clean = t;
    for (auto& [f, s] : clean.frames)
      for (Keypoint& k : s.keypoints) k.c = std::max(k.c, kReliableConfidence);
    const auto noop = interp::interpolate_track(clean, interp::Scope::kWholeBody);
    if (noop.track != clean || !noop.report.empty()) o.fail("track " + std::to_string(trial) + " clean input altered");
  }
  if (!(worst < 1e-9)) o.fail("max reconstruction error " + fmt(worst) + " px");
  return o;
}

// ---- 6: patient selection ----

Outcome patient_selection() {
  Rng rng(6);
  Outcome o;
  int decoys = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const bool with_decoy = trial % 2 == 1;
    const testing::PatientScene scene = testing::random_patient_scene(rng, with_decoy);
    const auto sel = patient::identify_patient(scene.tracks, scene.geom);
    if (sel.patient != scene.patient) {
      o.fail("trial " + std::to_string(trial) + ": picked " + (sel.patient ? std::to_string(*sel.patient) : "none") +
             ", expected " + std::to_string(scene.patient));
    }
    if (scene.decoy) {
      ++decoys;
      if (sel.patient == scene.decoy) o.fail("trial " + std::to_string(trial) + ": 70% decoy selected");
    }
  }
  if (decoys != 250) o.fail("expected 250 decoy scenes, got " + std::to_string(decoys));
  return o;
}

// ---- 7: blur invariants on the bundled fixture ----

std::unique_ptr<pipeline::Project> fixture_project(const TempDir& out, const std::string& name) {
  pipeline::CreateOptions o;
  o.name = name;
  o.input_dir = testing::bundled_fixture_dir();
  o.output_dir = out.path();
  return pipeline::Project::create(o);
}

// Side the boxes should have: spine/3 in the frame, else the nearest earlier
// spine of the track, else the first later one, else a quarter of the height.
double expected_side(const std::map<FrameIndex, std::optional<double>>& spines, FrameIndex f, int height) {
  auto at = spines.find(f);
  if (at != spines.end() && at->second) return *at->second / 3.0;
  for (auto it = std::make_reverse_iterator(at); it != spines.rend(); ++it)
    if (it->second) return *it->second / 3.0;
  for (auto it = std::next(at); it != spines.end(); ++it)
    if (it->second) return *it->second / 3.0;
  return 0.25 * height;
}

Outcome blur_invariants() {
  Outcome o;
  TempDir out("accept-blur");
  auto p = fixture_project(out, "blur");
  pipeline::run_pipeline(*p);
  for (const pipeline::VideoEntry& v : p->config().videos) {
    const fs::path dir = p->video_dir(v.stem);
    const ingest::FrameStore raw = ingest::load_frames(v.frame_dir);
    const ingest::FrameStore rendered = ingest::load_frames(dir / pipeline::layout::kRendered);
    const VideoGeometry geom = raw.geometry();
    const auto poses = ingest::load_pose_files(dir / pipeline::layout::kInterpolatedPoses, geom.frame_count).frames;
    const auto boxes = blur::read_face_boxes(dir / pipeline::layout::kFaceBoxes);
    if (boxes.empty()) o.fail(v.stem + ": no face boxes");

    // side = spine / 3, recomputed from the keypoints.
    std::map<TrackId, std::map<FrameIndex, std::optional<double>>> spines;
    for (const FramePose& fp : poses)
      for (const PersonEntry& e : fp.people) spines[*e.track_id][fp.frame_index] = blur::spine_length(e.skeleton);
    for (const blur::FaceBox& b : boxes) {
      const double want = expected_side(spines.at(b.track_id), b.frame, geom.height);
      if (b.side != want) {
        o.fail(v.stem + " frame " + std::to_string(b.frame) + " track " + std::to_string(b.track_id) + ": side " +
               fmt(b.side) + " vs " + fmt(want));
      }
      const auto own = spines.at(b.track_id).at(b.frame);
      if (own && b.side != *own / 3.0) o.fail(v.stem + ": side differs from the frame's spine / 3");
    }

    const blur::EffectiveBoxes effective = blur::target_regions(boxes, pipeline::blur_spec(*p, v.stem));
    if (pipeline::blur_spec(*p, v.stem).style != blur::Style::kSolid) o.fail("fixture project is not solid");
    for (FrameIndex f = 0; f < geom.frame_count; ++f) {
      const cv::Mat before = raw.read(f), after = rendered.read(f);
      cv::Mat inside(before.rows, before.cols, CV_8U, cv::Scalar(0));
      auto it = effective.find(f);
      if (it != effective.end()) {
        for (const blur::Region& r : it->second) {
          const blur::PixelRect px = blur::pixel_bounds(r, geom.width, geom.height);
          if (px.empty()) continue;
          const cv::Rect rect(px.x0, px.y0, px.x1 - px.x0, px.y1 - px.y0);
          inside(rect).setTo(255);
          if (cv::countNonZero(after(rect).reshape(1)) != 0) {
            o.fail(v.stem + " frame " + std::to_string(f) + ": non-black pixel inside " + r.id);
          }
        }
      }
      cv::Mat diff;
      cv::absdiff(before, after, diff);
      diff.setTo(0, inside);
      if (const int n = cv::countNonZero(diff.reshape(1)); n != 0) {
        o.fail(v.stem + " frame " + std::to_string(f) + ": " + std::to_string(n) + " values changed outside the boxes");
      }
    }
  }
  return o;
}

// ---- 8: round trips ----

bool same_numbers(const std::vector<FramePose>& a, const std::vector<FramePose>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t f = 0; f < a.size(); ++f) {
    if (a[f].frame_index != b[f].frame_index || a[f].people.size() != b[f].people.size()) return false;
    for (std::size_t i = 0; i < a[f].people.size(); ++i) {
      if (a[f].people[i].track_id != b[f].people[i].track_id) return false;
      for (int k = 0; k < body25::kCount; ++k) {
        const Keypoint &x = a[f].people[i].skeleton[k], &y = b[f].people[i].skeleton[k];
        if (x.x != y.x || x.y != y.y || x.c != y.c) return false;
      }
    }
  }
  return true;
}

Outcome round_trips() {
  Outcome o;
  Rng rng(8);
  TempDir tmp("accept-roundtrip");

  // Pose files, with generated scenes so the values are not round numbers.
  for (int trial = 0; trial < 20; ++trial) {
    const testing::Scene scene = testing::random_walker_scene(rng);
    const auto tracked = tracking::assign_ids(scene.frames, scene.geom).frames;
    const fs::path dir = tmp / ("poses" + std::to_string(trial));
    ingest::write_pose_files(tracked, dir, "scene");
    const auto back = ingest::load_pose_files(dir, scene.geom.frame_count);
    if (back.frames != tracked) o.fail("pose files: scene " + std::to_string(trial) + " differs after reload");
  }

  // load(create(x)) == x.
  auto p = fixture_project(tmp, "study");
  if (pipeline::Project::load(p->config_path())->config() != p->config()) o.fail("config differs after reload");
  pipeline::run_pipeline(*p);
  if (pipeline::Project::load(p->config_path())->config() != p->config()) o.fail("config differs after a run");

  // CSV and structured keypoint exports hold the same numbers.
  pipeline::ExportRequest csv;
  csv.dest = tmp / "csv";
  csv.keypoints = true;
  pipeline::export_project(*p, csv);
  pipeline::ExportRequest js = csv;
  js.dest = tmp / "json";
  js.format = pipeline::KeypointFormat::kJson;
  pipeline::export_project(*p, js);
  for (const pipeline::VideoEntry& v : p->config().videos) {
    for (const std::string variant : {"raw", "interpolated"}) {
      const auto from_csv =
          pipeline::read_keypoints_csv(tmp / "csv" / v.stem / (v.stem + "_keypoints_" + variant + ".csv"));
      const auto from_json = ingest::load_pose_files(tmp / "json" / v.stem / ("keypoints_" + variant)).frames;
      if (!same_numbers(from_csv, from_json)) o.fail(v.stem + " " + variant + ": CSV and JSON disagree");
      if (from_csv.empty()) o.fail(v.stem + " " + variant + ": empty export");
    }
  }
  return o;
}

// ---- 9: resumability ----

Outcome resumability() {
  Outcome o;
  TempDir ref_dir("accept-ref");
  auto ref = fixture_project(ref_dir, "study");
  pipeline::run_pipeline(*ref);

  for (pipeline::Step stop : pipeline::all_steps()) {
    TempDir out("accept-resume");
    const fs::path config = fixture_project(out, "study")->config_path();
    {
      auto p = pipeline::Project::load(config);
      pipeline::run_pipeline(*p, {std::nullopt, stop});
    }
    auto p = pipeline::Project::load(config);
    pipeline::run_pipeline(*p);
    for (const pipeline::VideoEntry& v : p->config().videos) {
      if (testing::snapshot(p->video_dir(v.stem) / pipeline::layout::kRendered) !=
          testing::snapshot(ref->video_dir(v.stem) / pipeline::layout::kRendered)) {
        o.fail(v.stem + ": rendering differs after stopping at " + pipeline::to_string(stop));
      }
    }
  }

  // Stepping through one step per process, reloading the project each time.
  TempDir out("accept-stepwise");
  const fs::path config = fixture_project(out, "study")->config_path();
  for (pipeline::Step s : pipeline::all_steps()) pipeline::run_pipeline(*pipeline::Project::load(config), {std::nullopt, s});
  auto p = pipeline::Project::load(config);
  for (const pipeline::VideoEntry& v : p->config().videos) {
    if (testing::snapshot(p->video_dir(v.stem) / pipeline::layout::kRendered) !=
        testing::snapshot(ref->video_dir(v.stem) / pipeline::layout::kRendered)) {
      o.fail(v.stem + ": step-by-step rendering differs");
    }
  }
  return o;
}

struct Criterion {
  int number;
  const char* name;
  double budget_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

// With a criterion number as the argument, runs only that criterion.
int main(int argc, char** argv) {
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  const Criterion criteria[] = {
      {1, "F1 recomputed from published precision/recall", 1, table_f1},
      {2, "IoU equals rasterized count on 1000 pairs", 10, iou_oracle},
      {3, "11-point AP equals sweep oracle on 200 sets", 30, ap_oracle},
      {4, "tracking: no swaps, injective ids on 1000 scenes", 60, tracking_scenes},
      {5, "interpolation exact, idempotent, no-op on 500 tracks", 10, interpolation},
      {6, "patient selection on 500 scenes with 70% decoys", 10, patient_selection},
      {7, "blur invariants on the bundled fixture", 30, blur_invariants},
      {8, "pose, config and keypoint export round trips", 0, round_trips},
      {9, "interrupted and resumed runs render identically", 0, resumability},
  };
  int failed = 0, ran = 0;
  for (const Criterion& c : criteria) {
    if (only != 0 && c.number != only) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs >= c.budget_s) o.fail("took " + fmt(secs) + " s, budget " + fmt(c.budget_s) + " s");
    failed += !o.ok();
    std::printf("%s criterion %d: %s (%.3f s)%s%s\n", o.ok() ? "PASS" : "FAIL", c.number, c.name, secs,
                o.ok() ? "" : ": ", o.detail.str().c_str());
    std::fflush(stdout);
  }
  if (ran == 0) {
    std::fprintf(stderr, "no criterion %d\n", only);
    return 2;
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
