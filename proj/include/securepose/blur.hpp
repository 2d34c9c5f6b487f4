#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "securepose/ingest.hpp"
#include "securepose/model.hpp"

namespace securepose::review {
struct OverrideSet;
}

namespace securepose::blur {

namespace fs = std::filesystem;

enum class Style { kSolid, kGaussian };
enum class Targets { kPatientOnly, kAllPersons };

const char* to_string(Style s);
const char* to_string(Targets t);
Style parse_style(const std::string& s);      // "solid" | "gaussian"
Targets parse_targets(const std::string& s);  // "patient" | "all"

struct BlurSpec {
  Targets targets = Targets::kAllPersons;
  std::optional<TrackId> patient;  // required for kPatientOnly
  Style style = Style::kSolid;

  void validate() const;
};

/// Median of the usable (c >= threshold) facial keypoints, per axis.
std::optional<Point> face_center(const Skeleton& s, double conf_threshold = kReliableConfidence);
/// Neck-to-mid-hip distance; absent when either endpoint is unusable.
std::optional<double> spine_length(const Skeleton& s, double conf_threshold = kReliableConfidence);

struct FaceGeometry {
  Point center;
  double side = 0.0;
};

/// Square face region: median facial center, side = spine / 3.
std::optional<FaceGeometry> face_box(const Skeleton& s, double conf_threshold = kReliableConfidence);

enum class SideOrigin {
  kSpine,          // spine / 3 in this frame
  kTrackFallback,  // borrowed from the nearest frame of the same track that had a spine
  kFrameFallback,  // 0.25 x frame height, no spine anywhere in the track
};
const char* to_string(SideOrigin o);

struct FaceBox {
  FrameIndex frame = 0;
  TrackId track_id = 0;
  Point center;
  double side = 0.0;
  SideOrigin origin = SideOrigin::kSpine;

  friend bool operator==(const FaceBox&, const FaceBox&) = default;
};

struct FaceBoxes {
  std::vector<FaceBox> boxes;  // ordered by (frame, track_id)
  // (frame, track) pairs where no facial keypoint was usable, so no box exists.
  std::vector<std::pair<FrameIndex, TrackId>> unlocated;
};

/// Face boxes for every tracked person. When a frame lacks a usable spine, the
/// side comes from the most recent earlier spine measurement of the same track,
/// else the next later one, else 0.25 x frame height.
FaceBoxes compute_face_boxes(const std::vector<FramePose>& frames, const VideoGeometry& geom,
                             double conf_threshold = kReliableConfidence);

/// An axis-aligned rectangle to obfuscate in one frame. Computed face boxes are
/// identified as "t<track_id>", reviewer rectangles as "m<override id>".
struct Region {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  Style style = Style::kSolid;

  friend bool operator==(const Region&, const Region&) = default;
};

using EffectiveBoxes = std::map<FrameIndex, std::vector<Region>>;

std::string track_box_id(TrackId id);
Region to_region(const FaceBox& box, Style style);

/// Computed boxes selected by BlurSpec::targets, converted to regions.
EffectiveBoxes target_regions(const std::vector<FaceBox>& boxes, const BlurSpec& spec);

struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0, x1) x [y0, y1)
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

/// Bounds rounded outward (floor / ceil) and clipped to the image.
PixelRect pixel_bounds(const Region& r, int width, int height);

/// Obfuscates the regions in place, in the given order. Returns the number of
/// degenerate regions (non-positive size) that were skipped.
int render_frame(cv::Mat& image, const std::vector<Region>& regions);

struct RenderReport {
  FrameIndex frames_written = 0;
  std::size_t regions_applied = 0;
  std::vector<std::string> warnings;
};

/// Renders every frame of the store into out_dir/frame_%06d.png.
/// Throws kNotFound when a region references a frame the store lacks.
RenderReport render_video(const ingest::FrameStore& frames, const EffectiveBoxes& regions,
                          const fs::path& out_dir);

/// Full render: spec targets, then overrides, then pixels.
RenderReport render(const ingest::FrameStore& frames, const std::vector<FaceBox>& boxes,
                    const BlurSpec& spec, const review::OverrideSet& overrides,
                    const fs::path& out_dir);

// Face-box sidecar: CSV with header frame,track_id,cx,cy,side,origin.
void write_face_boxes(const fs::path& file, const std::vector<FaceBox>& boxes);
std::vector<FaceBox> read_face_boxes(const fs::path& file);

}  // namespace securepose::blur
