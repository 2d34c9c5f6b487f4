#include "securepose/blur.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>

#include "securepose/error.hpp"
#include "securepose/overrides.hpp"
#include "util.hpp"

namespace securepose::blur {

const char* to_string(Style s) { return s == Style::kSolid ? "solid" : "gaussian"; }
const char* to_string(Targets t) { return t == Targets::kPatientOnly ? "patient" : "all"; }

Style parse_style(const std::string& s) {
  if (s == "solid") return Style::kSolid;
  if (s == "gaussian") return Style::kGaussian;
  throw Error(ErrorCode::kValidation, "unknown blur style '" + s + "' (solid|gaussian)");
}

Targets parse_targets(const std::string& s) {
  if (s == "patient") return Targets::kPatientOnly;
  if (s == "all") return Targets::kAllPersons;
  throw Error(ErrorCode::kValidation, "unknown blur targets '" + s + "' (patient|all)");
}

const char* to_string(SideOrigin o) {
  switch (o) {
    case SideOrigin::kSpine: return "spine";
    case SideOrigin::kTrackFallback: return "track";
    case SideOrigin::kFrameFallback: return "frame";
  }
  return "?";
}

void BlurSpec::validate() const {
  if (targets == Targets::kPatientOnly && !patient) {
    throw Error(ErrorCode::kValidation, "patient-only blurring needs a patient track");
  }
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SideOrigin parse_origin(const std::string& s) {
  if (s == "spine") return SideOrigin::kSpine;
  if (s == "track") return SideOrigin::kTrackFallback;
  if (s == "frame") return SideOrigin::kFrameFallback;
  throw Error(ErrorCode::kSchema, "unknown face-box origin '" + s + "'");
}

// Symmetric reflection (abc|cba) folded as often as needed.
int reflect(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

void gaussian_region(cv::Mat& image, const PixelRect& px, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  if (radius <= 0 || !(sigma > 0.0)) return;
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (double& w : kernel) w /= total;

  const int w = px.x1 - px.x0;
  const int h = px.y1 - px.y0;
  const int ch = image.channels();
  std::vector<double> src(static_cast<std::size_t>(w * h * ch));
  std::vector<double> tmp(src.size());
  auto at = [&](int x, int y, int c) { return static_cast<std::size_t>((y * w + x) * ch + c); };
  for (int y = 0; y < h; ++y) {
    const auto* row = image.ptr<unsigned char>(px.y0 + y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) src[at(x, y, c)] = row[(px.x0 + x) * ch + c];
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[static_cast<std::size_t>(k + radius)] * src[at(reflect(x + k, w), y, c)];
        }
        tmp[at(x, y, c)] = acc;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    auto* row = image.ptr<unsigned char>(px.y0 + y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[at(x, reflect(y + k, h), c)];
        }
        row[(px.x0 + x) * ch + c] = static_cast<unsigned char>(std::clamp(std::lround(acc), 0L, 255L));
      }
    }
  }
}

}  // namespace

std::optional<Point> face_center(const Skeleton& s, double conf_threshold) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (int k : body25::kFace) {
    if (s[k].c >= conf_threshold) {
      xs.push_back(s[k].x);
      ys.push_back(s[k].y);
    }
  }
  if (xs.empty()) return std::nullopt;
  return Point{median(xs), median(ys)};
}

std::optional<double> spine_length(const Skeleton& s, double conf_threshold) {
  const Keypoint& neck = s[body25::kNeck];
  const Keypoint& hip = s[body25::kMidHip];
  if (neck.c < conf_threshold || hip.c < conf_threshold) return std::nullopt;
  return distance(neck.point(), hip.point());
}

std::optional<FaceGeometry> face_box(const Skeleton& s, double conf_threshold) {
  auto center = face_center(s, conf_threshold);
  auto spine = spine_length(s, conf_threshold);
  if (!center || !spine) return std::nullopt;
  return FaceGeometry{*center, *spine / 3.0};
}

FaceBoxes compute_face_boxes(const std::vector<FramePose>& frames, const VideoGeometry& geom,
                             double conf_threshold) {
  std::vector<Track> tracks = group_tracks(frames, static_cast<FrameIndex>(frames.size()));
  FaceBoxes out;
  for (const Track& t : tracks) {
    struct Row {
      FrameIndex frame;
      std::optional<Point> center;
      std::optional<double> side;
    };
    std::vector<Row> rows;
    for (const auto& [f, s] : t.frames) {
      auto spine = spine_length(s, conf_threshold);
      rows.push_back({f, face_center(s, conf_threshold),
                      spine ? std::optional<double>(*spine / 3.0) : std::nullopt});
    }
    std::optional<double> first_side;
    for (const Row& r : rows) {
      if (r.side) {
        first_side = r.side;
        break;
      }
    }
    std::optional<double> recent;
    for (const Row& r : rows) {
      if (r.side) recent = r.side;
      if (!r.center) {
        out.unlocated.emplace_back(r.frame, t.track_id);
        continue;
      }
      FaceBox box{r.frame, t.track_id, *r.center, 0.0, SideOrigin::kSpine};
      if (r.side) {
        box.side = *r.side;
      } else if (recent || first_side) {
        box.side = recent ? *recent : *first_side;
        box.origin = SideOrigin::kTrackFallback;
      } else {
        box.side = 0.25 * geom.height;
        box.origin = SideOrigin::kFrameFallback;
      }
      out.boxes.push_back(box);
    }
  }
  std::sort(out.boxes.begin(), out.boxes.end(), [](const FaceBox& a, const FaceBox& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.track_id < b.track_id;
  });
  std::sort(out.unlocated.begin(), out.unlocated.end());
  return out;
}

std::string track_box_id(TrackId id) { return "t" + std::to_string(id); }

Region to_region(const FaceBox& box, Style style) {
  return {track_box_id(box.track_id), box.center.x - box.side / 2.0, box.center.y - box.side / 2.0,
          box.side, box.side, style};
}

EffectiveBoxes target_regions(const std::vector<FaceBox>& boxes, const BlurSpec& spec) {
  spec.validate();
  EffectiveBoxes out;
  for (const FaceBox& b : boxes) {
    if (spec.targets == Targets::kPatientOnly && b.track_id != *spec.patient) continue;
    out[b.frame].push_back(to_region(b, spec.style));
  }
  return out;
}

PixelRect pixel_bounds(const Region& r, int width, int height) {
  PixelRect px;
  px.x0 = std::max(0, static_cast<int>(std::floor(r.x)));
  px.y0 = std::max(0, static_cast<int>(std::floor(r.y)));
  px.x1 = std::min(width, static_cast<int>(std::ceil(r.x + r.w)));
  px.y1 = std::min(height, static_cast<int>(std::ceil(r.y + r.h)));
  return px;
}

int render_frame(cv::Mat& image, const std::vector<Region>& regions) {
  int skipped = 0;
  for (const Region& r : regions) {
    if (!(r.w > 0.0 && r.h > 0.0)) {
      ++skipped;
      continue;
    }
    const PixelRect px = pixel_bounds(r, image.cols, image.rows);
    if (px.empty()) continue;
    if (r.style == Style::kSolid) {
      image(cv::Rect(px.x0, px.y0, px.x1 - px.x0, px.y1 - px.y0)).setTo(cv::Scalar::all(0));
    } else {
      gaussian_region(image, px, std::min(r.w, r.h) / 6.0);
    }
  }
  return skipped;
}

RenderReport render_video(const ingest::FrameStore& frames, const EffectiveBoxes& regions,
                          const fs::path& out_dir) {
  const FrameIndex n = frames.geometry().frame_count;
  for (const auto& [f, list] : regions) {
    if (!frames.contains(f)) {
      throw Error(ErrorCode::kNotFound, "face box references frame " + std::to_string(f) +
                                            " but the video has " + std::to_string(n) + " frames");
    }
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw Error(ErrorCode::kIo, "cannot create " + out_dir.string());
  static const std::regex kFrame(R"(^frame_\d{6,}\.png$)");
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    if (std::regex_match(entry.path().filename().string(), kFrame)) fs::remove(entry.path(), ec);
  }

  std::vector<int> skipped(static_cast<std::size_t>(n), 0);
  static const std::vector<Region> kNone;
  detail::parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const auto f = static_cast<FrameIndex>(i);
    cv::Mat image = frames.read(f);
    auto it = regions.find(f);
    skipped[i] = render_frame(image, it == regions.end() ? kNone : it->second);
    ingest::write_png(out_dir / ingest::frame_file_name(f), image);
  });

  RenderReport report;
  report.frames_written = n;
  for (const auto& [f, list] : regions) report.regions_applied += list.size();
  for (std::size_t i = 0; i < skipped.size(); ++i) {
    if (skipped[i] > 0) {
      report.regions_applied -= static_cast<std::size_t>(skipped[i]);
      report.warnings.push_back("frame " + std::to_string(i) + ": skipped " +
                                std::to_string(skipped[i]) + " degenerate box(es)");
    }
  }
  return report;
}

RenderReport render(const ingest::FrameStore& frames, const std::vector<FaceBox>& boxes,
                    const BlurSpec& spec, const review::OverrideSet& overrides,
                    const fs::path& out_dir) {
  review::validate(overrides, frames.geometry().frame_count);
  return render_video(frames, review::apply_overrides(target_regions(boxes, spec), overrides), out_dir);
}

void write_face_boxes(const fs::path& file, const std::vector<FaceBox>& boxes) {
  std::string text = "frame,track_id,cx,cy,side,origin\n";
  for (const FaceBox& b : boxes) {
    text += std::to_string(b.frame) + "," + std::to_string(b.track_id) + "," +
            detail::format_double(b.center.x) + "," + detail::format_double(b.center.y) + "," +
            detail::format_double(b.side) + "," + to_string(b.origin) + "\n";
  }
  detail::write_file_atomic(file, text);
}

std::vector<FaceBox> read_face_boxes(const fs::path& file) {
  std::vector<FaceBox> boxes;
  const std::string where = file.string();
  for (const auto& row : detail::read_csv(file, {"frame", "track_id", "cx", "cy", "side", "origin"})) {
    FaceBox b;
    b.frame = static_cast<FrameIndex>(detail::parse_number(row[0], where));
    b.track_id = static_cast<TrackId>(detail::parse_number(row[1], where));
    b.center = {detail::parse_number(row[2], where), detail::parse_number(row[3], where)};
    b.side = detail::parse_number(row[4], where);
    b.origin = parse_origin(row[5]);
    boxes.push_back(b);
  }
  return boxes;
}

}  // namespace securepose::blur
