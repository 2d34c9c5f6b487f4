#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "securepose/model.hpp"

namespace securepose::ingest {

namespace fs = std::filesystem;

/// Result of reading one directory of per-frame keypoint files.
struct PoseSequence {
  std::string stem;  // shared file-name prefix, e.g. "walk01" for walk01_000000000000_keypoints.json
  std::vector<FramePose> frames;  // ordered by frame_index
  FrameIndex frame_count = 0;     // expected count, or max index + 1 when unknown
  std::vector<FrameIndex> gaps;   // indices in [0, frame_count) with no file
};

/// Reads every <stem>_%012d_keypoints.json file in `dir`.
///
/// Gaps in the numbering never fail the load; they are listed in `gaps` and it is
/// the caller's policy whether to accept them. When `expected_frames` is given, gaps
/// are computed against it and a file beyond it is a geometry error.
///
/// Errors: kInput (missing or empty directory, duplicate indices), kParse (malformed
/// JSON, message names the file and byte offset), kSchema (layout or keypoint
/// array length other than 75).
PoseSequence load_pose_files(const fs::path& dir,
                             std::optional<FrameIndex> expected_frames = std::nullopt);

/// Decodes one keypoint document. `origin` is used in error messages only.
FramePose parse_pose_document(const std::string& text, FrameIndex frame_index,
                              const std::string& origin);
std::string serialize_pose_document(const FramePose& frame);

/// Writes one file per frame, replacing any keypoint files already in `dir`.
/// Output is byte-stable: sorted keys and shortest round-trip number formatting.
/// Every person must carry a track_id (kContract otherwise, nothing is written).
void write_pose_files(const std::vector<FramePose>& frames, const fs::path& dir,
                      const std::string& stem);

std::string pose_file_name(const std::string& stem, FrameIndex frame);
std::string frame_file_name(FrameIndex frame);

/// A directory of frame_%06d.png images with uniform geometry.
class FrameStore {
 public:
  FrameStore() = default;
  FrameStore(fs::path dir, VideoGeometry geometry) : dir_(std::move(dir)), geometry_(geometry) {}

  const fs::path& directory() const { return dir_; }
  const VideoGeometry& geometry() const { return geometry_; }
  fs::path path_for(FrameIndex frame) const;
  bool contains(FrameIndex frame) const { return frame >= 0 && frame < geometry_.frame_count; }

  /// 8-bit, 3-channel image. Throws kNotFound for an index outside the store.
  cv::Mat read(FrameIndex frame) const;

 private:
  fs::path dir_;
  VideoGeometry geometry_;
};

/// Validates a numbered PNG sequence. kInput for an empty or missing directory,
/// kGap naming the first missing index, kGeometry naming the first frame whose
/// dimensions or pixel format differ.
FrameStore load_frames(const fs::path& dir, double fps = 30.0);

struct PngHeader {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
};
/// Reads the IHDR chunk without decoding pixels.
PngHeader read_png_header(const fs::path& file);

/// Deterministic PNG write of an 8-bit image.
void write_png(const fs::path& file, const cv::Mat& image);
std::vector<unsigned char> encode_png(const cv::Mat& image);

/// Files in `dir` whose stem equals a video stem but carry a different
/// extension. Files listed in `exclude` (the videos themselves) are skipped; when
/// several files match, the lexicographically first path wins.
std::map<std::string, fs::path> link_sidecars(const std::vector<std::string>& stems,
                                              const fs::path& dir,
                                              const std::vector<fs::path>& exclude = {});

}  // namespace securepose::ingest
