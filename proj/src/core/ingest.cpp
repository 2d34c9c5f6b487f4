#include "securepose/ingest.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include <json.hpp>

#include "securepose/error.hpp"
#include "util.hpp"

namespace securepose::ingest {

using nlohmann::json;

namespace {

constexpr std::size_t kFlatLength = body25::kCount * 3;

struct PoseFile {
  FrameIndex index;
  std::string stem;
  fs::path path;
};

std::vector<PoseFile> list_pose_files(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw Error(ErrorCode::kInput, "pose directory does not exist: " + dir.string());
  }
  static const std::regex kPattern(R"(^(.*)_(\d{12})_keypoints\.json$)");
  std::vector<PoseFile> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    std::smatch m;
    if (!std::regex_match(name, m, kPattern)) continue;
    files.push_back({std::stoll(m[2].str()), m[1].str(), entry.path()});
  }
  if (files.empty()) {
    throw Error(ErrorCode::kInput, "no keypoint files in " + dir.string());
  }
  std::sort(files.begin(), files.end(), [](const PoseFile& a, const PoseFile& b) {
    return a.index != b.index ? a.index < b.index : a.path < b.path;
  });
  for (std::size_t i = 1; i < files.size(); ++i) {
    if (files[i].index == files[i - 1].index) {
      throw Error(ErrorCode::kInput, "duplicate frame index " + std::to_string(files[i].index) +
                                         ": " + files[i - 1].path.filename().string() + " and " +
                                         files[i].path.filename().string());
    }
  }
  return files;
}

}  // namespace

std::string pose_file_name(const std::string& stem, FrameIndex frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%012lld_keypoints.json", static_cast<long long>(frame));
  return stem + buf;
}

std::string frame_file_name(FrameIndex frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06lld.png", static_cast<long long>(frame));
  return buf;
}

FramePose parse_pose_document(const std::string& text, FrameIndex frame_index,
                              const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse,
                origin + ": parse error at offset " + std::to_string(e.byte) + ": " + e.what());
  }
  auto schema_error = [&](const std::string& what) {
    return Error(ErrorCode::kSchema, origin + ": " + what);
  };
  if (!doc.is_object() || !doc.contains("people") || !doc["people"].is_array()) {
    throw schema_error("expected an object with a \"people\" array");
  }
  FramePose frame;
  frame.frame_index = frame_index;
  std::size_t person_no = 0;
  for (const json& person : doc["people"]) {
    const std::string where = "person " + std::to_string(person_no++);
    if (!person.is_object() || !person.contains("pose_keypoints_2d")) {
      throw schema_error(where + " has no pose_keypoints_2d");
    }
    const json& flat = person["pose_keypoints_2d"];
    if (!flat.is_array() || flat.size() != kFlatLength) {
      throw schema_error(where + " pose_keypoints_2d has " +
                         std::to_string(flat.is_array() ? flat.size() : 0) +
                         " values, expected 75");
    }
    PersonEntry entry;
    for (std::size_t i = 0; i < kFlatLength; ++i) {
      if (!flat[i].is_number()) throw schema_error(where + " keypoint value is not a number");
    }
    for (int k = 0; k < body25::kCount; ++k) {
      auto base = static_cast<std::size_t>(k) * 3;
      entry.skeleton[k] = {flat[base].get<double>(), flat[base + 1].get<double>(),
                           flat[base + 2].get<double>(), false};
    }
    if (person.contains("track_id")) {
      const json& id = person["track_id"];
      if (!id.is_number_integer() || id.get<long long>() < 0) {
        throw schema_error(where + " track_id must be a non-negative integer");
      }
      entry.track_id = id.get<TrackId>();
    }
    if (person.contains("interpolated")) {
      const json& marks = person["interpolated"];
      if (!marks.is_array()) throw schema_error(where + " interpolated must be an array");
      for (const json& m : marks) {
        if (!m.is_number_integer() || m.get<int>() < 0 || m.get<int>() >= body25::kCount) {
          throw schema_error(where + " interpolated index out of range");
        }
        entry.skeleton[m.get<int>()].interpolated = true;
      }
    }
    frame.people.push_back(entry);
  }
  return frame;
}

std::string serialize_pose_document(const FramePose& frame) {
  json people = json::array();
  for (const PersonEntry& p : frame.people) {
    json flat = json::array();
    json marks = json::array();
    for (int k = 0; k < body25::kCount; ++k) {
      const Keypoint& kp = p.skeleton[k];
      flat.push_back(kp.x);
      flat.push_back(kp.y);
      flat.push_back(kp.c);
      if (kp.interpolated) marks.push_back(k);
    }
    json person = {{"person_id", json::array({-1})}, {"pose_keypoints_2d", flat}};
    if (p.track_id) person["track_id"] = *p.track_id;
    if (!marks.empty()) person["interpolated"] = marks;
    people.push_back(person);
  }
  json doc = {{"version", 1.3}, {"people", people}};
  return doc.dump() + "\n";
}

PoseSequence load_pose_files(const fs::path& dir, std::optional<FrameIndex> expected_frames) {
  std::vector<PoseFile> files = list_pose_files(dir);
  PoseSequence seq;
  seq.stem = files.front().stem;
  seq.frames.resize(files.size());
  detail::parallel_for(files.size(), [&](std::size_t i) {
    seq.frames[i] = parse_pose_document(detail::read_file(files[i].path), files[i].index,
                                        files[i].path.string());
  });

  FrameIndex max_index = files.back().index;
  if (expected_frames) {
    if (max_index >= *expected_frames) {
      throw Error(ErrorCode::kGeometry, "keypoint file for frame " + std::to_string(max_index) +
                                            " exceeds the video's " +
                                            std::to_string(*expected_frames) + " frames");
    }
    seq.frame_count = *expected_frames;
  } else {
    seq.frame_count = max_index + 1;
  }
  std::size_t next = 0;
  for (FrameIndex f = 0; f < seq.frame_count; ++f) {
    if (next < files.size() && files[next].index == f) {
      ++next;
    } else {
      seq.gaps.push_back(f);
    }
  }
  return seq;
}

void write_pose_files(const std::vector<FramePose>& frames, const fs::path& dir,
                      const std::string& stem) {
  std::set<FrameIndex> seen;
  for (const FramePose& f : frames) {
    if (!seen.insert(f.frame_index).second) {
      throw Error(ErrorCode::kContract, "frame index " + std::to_string(f.frame_index) +
                                            " appears more than once");
    }
    for (const PersonEntry& p : f.people) {
      if (!p.track_id) {
        throw Error(ErrorCode::kContract, "frame " + std::to_string(f.frame_index) +
                                              " has a person without track_id");
      }
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "cannot create directory " + dir.string());
  }
  static const std::regex kPattern(R"(^.*_\d{12}_keypoints\.json$)");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && std::regex_match(entry.path().filename().string(), kPattern)) {
      fs::remove(entry.path(), ec);
    }
  }
  detail::parallel_for(frames.size(), [&](std::size_t i) {
    const FramePose& f = frames[i];
    fs::path path = dir / pose_file_name(stem, f.frame_index);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << serialize_pose_document(f);
    if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
  });
}

fs::path FrameStore::path_for(FrameIndex frame) const { return dir_ / frame_file_name(frame); }

cv::Mat FrameStore::read(FrameIndex frame) const {
  if (!contains(frame)) {
    throw Error(ErrorCode::kNotFound, "frame " + std::to_string(frame) + " is outside [0, " +
                                          std::to_string(geometry_.frame_count) + ")");
  }
  fs::path p = path_for(frame);
  cv::Mat img = cv::imread(p.string(), cv::IMREAD_COLOR);
  if (img.empty()) throw Error(ErrorCode::kIo, "cannot decode " + p.string());
  return img;
}

PngHeader read_png_header(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::array<unsigned char, 26> buf{};
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    throw Error(ErrorCode::kInput, file.string() + ": truncated PNG");
  }
  static constexpr std::array<unsigned char, 8> kSig = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (!std::equal(kSig.begin(), kSig.end(), buf.begin()) || buf[12] != 'I' || buf[13] != 'H' ||
      buf[14] != 'D' || buf[15] != 'R') {
    throw Error(ErrorCode::kInput, file.string() + ": not a PNG file");
  }
  auto be32 = [&](std::size_t off) {
    return static_cast<int>((static_cast<unsigned>(buf[off]) << 24) |
                            (static_cast<unsigned>(buf[off + 1]) << 16) |
                            (static_cast<unsigned>(buf[off + 2]) << 8) |
                            static_cast<unsigned>(buf[off + 3]));
  };
  return {be32(16), be32(20), buf[24], buf[25]};
}

FrameStore load_frames(const fs::path& dir, double fps) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw Error(ErrorCode::kInput, "frame directory does not exist: " + dir.string());
  }
  static const std::regex kPattern(R"(^frame_(\d{6,})\.png$)");
  std::vector<std::pair<FrameIndex, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, kPattern)) files.emplace_back(std::stoll(m[1].str()), entry.path());
  }
  if (files.empty()) throw Error(ErrorCode::kInput, "no frame images in " + dir.string());
  std::sort(files.begin(), files.end());
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (files[i].first != static_cast<FrameIndex>(i)) {
      throw Error(ErrorCode::kGap, "frame " + std::to_string(i) + " is missing from " + dir.string());
    }
  }
  std::vector<PngHeader> headers(files.size());
  detail::parallel_for(files.size(), [&](std::size_t i) { headers[i] = read_png_header(files[i].second); });

  const PngHeader& ref = headers.front();
  for (std::size_t i = 0; i < headers.size(); ++i) {
    const PngHeader& h = headers[i];
    if (h.width != ref.width || h.height != ref.height) {
      throw Error(ErrorCode::kGeometry, "frame " + std::to_string(i) + " is " +
                                            std::to_string(h.width) + "x" + std::to_string(h.height) +
                                            ", expected " + std::to_string(ref.width) + "x" +
                                            std::to_string(ref.height));
    }
    // 8-bit truecolor (2) or truecolor with alpha (6).
    if (h.bit_depth != 8 || (h.color_type != 2 && h.color_type != 6)) {
      throw Error(ErrorCode::kGeometry,
                  "frame " + std::to_string(i) + " is not an 8-bit RGB image");
    }
  }
  VideoGeometry geom{ref.width, ref.height, static_cast<FrameIndex>(files.size()), fps};
  geom.validate();
  return FrameStore(dir, geom);
}

std::vector<unsigned char> encode_png(const cv::Mat& image) {
  std::vector<unsigned char> bytes;
  if (!cv::imencode(".png", image, bytes, {cv::IMWRITE_PNG_COMPRESSION, 3})) {
    throw Error(ErrorCode::kIo, "PNG encoding failed");
  }
  return bytes;
}

void write_png(const fs::path& file, const cv::Mat& image) {
  std::vector<unsigned char> bytes = encode_png(image);
  detail::write_file_atomic(file, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::map<std::string, fs::path> link_sidecars(const std::vector<std::string>& stems,
                                              const fs::path& dir,
                                              const std::vector<fs::path>& exclude) {
  std::map<std::string, fs::path> linked;
  std::error_code ec;
  if (dir.empty() || !fs::is_directory(dir, ec)) return linked;
  std::set<std::string> wanted(stems.begin(), stems.end());
  std::set<fs::path> skip;
  for (const fs::path& p : exclude) skip.insert(fs::weakly_canonical(p, ec));
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (!p.has_extension()) continue;
    std::string stem = p.stem().string();
    if (!wanted.count(stem)) continue;
    if (skip.count(fs::weakly_canonical(p, ec))) continue;
    auto it = linked.find(stem);
    if (it == linked.end() || p < it->second) linked[stem] = p;
  }
  return linked;
}

}  // namespace securepose::ingest
