#include <doctest.h>

#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "securepose/error.hpp"
#include "securepose/ingest.hpp"
#include "synth.hpp"

using namespace securepose;
using securepose::testing::Rng;
using securepose::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string flat_doc(const std::string& people) { return R"({"version":1.3,"people":[)" + people + "]}"; }

std::string zeros(int triples) {
  std::string s;
  for (int i = 0; i < triples; ++i) s += ",0,0,0";
  return s;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

std::vector<FramePose> random_tracked(Rng& rng, int frames) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<FramePose> out;
  for (FrameIndex f = 0; f < frames; ++f) {
    FramePose fp{f, {}};
    const int n = static_cast<int>(u(rng) * 4);
    for (int i = 0; i < n; ++i) {
      Skeleton s;
      for (Keypoint& k : s.keypoints) {
        if (u(rng) < 0.1) continue;
        // Arbitrary doubles, not just short decimals.
        k = {u(rng) * 1920.0, u(rng) * 1080.0, u(rng), u(rng) < 0.2};
      }
      fp.people.push_back({s, static_cast<TrackId>(i * 3 + 1)});
    }
    out.push_back(std::move(fp));
  }
  return out;
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("decodes a flat keypoint array") {
  FramePose fp = ingest::parse_pose_document(
      flat_doc(R"({"person_id":[-1],"pose_keypoints_2d":[5,6,0.9)" + zeros(24) + "]}"), 3, "mem");
  CHECK(fp.frame_index == 3);
  REQUIRE(fp.people.size() == 1);
  CHECK(fp.people[0].skeleton[0] == Keypoint{5, 6, 0.9, false});
  CHECK(fp.people[0].skeleton[1].undetected());
  CHECK_FALSE(fp.people[0].track_id);
}

TEST_CASE("empty people list") {
  FramePose fp = ingest::parse_pose_document(flat_doc(""), 0, "mem");
  CHECK(fp.people.empty());
}

TEST_CASE("schema and parse errors") {
  CHECK(code_of([] { ingest::parse_pose_document(flat_doc(R"({"pose_keypoints_2d":[1,2,3]})"), 0, "f"); }) ==
        ErrorCode::kSchema);
  CHECK(code_of([] { ingest::parse_pose_document(R"({"people":5})", 0, "f"); }) == ErrorCode::kSchema);
  try {
    ingest::parse_pose_document(R"({"people":[)", 0, "walk_000000000000_keypoints.json");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    const std::string msg = e.what();
    CHECK(msg.find("walk_000000000000_keypoints.json") != std::string::npos);
    CHECK(msg.find("offset") != std::string::npos);
  }
}

TEST_CASE("keeps people in file order and reads track ids") {
  std::string a = R"({"pose_keypoints_2d":[1,1,1)" + zeros(24) + R"(],"track_id":4})";
  std::string b = R"({"pose_keypoints_2d":[2,2,1)" + zeros(24) + R"(],"track_id":2,"interpolated":[0]})";
  FramePose fp = ingest::parse_pose_document(flat_doc(a + "," + b), 0, "mem");
  REQUIRE(fp.people.size() == 2);
  CHECK(fp.people[0].track_id == 4);
  CHECK(fp.people[1].track_id == 2);
  CHECK(fp.people[1].skeleton[0].interpolated);
  CHECK_FALSE(fp.people[0].skeleton[0].interpolated);
}

TEST_CASE("gaps are reported, not skipped") {
  TempDir dir("gaps");
  for (int f : {0, 1, 3}) write_text(dir.path() / ingest::pose_file_name("v", f), flat_doc(""));
  ingest::PoseSequence seq = ingest::load_pose_files(dir.path());
  CHECK(seq.stem == "v");
  CHECK(seq.frames.size() == 3);
  CHECK(seq.frame_count == 4);
  CHECK(seq.gaps == std::vector<FrameIndex>{2});

  ingest::PoseSequence longer = ingest::load_pose_files(dir.path(), 6);
  CHECK(longer.gaps == std::vector<FrameIndex>{2, 4, 5});
  CHECK(code_of([&] { ingest::load_pose_files(dir.path(), 3); }) == ErrorCode::kGeometry);
}

TEST_CASE("directory errors") {
  TempDir dir("empty");
  CHECK(code_of([&] { ingest::load_pose_files(dir.path()); }) == ErrorCode::kInput);
  CHECK(code_of([&] { ingest::load_pose_files(dir.path() / "missing"); }) == ErrorCode::kInput);
  write_text(dir.path() / ingest::pose_file_name("a", 0), flat_doc(""));
  write_text(dir.path() / ingest::pose_file_name("b", 0), flat_doc(""));
  CHECK(code_of([&] { ingest::load_pose_files(dir.path()); }) == ErrorCode::kInput);
}

TEST_CASE("write then load is the identity") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    TempDir dir("roundtrip");
    std::vector<FramePose> frames = random_tracked(rng, 12);
    ingest::write_pose_files(frames, dir.path(), "clip");
    ingest::PoseSequence seq = ingest::load_pose_files(dir.path());
    CHECK(seq.gaps.empty());
    CHECK(seq.frames == frames);
  }
}

TEST_CASE("writes are byte-stable and replace old files") {
  Rng rng(22);
  std::vector<FramePose> frames = random_tracked(rng, 8);
  TempDir a("stable-a"), b("stable-b");
  ingest::write_pose_files(frames, a.path(), "clip");
  write_text(b.path() / ingest::pose_file_name("old", 99), flat_doc(""));
  ingest::write_pose_files(frames, b.path(), "clip");
  CHECK(testing::snapshot(a.path()) == testing::snapshot(b.path()));
  ingest::write_pose_files(frames, a.path(), "clip");
  CHECK(testing::snapshot(a.path()) == testing::snapshot(b.path()));
}

TEST_CASE("writing requires track ids") {
  TempDir dir("contract");
  std::vector<FramePose> frames = {{0, {{Skeleton{}, 1}}}, {1, {{Skeleton{}, std::nullopt}}}};
  CHECK(code_of([&] { ingest::write_pose_files(frames, dir.path(), "x"); }) == ErrorCode::kContract);
  CHECK(fs::is_empty(dir.path()));
}

TEST_CASE("frame store validation") {
  TempDir dir("frames");
  cv::Mat img(36, 64, CV_8UC3, cv::Scalar(10, 20, 30));
  for (int f = 0; f < 10; ++f) ingest::write_png(dir.path() / ingest::frame_file_name(f), img);
  ingest::FrameStore store = ingest::load_frames(dir.path());
  CHECK(store.geometry() == VideoGeometry{64, 36, 10, 30.0});
  CHECK(store.read(9).at<cv::Vec3b>(0, 0) == cv::Vec3b(10, 20, 30));
  CHECK(code_of([&] { store.read(10); }) == ErrorCode::kNotFound);

  ingest::write_png(dir.path() / ingest::frame_file_name(5), cv::Mat(72, 128, CV_8UC3, cv::Scalar(0)));
  try {
    ingest::load_frames(dir.path());
    FAIL("expected a geometry error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kGeometry);
    CHECK(std::string(e.what()).find("frame 5") != std::string::npos);
  }
  ingest::write_png(dir.path() / ingest::frame_file_name(5), cv::Mat(36, 64, CV_8UC1, cv::Scalar(0)));
  CHECK(code_of([&] { ingest::load_frames(dir.path()); }) == ErrorCode::kGeometry);

  ingest::write_png(dir.path() / ingest::frame_file_name(5), img);
  fs::remove(dir.path() / ingest::frame_file_name(3));
  try {
    ingest::load_frames(dir.path());
    FAIL("expected a gap error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kGap);
    CHECK(std::string(e.what()).find("frame 3") != std::string::npos);
  }

  TempDir empty("frames-empty");
  CHECK(code_of([&] { ingest::load_frames(empty.path()); }) == ErrorCode::kInput);
}

TEST_CASE("sidecars are linked by stem") {
  TempDir dir("sidecar");
  write_text(dir.path() / "a.xlsx", "x");
  write_text(dir.path() / "a.csv", "x");
  write_text(dir.path() / "a.mp4", "x");
  write_text(dir.path() / "c.txt", "x");
  auto linked = ingest::link_sidecars({"a", "b"}, dir.path(), {dir.path() / "a.mp4"});
  REQUIRE(linked.size() == 1);
  CHECK(linked.at("a").filename() == "a.csv");
}

TEST_CASE("bundled fixture matches its generator") {
  TempDir dir("fixture");
  testing::fixture::write(dir.path());
  CHECK(testing::snapshot(dir.path()) == testing::snapshot(testing::bundled_fixture_dir()));
}

}
