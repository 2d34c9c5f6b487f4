#include <doctest.h>

#include <httplib.h>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "securepose/error.hpp"
#include "securepose/ingest.hpp"
#include "securepose/pipeline.hpp"
#include "securepose/review_service.hpp"
#include "synth.hpp"

using namespace securepose;
using namespace securepose::pipeline;
using nlohmann::json;
using securepose::testing::TempDir;
namespace fixture = securepose::testing::fixture;

namespace {

struct Rendered {
  TempDir dir{"review"};
  std::unique_ptr<Project> project;

  Rendered() {
    CreateOptions o;
    o.name = "study";
    o.input_dir = securepose::testing::bundled_fixture_dir();
    o.output_dir = dir.path();
    o.stems = {fixture::kStem};
    project = Project::create(o);
    run_pipeline(*project);
  }
};

review::ServiceOptions any_port() {
  review::ServiceOptions o;
  o.port = 0;
  return o;
}

cv::Mat decode(const std::string& body) {
  std::vector<unsigned char> bytes(body.begin(), body.end());
  return cv::imdecode(bytes, cv::IMREAD_COLOR);
}

bool same_pixels(const cv::Mat& a, const cv::Mat& b) {
  return a.size() == b.size() && a.type() == b.type() && cv::norm(a, b, cv::NORM_INF) == 0;
}

std::string frame_path(int f, const char* view = "rendered") {
  return "/videos/walk01/frames/" + std::to_string(f) + "?view=" + view;
}

json manual_body(std::int64_t revision, FrameIndex a, FrameIndex b) {
  return {{"revision", revision},
          {"overrides", {{{"start", a}, {"end", b}, {"action", "manual_blur"}, {"rect", {{"x", 60}, {"y", 60}, {"w", 30}, {"h", 20}}}, {"style", "solid"}, {"note", ""}}}}};
}

}  // namespace

TEST_SUITE("review") {

TEST_CASE("refuses to start before anything is rendered") {
  TempDir dir("review-empty");
  CreateOptions o;
  o.name = "study";
  o.input_dir = securepose::testing::bundled_fixture_dir();
  o.output_dir = dir.path();
  auto p = Project::create(o);
  try {
    review::ReviewService svc(*p, any_port());
    FAIL("expected not ready");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNotReady);
  }
}

TEST_CASE("read endpoints") {
  Rendered r;
  review::ReviewService svc(*r.project, any_port());
  svc.start();
  REQUIRE(svc.port() > 0);
  httplib::Client cli("127.0.0.1", svc.port());

  auto res = cli.Get("/videos");
  REQUIRE(res);
  CHECK(res->status == 200);
  const json list = json::parse(res->body);
  REQUIRE(list.size() == 1);
  CHECK(list[0]["stem"] == "walk01");
  CHECK(list[0]["frame_count"] == 60);
  CHECK(list[0]["quality_check"] == "pending");

  // The on-demand rendering equals the pipeline's output.
  const ingest::FrameStore rendered = ingest::load_frames(r.project->video_dir("walk01") / layout::kRendered);
  const ingest::FrameStore raw = ingest::load_frames(r.project->config().video("walk01").frame_dir);
  for (int f : {0, 30, 59}) {
    res = cli.Get(frame_path(f));
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "image/png");
    CHECK(same_pixels(decode(res->body), rendered.read(f)));
    res = cli.Get(frame_path(f, "raw"));
    CHECK(same_pixels(decode(res->body), raw.read(f)));
  }

  res = cli.Get("/videos/walk01/boxes?frame=20");
  REQUIRE(res);
  const json boxes = json::parse(res->body);
  CHECK(boxes["computed"].size() == 3);
  CHECK(boxes["effective"].size() == 3);
  for (const json& b : boxes["computed"]) CHECK(b["active"] == true);

  CHECK(cli.Get("/videos/nope/frames/0")->status == 404);
  CHECK(cli.Get(frame_path(60))->status == 404);
  CHECK(cli.Get("/videos/walk01/frames/x")->status == 400);
  CHECK(cli.Get("/videos/walk01/frames/0?view=thermal")->status == 400);
  CHECK(cli.Get("/videos/walk01/boxes")->status == 400);
  svc.stop();
}

TEST_CASE("override loop") {
  Rendered r;
  const fs::path config = r.project->config_path();
  std::map<int, cv::Mat> before;
  {
    review::ReviewService svc(*r.project, any_port());
    svc.start();
    httplib::Client cli("127.0.0.1", svc.port());
    for (int f = 10; f <= 20; ++f) before[f] = decode(cli.Get(frame_path(f))->body);

    // Manual blur over frames 10-20.
    auto res = cli.Put("/videos/walk01/overrides", manual_body(0, 10, 20).dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    CHECK(json::parse(res->body)["revision"] == 1);
    const cv::Mat blurred = decode(cli.Get(frame_path(15))->body);
    CHECK(cv::countNonZero(blurred(cv::Rect(60, 60, 30, 20)).reshape(1)) == 0);
    CHECK_FALSE(same_pixels(blurred, before[15]));
    CHECK(cli.Get(frame_path(15))->get_header_value("X-Revision") == "1");

    // A stale revision is rejected and changes nothing.
    res = cli.Put("/videos/walk01/overrides", manual_body(0, 0, 5).dump(), "application/json");
    CHECK(res->status == 409);
    const json current = json::parse(cli.Get("/videos/walk01/overrides")->body);
    CHECK(current["revision"] == 1);
    REQUIRE(current["overrides"].size() == 1);
    CHECK(current["overrides"][0]["id"] == 1);
    CHECK(current["overrides"][0]["stem"] == "walk01");

    // Unblur the manual box: frames return to the pre-edit rendering.
    json next = current;
    next["overrides"].push_back({{"start", 10}, {"end", 20}, {"action", "unblur"}, {"target", "m1"}, {"note", "undo"}});
    res = cli.Put("/videos/walk01/overrides", next.dump(), "application/json");
    REQUIRE(res->status == 200);
    CHECK(json::parse(res->body)["revision"] == 2);
    for (int f = 10; f <= 20; ++f) CHECK(same_pixels(decode(cli.Get(frame_path(f))->body), before[f]));

    // Invalid edits are refused with a reason.
    json bad = json::parse(cli.Get("/videos/walk01/overrides")->body);
    bad["overrides"].push_back({{"start", 0}, {"end", 99}, {"action", "unblur"}, {"target", "t0"}});
    CHECK(cli.Put("/videos/walk01/overrides", bad.dump(), "application/json")->status == 400);
    bad["overrides"].back()["end"] = 3;
    bad["overrides"].back()["target"] = "t9";
    CHECK(cli.Put("/videos/walk01/overrides", bad.dump(), "application/json")->status == 400);
    CHECK(cli.Put("/videos/walk01/overrides", "{", "application/json")->status == 400);
    svc.stop();
  }

  // Restart: the revision and the effective state survive.
  auto reloaded = Project::load(config);
  review::ReviewService svc(*reloaded, any_port());
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());
  const json current = json::parse(cli.Get("/videos/walk01/overrides")->body);
  CHECK(current["revision"] == 2);
  CHECK(current["overrides"].size() == 2);
  for (int f = 10; f <= 20; ++f) CHECK(same_pixels(decode(cli.Get(frame_path(f))->body), before[f]));

  // Undo by deleting overrides.
  auto res = cli.Delete("/videos/walk01/overrides/2");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["revision"] == 3);
  CHECK_FALSE(same_pixels(decode(cli.Get(frame_path(12))->body), before[12]));
  CHECK(cli.Delete("/videos/walk01/overrides/2")->status == 404);
  svc.stop();
}

TEST_CASE("unblurring a computed box shows the raw pixels in its region") {
  Rendered r;
  review::ReviewService svc(*r.project, any_port());
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());
  const json body = {{"revision", 0},
                     {"overrides", {{{"start", 5}, {"end", 9}, {"action", "unblur"}, {"target", "t1"}}}}};
  REQUIRE(cli.Put("/videos/walk01/overrides", body.dump(), "application/json")->status == 200);

  const json boxes = json::parse(cli.Get("/videos/walk01/boxes?frame=7")->body);
  const ingest::FrameStore raw = ingest::load_frames(r.project->config().video("walk01").frame_dir);
  const cv::Mat shown = decode(cli.Get(frame_path(7))->body);
  const cv::Mat original = raw.read(7);
  for (const json& b : boxes["computed"]) {
    const blur::Region region{b["id"], b["cx"].get<double>() - b["side"].get<double>() / 2,
                              b["cy"].get<double>() - b["side"].get<double>() / 2, b["side"], b["side"],
                              blur::Style::kSolid};
    const blur::PixelRect px = blur::pixel_bounds(region, shown.cols, shown.rows);
    const cv::Rect rect(px.x0, px.y0, px.x1 - px.x0, px.y1 - px.y0);
    if (b["id"] == "t1") {
      CHECK(b["active"] == false);
      CHECK(same_pixels(shown(rect), original(rect)));
    } else {
      CHECK(b["active"] == true);
    }
  }
  CHECK(json::parse(cli.Get("/videos/walk01/boxes?frame=10")->body)["computed"][1]["active"] == true);
  svc.stop();
}

TEST_CASE("sign-off and its reset") {
  Rendered r;
  review::ReviewService svc(*r.project, any_port());
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());

  ExportRequest req;
  req.dest = r.dir / "export";
  req.blurred_video = true;
  CHECK_THROWS_AS(export_project(*r.project, req), Error);

  auto res = cli.Post("/videos/walk01/signoff", "", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(r.project->ledger("walk01").quality_check == QualityCheck::kComplete);
  CHECK(Project::load(r.project->config_path())->ledger("walk01").quality_check == QualityCheck::kComplete);
  CHECK(json::parse(cli.Get("/videos")->body)[0]["quality_check"] == "complete");
  CHECK_NOTHROW(export_project(*r.project, req));

  // A later edit needs a fresh review.
  REQUIRE(cli.Put("/videos/walk01/overrides", manual_body(0, 1, 2).dump(), "application/json")->status == 200);
  CHECK(r.project->ledger("walk01").quality_check == QualityCheck::kPending);
  CHECK(cli.Post("/videos/nope/signoff", "", "application/json")->status == 404);
  svc.stop();
}

TEST_CASE("busy port") {
  Rendered r;
  review::ReviewService first(*r.project, any_port());
  first.start();
  review::ServiceOptions o;
  o.port = first.port();
  review::ReviewService second(*r.project, o);
  try {
    second.start();
    FAIL("expected a startup error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kStartup);
  }
  first.stop();
}

TEST_CASE("static assets") {
  Rendered r;
  fs::create_directories(r.dir / "www");
  std::ofstream(r.dir / "www" / "index.html") << "<html>review</html>";
  review::ServiceOptions o = any_port();
  o.static_dir = r.dir / "www";
  review::ReviewService svc(*r.project, o);
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());
  auto res = cli.Get("/index.html");
  REQUIRE(res);
  CHECK(res->body == "<html>review</html>");
  CHECK(cli.Get("/videos")->status == 200);
  svc.stop();
}

}  // TEST_SUITE
