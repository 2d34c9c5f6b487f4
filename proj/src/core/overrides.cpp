#include "securepose/overrides.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "securepose/error.hpp"
#include "util.hpp"

namespace securepose::review {

using nlohmann::json;

namespace {

std::pair<int, std::int64_t> box_order(const std::string& id) {
  int kind = !id.empty() && id[0] == 't' ? 0 : 1;
  std::int64_t n = 0;
  try {
    n = std::stoll(id.substr(1));
  } catch (...) {
    kind = 2;
  }
  return {kind, n};
}

}  // namespace

void validate(const OverrideSet& set, FrameIndex frame_count) {
  std::set<std::int64_t> ids;
  for (const Override& o : set.overrides) {
    const std::string where = "override " + std::to_string(o.id);
    if (o.id <= 0) throw Error(ErrorCode::kValidation, where + ": id must be positive");
    if (!ids.insert(o.id).second) throw Error(ErrorCode::kValidation, where + ": duplicate id");
    if (o.start > o.end || o.start < 0 || o.end >= frame_count) {
      throw Error(ErrorCode::kValidation, where + ": frame range [" + std::to_string(o.start) +
                                              ", " + std::to_string(o.end) +
                                              "] is outside the video");
    }
    if (o.action == OverrideAction::kManualBlur && !(o.w > 0.0 && o.h > 0.0)) {
      throw Error(ErrorCode::kValidation, where + ": manual rectangle needs positive size");
    }
    if (o.action == OverrideAction::kUnblur && o.target.empty()) {
      throw Error(ErrorCode::kValidation, where + ": unblur needs a target box id");
    }
  }
}

blur::EffectiveBoxes apply_overrides(const blur::EffectiveBoxes& boxes, const OverrideSet& set) {
  std::set<std::string> known;
  for (const auto& [frame, regions] : boxes) {
    for (const blur::Region& r : regions) known.insert(r.id);
  }
  for (const Override& o : set.overrides) {
    if (o.action == OverrideAction::kManualBlur) known.insert(o.box_id());
  }
  for (const Override& o : set.overrides) {
    if (o.action == OverrideAction::kUnblur && !known.count(o.target)) {
      throw Error(ErrorCode::kValidation,
                  "override " + std::to_string(o.id) + ": unknown box id '" + o.target + "'");
    }
  }

  blur::EffectiveBoxes out = boxes;
  for (const Override& o : set.overrides) {
    for (FrameIndex f = o.start; f <= o.end; ++f) {
      auto& regions = out[f];
      if (o.action == OverrideAction::kUnblur) {
        std::erase_if(regions, [&](const blur::Region& r) { return r.id == o.target; });
      } else {
        const std::string id = o.box_id();
        std::erase_if(regions, [&](const blur::Region& r) { return r.id == id; });
        regions.push_back({id, o.x, o.y, o.w, o.h, o.style});
      }
    }
  }
  for (auto it = out.begin(); it != out.end();) {
    auto& regions = it->second;
    std::stable_sort(regions.begin(), regions.end(), [](const blur::Region& a, const blur::Region& b) {
      return box_order(a.id) < box_order(b.id);
    });
    it = regions.empty() ? out.erase(it) : std::next(it);
  }
  return out;
}

std::string to_json(const OverrideSet& set) {
  json list = json::array();
  for (const Override& o : set.overrides) {
    json j = {{"id", o.id},     {"stem", o.stem}, {"start", o.start},
              {"end", o.end},   {"note", o.note}};
    if (o.action == OverrideAction::kUnblur) {
      j["action"] = "unblur";
      j["target"] = o.target;
    } else {
      j["action"] = "manual_blur";
      j["rect"] = {{"x", o.x}, {"y", o.y}, {"w", o.w}, {"h", o.h}};
      j["style"] = blur::to_string(o.style);
    }
    list.push_back(j);
  }
  return json{{"revision", set.revision}, {"overrides", list}}.dump(2) + "\n";
}

OverrideSet parse_override_set(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("override set: ") + e.what());
  }
  try {
    OverrideSet set;
    set.revision = doc.value("revision", std::int64_t{0});
    for (const json& j : doc.at("overrides")) {
      Override o;
      o.id = j.value("id", std::int64_t{0});
      o.stem = j.value("stem", std::string{});
      o.start = j.at("start").get<FrameIndex>();
      o.end = j.at("end").get<FrameIndex>();
      o.note = j.value("note", std::string{});
      const std::string action = j.at("action").get<std::string>();
      if (action == "unblur") {
        o.action = OverrideAction::kUnblur;
        o.target = j.at("target").get<std::string>();
      } else if (action == "manual_blur") {
        o.action = OverrideAction::kManualBlur;
        const json& r = j.at("rect");
        o.x = r.at("x").get<double>();
        o.y = r.at("y").get<double>();
        o.w = r.at("w").get<double>();
        o.h = r.at("h").get<double>();
        o.style = blur::parse_style(j.value("style", std::string{"solid"}));
      } else {
        throw Error(ErrorCode::kSchema, "unknown override action '" + action + "'");
      }
      set.overrides.push_back(std::move(o));
    }
    return set;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("override set: ") + e.what());
  }
}

OverrideSet load_override_file(const std::filesystem::path& file) {
  std::error_code ec;
  if (!std::filesystem::exists(file, ec)) return {};
  return parse_override_set(detail::read_file(file));
}

void save_override_file(const std::filesystem::path& file, const OverrideSet& set) {
  detail::write_file_atomic(file, to_json(set));
}

}  // namespace securepose::review
