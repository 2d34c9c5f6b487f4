#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "securepose/blur.hpp"

namespace securepose::review {

enum class OverrideAction { kUnblur, kManualBlur };

/// One reviewer edit over an inclusive frame range.
struct Override {
  std::int64_t id = 0;
  std::string stem;
  FrameIndex start = 0;
  FrameIndex end = 0;
  OverrideAction action = OverrideAction::kUnblur;
  std::string target;  // kUnblur: box id ("t3", "m7")
  // kManualBlur rectangle, top-left plus size, in image pixels.
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
  blur::Style style = blur::Style::kSolid;
  std::string note;

  std::string box_id() const { return "m" + std::to_string(id); }

  friend bool operator==(const Override&, const Override&) = default;
};

/// Ordered edits; application order is list order, so later entries win.
struct OverrideSet {
  std::vector<Override> overrides;
  std::int64_t revision = 0;

  friend bool operator==(const OverrideSet&, const OverrideSet&) = default;
};

/// Structural checks: unique positive ids, start <= end inside [0, frame_count),
/// positive manual rectangles. Throws kValidation.
void validate(const OverrideSet& set, FrameIndex frame_count);

/// Applies the edits to the computed per-frame regions. Unblur drops the target
/// box on its frames, ManualBlur adds a rectangle. Each frame's result is sorted
/// canonically (track boxes by ID, then manual boxes by override ID) so that
/// non-conflicting edits commute. Unblur of an ID that is neither a computed box
/// nor a manual box of this set throws kValidation.
blur::EffectiveBoxes apply_overrides(const blur::EffectiveBoxes& boxes, const OverrideSet& set);

std::string to_json(const OverrideSet& set);
/// Throws kParse / kSchema on malformed text.
OverrideSet parse_override_set(const std::string& text);

/// Missing file reads as an empty set at revision 0.
OverrideSet load_override_file(const std::filesystem::path& file);
void save_override_file(const std::filesystem::path& file, const OverrideSet& set);

}  // namespace securepose::review
