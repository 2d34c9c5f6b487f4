#pragma once

// JSON report documents shared by the pipeline steps and the standalone
// operations exposed through the C API.

#include <string>

#include <json.hpp>

#include "securepose/blur.hpp"
#include "securepose/evaluation.hpp"
#include "securepose/interpolation.hpp"
#include "securepose/patient.hpp"
#include "securepose/tracking.hpp"

namespace securepose::detail {

nlohmann::json tracking_report(const tracking::TrackingResult& r, double threshold_fraction,
                               const VideoGeometry& geom);
nlohmann::json interpolation_report(const interp::FramesRepair& r, interp::Scope scope, double conf_threshold);
nlohmann::json patient_report(const patient::Selection& sel, const std::string& source, double presence_threshold);
nlohmann::json face_box_report(const blur::FaceBoxes& boxes);
nlohmann::json eval_report(const eval::EvalReport& r, double iou_threshold);

}  // namespace securepose::detail
