// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>
#include "myq/calibration.hpp"
#include "myq/experiment.hpp"
#include "myq/metrics.hpp"
#include "myq/model.hpp"
#include "myq/sensitivity.hpp"

namespace myq {

/// Run report. Every section except `environment` is covered by the hash;
/// floats in hashed sections are shortest round-trip decimal strings.
struct Report {
  nlohmann::json model = nlohmann::json::object();
  nlohmann::json sensitivity = nlohmann::json::object();
  nlohmann::json plan = nlohmann::json::object();
  nlohmann::json calibration = nlohmann::json::object();
  nlohmann::json eval = nlohmann::json::object();
  nlohmann::json environment = nlohmann::json::object();

  bool operator==(const Report&) const = default;
};

std::string emit_report(const Report& r);
Report parse_report(std::string_view text);
/// FNV-1a of the canonical dump of the hashed sections, as 16 hex digits.
std::string report_hash(const Report& r);

void save_report(const Report& r, const std::filesystem::path& path);
Report load_report(const std::filesystem::path& path);
/// Loads `path` when it exists, else returns an empty report.
Report load_or_empty_report(const std::filesystem::path& path);

nlohmann::json model_section(const ModelGraph& model);

nlohmann::json stats_to_json(std::span<const sens::LayerStats> stats);
std::vector<sens::LayerStats> stats_from_json(const nlohmann::json& j);
nlohmann::json rank_to_json(const sens::SensitivityRank& r);
sens::SensitivityRank rank_from_json(const nlohmann::json& j);
nlohmann::json plan_to_json(const sens::BitPlan& p);
sens::BitPlan plan_from_json(const nlohmann::json& j);

/// Calibration result without timing (timing belongs in environment).
nlohmann::json calib_to_json(const calib::CalibResult& c, const calib::CalibConfig& cfg);
calib::CalibResult calib_from_json(const nlohmann::json& j);

nlohmann::json eval_to_json(const EvalResult& e);
EvalResult eval_from_json(const nlohmann::json& j);

/// Thread count, compiler and build information.
nlohmann::json environment_section();

nlohmann::json sensitivity_section(std::span<const sens::LayerStats> stats, const sens::SensitivityRank& rank,
                                   const PipelineConfig& cfg);
nlohmann::json plan_section(const sens::BitPlan& plan, const PipelineConfig& cfg);

/// All hashed sections of a sense/calibrate/quantize/eval run.
Report pipeline_report(const ModelGraph& model, const PipelineResult& p, const PipelineConfig& cfg,
                       const EvalResult& eval);

}  // namespace myq
