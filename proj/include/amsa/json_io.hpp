#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "amsa/diagnostics.hpp"
#include "amsa/kernel.hpp"
#include "amsa/mfg.hpp"
#include "amsa/nested_linear.hpp"
#include "amsa/operator_system.hpp"
#include "amsa/schedule.hpp"

namespace amsa {

// Kernel document: {"m", "family", "P" | ("P_a","P_b","epsilon",
// "clamp_weights","clamp_bias")}, matrices as row-major nested arrays.
nlohmann::json kernel_to_json(const FiniteKernel& kernel);
FiniteKernel kernel_from_json(const nlohmann::json& doc);

// System document: {"n_levels","dims","sample_space_size","kind",
// "payload","metadata"}; kinds "nested_linear" and "mfg".
nlohmann::json system_to_json(const OperatorSystem& system);
std::shared_ptr<const OperatorSystem> system_from_json(const nlohmann::json& doc);

nlohmann::json schedule_to_json(const StepSchedule& schedule);
StepSchedule schedule_from_json(const nlohmann::json& doc);

nlohmann::json assumption_report_to_json(const AssumptionEstimates& estimates);
nlohmann::json condition_report_to_json(const ConditionReport& report);

// FNV-1a over the canonical dump; stable across runs and platforms.
std::string config_hash_hex(const nlohmann::json& doc);

nlohmann::json load_json_file(const std::string& path);
void save_json_file(const nlohmann::json& doc, const std::string& path);

}  // namespace amsa
