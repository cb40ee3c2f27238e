#pragma once

#include "dqaem/harness.hpp"
#include "dqaem/verify.hpp"

#include <json.hpp>

#include <string>

namespace dqaem::report {

nlohmann::json comparison_json(const harness::TrialConfig& cfg, const harness::ComparisonResult& result);
std::string contingency_text(const harness::ContingencyTable& table);
std::string comparison_markdown(const harness::TrialConfig& cfg, const harness::ComparisonResult& result);

nlohmann::json monotonicity_json(const harness::MonotonicityConfig& cfg, const harness::MonotonicityResult& result);
/// Long format: components, restart, iteration, negative_free_energy, delta.
std::string monotonicity_csv(const harness::MonotonicityResult& result);
std::string monotonicity_markdown(const harness::MonotonicityConfig& cfg, const harness::MonotonicityResult& result);

nlohmann::json verify_json(const verify::VerifyReport& report);

}  // namespace dqaem::report
