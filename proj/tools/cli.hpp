#pragma once

#include <json.hpp>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace dqaem::cli {

enum ExitCode : int {
    kOk = 0,
    kConfigError = 2,
    kNumericalFailure = 3,
    kVerificationFailure = 4,
    kMaxIterations = 5,
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Applies `a.b.c=value`; the value is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& config, const std::string& assignment);

int cmd_generate(const nlohmann::json& config, std::ostream& out);
int cmd_fit(const nlohmann::json& config, std::ostream& out);
int cmd_experiment(const nlohmann::json& config, std::ostream& out);
int cmd_verify(const nlohmann::json& config, std::ostream& out);

/// Full command line, argv[0] included. Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dqaem::cli
