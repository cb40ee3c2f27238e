#pragma once

// Dataset CSV + truth sidecar, parameter JSON and trace CSV. Numbers are written in shortest
// round-trip form, independent of locale.

#include "dqaem/model.hpp"
#include "dqaem/trace.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace dqaem::io {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string format_double(double value);

/// Header y_1..y_d, plus `label` (1-based) when truth is present.
void write_dataset_csv(const Dataset& data, std::ostream& out);
Dataset read_dataset_csv(std::istream& in);

nlohmann::json params_to_json(const MfaParams& params);
/// Rejects unknown keys and validates the result.
MfaParams params_from_json(const nlohmann::json& j);

/// {"seed", "n", "truth"}; truth omitted when absent.
nlohmann::json dataset_sidecar(const Dataset& data);

/// Columns: iteration, objective, beta, gamma, beads, wall_ms.
void write_trace_csv(const FitTrace& trace, std::ostream& out, bool include_wall_time = true);

void save_dataset(const Dataset& data, const std::filesystem::path& csv, const std::filesystem::path& sidecar);
/// Reads the CSV; attaches truth parameters when a sidecar path is given and holds them.
Dataset load_dataset(const std::filesystem::path& csv, const std::filesystem::path& sidecar = {});

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace dqaem::io
