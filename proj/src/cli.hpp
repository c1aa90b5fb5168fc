#pragma once
// Subcommand dispatch for the viscobeam executable.

#include <json.hpp>

#include <cstdint>
#include <ostream>
#include <string>

namespace viscobeam::cli {

/// Exit codes of the executable.
enum Exit : int { ok = 0, config_error = 2, numerical_error = 3, usage_error = 64 };

/// FNV-1a 64 of the canonical (sorted-key) JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Parses argv, runs one subcommand and maps errors to exit codes.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace viscobeam::cli
