#pragma once
// Runs one subcommand from validated settings and writes its artifacts and
// manifest.json into the output directory.

#include "spm/harness/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace spm {

inline constexpr int kSpecVersion = 1;
inline constexpr const char* kToolName = "spm";
inline constexpr const char* kToolVersion = "0.1.0";

// Returns the manifest (also written to <out>/manifest.json). Numerical and
// argument errors propagate; sweeps report failing cells in their tables.
nlohmann::json run_experiment(const CommandSchema& schema, const nlohmann::json& settings);

}  // namespace spm
