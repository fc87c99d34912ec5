#pragma once
// Per-subcommand settings schemas. Settings are a flat JSON object; flags
// and config files are validated against the same field list.

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace spm {

// Schema violation; the message starts with the offending field path.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class FieldType { Real, Int, Text, Bool, RealList, IntList };

struct Field {
    std::string name;
    FieldType type = FieldType::Real;
    nlohmann::json default_value;  // null marks an optional field
    std::string help;
};

struct CommandSchema {
    std::string name;
    std::string model;  // "ls" or "lr"
    std::string mode;
    std::string help;
    bool stochastic = false;  // requires a seed
    std::vector<Field> fields;

    const Field* find(const std::string& key) const;
};

const std::vector<CommandSchema>& command_schemas();
const CommandSchema& command_schema(const std::string& name);
// Subcommand for a (model, mode) pair from a config file.
const CommandSchema& command_for(const std::string& model, const std::string& mode);

nlohmann::json default_settings(const CommandSchema& schema);

// Validates `overlay` and writes it over `settings`. Config files may also
// carry "model", "mode" (must match the command) and "spec_version" (1).
void apply_overlay(const CommandSchema& schema, nlohmann::json& settings, const nlohmann::json& overlay,
                   const std::string& origin = "$");

// Converts command-line tokens for one field.
nlohmann::json parse_flag(const Field& field, const std::vector<std::string>& tokens);

// Cross-field checks after all overlays, e.g. the seed of stochastic runs.
void check_settings(const CommandSchema& schema, const nlohmann::json& settings);

// Hash of the settings that determine the outputs (the output path excluded).
std::string settings_hash(const nlohmann::json& settings);

}  // namespace spm
