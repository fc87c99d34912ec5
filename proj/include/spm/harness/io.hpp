#pragma once
// CSV tables and JSON artifacts. Reals are written with 17 significant
// digits so every table re-parses bit-exactly; NaN is an empty cell.

#include "spm/trajectory.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace spm {

// A column holds either reals or text.
using Column = std::variant<std::vector<double>, std::vector<std::string>>;

struct Table {
    std::vector<std::string> names;
    std::vector<Column> columns;

    std::size_t rows() const;
    void add(const std::string& name, std::vector<double> values);
    void add(const std::string& name, std::vector<std::string> values);
    const std::vector<double>& real(const std::string& name) const;
    const std::vector<std::string>& text(const std::string& name) const;
    // Throws when column lengths disagree or names repeat.
    void validate() const;
};

// NaN-aware exact equality.
bool tables_equal(const Table& a, const Table& b);

std::string to_csv(const Table& t);
// Columns whose every non-empty cell parses as a real become real columns.
Table parse_csv(const std::string& text);

void write_csv(const std::filesystem::path& path, const Table& t);
Table read_csv(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

// Trajectory as (clock, time, columns...).
Table trajectory_table(const Trajectory& tr);

// Shortest round-tripping decimal form of a real; empty for NaN.
std::string format_real(double x);

// FNV-1a 64 of the canonical (sorted-key) JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

}  // namespace spm
