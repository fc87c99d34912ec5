#pragma once
// Time series of moment states with clock metadata.

#include <json.hpp>

#include <string>
#include <vector>

namespace spm {

enum class Clock { ActiveUpdate, Minibatch, Slow };

std::string to_string(Clock c);
Clock clock_from_string(const std::string& s);

struct Trajectory {
    Clock clock = Clock::ActiveUpdate;
    double clock_power = 0.0;  // tau = t / d^clock_power when clock == Slow
    std::vector<std::string> columns;
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    nlohmann::json metadata = nlohmann::json::object();

    std::size_t size() const { return times.size(); }
    std::size_t column_index(const std::string& name) const;
    std::vector<double> column(const std::string& name) const;
    // Throws if times are not strictly increasing or row widths disagree.
    void validate() const;
};

// Grid helpers.
std::vector<double> linspace(double a, double b, std::size_t n);
std::vector<double> logspace(double a, double b, std::size_t n);

}  // namespace spm
