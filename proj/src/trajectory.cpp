#include "spm/trajectory.hpp"

#include <cmath>
#include <stdexcept>

namespace spm {

std::string to_string(Clock c) {
    switch (c) {
        case Clock::ActiveUpdate: return "active_update";
        case Clock::Minibatch: return "minibatch";
        case Clock::Slow: return "slow";
    }
    return "?";
}

Clock clock_from_string(const std::string& s) {
    if (s == "active_update" || s == "t") return Clock::ActiveUpdate;
    if (s == "minibatch" || s == "k") return Clock::Minibatch;
    if (s == "slow" || s == "tau") return Clock::Slow;
    throw std::invalid_argument("unknown clock: " + s);
}

std::size_t Trajectory::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw std::invalid_argument("trajectory has no column '" + name + "'");
}

std::vector<double> Trajectory::column(const std::string& name) const {
    const std::size_t j = column_index(name);
    std::vector<double> out;
    out.reserve(states.size());
    for (const auto& row : states) out.push_back(row.at(j));
    return out;
}

void Trajectory::validate() const {
    if (times.size() != states.size()) throw std::logic_error("trajectory: times/states length mismatch");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1])) throw std::logic_error("trajectory: times not strictly increasing");
    for (const auto& row : states)
        if (row.size() != columns.size()) throw std::logic_error("trajectory: row width mismatch");
}

std::vector<double> linspace(double a, double b, std::size_t n) {
    if (n == 0) return {};
    if (n == 1) return {a};
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    out.back() = b;
    return out;
}

std::vector<double> logspace(double a, double b, std::size_t n) {
    if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("logspace: endpoints must be positive");
    auto e = linspace(std::log(a), std::log(b), n);
    for (auto& v : e) v = std::exp(v);
    if (n > 0) {
        e.front() = a;
        e.back() = b;
    }
    return e;
}

}  // namespace spm
