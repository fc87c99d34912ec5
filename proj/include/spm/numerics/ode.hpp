#pragma once
// Adaptive Dormand-Prince 5(4) integration with PI step control, and an
// implicit trapezoidal fallback for stiff stretches.

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace spm {

using State = std::vector<double>;
using OdeRhs = std::function<void(double t, const State& y, State& dydt)>;

struct OdeOptions {
    double rtol = 1e-8;
    double atol = 1e-12;
    double h_initial = 0.0;  // 0 selects automatically
    double h_max = std::numeric_limits<double>::infinity();
    double h_min = 0.0;      // 0 means 1e-14 * |t|
    long max_steps = 50'000'000;
    // Optional guard evaluated after each accepted step; returning a
    // non-empty message aborts the integration.
    std::function<std::string(double, const State&)> guard;
};

struct OdeResult {
    std::vector<double> times;
    std::vector<State> states;
    long accepted = 0;
    long rejected = 0;
    bool ok = true;
    double failure_time = 0.0;
    std::string message;
};

// Integrates y' = f(t, y) from grid.front() and records y at every grid
// point. The grid must be nondecreasing.
OdeResult rk_adaptive(const OdeRhs& f, const State& y0, const std::vector<double>& grid,
                      const OdeOptions& opts = {});

// Fixed-step implicit trapezoidal rule with Newton iterations on a
// finite-difference Jacobian. Used when the explicit pair stalls.
OdeResult trapezoid_implicit(const OdeRhs& f, const State& y0, const std::vector<double>& grid,
                             double h);

}  // namespace spm
