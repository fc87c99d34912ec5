#pragma once
// Scalar root finding.

#include <functional>
#include <stdexcept>
#include <string>

namespace spm {

// Raised when an iterative numerical method fails to meet its tolerance.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RootResult {
    double root = 0.0;
    double residual = 0.0;
    int iterations = 0;
};

// Newton's method; throws NumericalError after max_iter without |f| < tol.
RootResult newton_1d(const std::function<double(double)>& f, const std::function<double(double)>& df,
                     double x0, double tol = 1e-12, int max_iter = 100);

// Bisection on a sign-changing bracket [a, b]; stops when the bracket width
// falls below xtol * max(1, |x|) or |f| < ftol.
RootResult bisect_1d(const std::function<double(double)>& f, double a, double b, double xtol = 1e-15,
                     double ftol = 0.0, int max_iter = 400);

}  // namespace spm
