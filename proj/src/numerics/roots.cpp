#include "spm/numerics/roots.hpp"

#include <cmath>

namespace spm {

RootResult newton_1d(const std::function<double(double)>& f, const std::function<double(double)>& df,
                     double x0, double tol, int max_iter) {
    double x = x0;
    for (int it = 0; it <= max_iter; ++it) {
        const double fx = f(x);
        if (!std::isfinite(fx)) throw NumericalError("newton_1d: non-finite residual");
        if (std::fabs(fx) < tol) return {x, fx, it};
        const double d = df(x);
        if (d == 0.0 || !std::isfinite(d)) throw NumericalError("newton_1d: zero or non-finite derivative");
        x -= fx / d;
    }
    throw NumericalError("newton_1d: no convergence after " + std::to_string(max_iter) + " iterations");
}

RootResult bisect_1d(const std::function<double(double)>& f, double a, double b, double xtol, double ftol,
                     int max_iter) {
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return {a, 0.0, 0};
    if (fb == 0.0) return {b, 0.0, 0};
    if ((fa > 0.0) == (fb > 0.0)) throw NumericalError("bisect_1d: bracket does not change sign");
    int it = 0;
    double m = 0.5 * (a + b), fm = f(m);
    for (; it < max_iter; ++it) {
        m = 0.5 * (a + b);
        fm = f(m);
        if (std::fabs(fm) <= ftol || std::fabs(b - a) <= xtol * std::max(1.0, std::fabs(m))) break;
        if ((fm > 0.0) == (fa > 0.0)) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    return {m, fm, it};
}

}  // namespace spm
