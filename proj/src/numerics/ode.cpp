#include "spm/numerics/ode.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spm {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

double scaled_rms(const State& v, const State& w, double atol, double rtol) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double s = atol + rtol * std::fabs(w[i]);
        acc += (v[i] / s) * (v[i] / s);
    }
    return std::sqrt(acc / static_cast<double>(std::max<std::size_t>(1, v.size())));
}

void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("ode: empty time grid");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] < grid[i - 1]) throw std::invalid_argument("ode: time grid must be nondecreasing");
}

bool all_finite(const State& y) {
    return std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

OdeResult rk_adaptive(const OdeRhs& f, const State& y0, const std::vector<double>& grid,
                      const OdeOptions& opts) {
    check_grid(grid);
    const std::size_t n = y0.size();
    OdeResult res;
    res.times.reserve(grid.size());
    res.states.reserve(grid.size());

    State y = y0, ynew(n), ytmp(n), err(n), scale_ref(n);
    State k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
    double t = grid.front();
    f(t, y, k1);

    double h = opts.h_initial;
    if (h <= 0.0) {
        const double d0 = scaled_rms(y, y, opts.atol, opts.rtol);
        const double d1 = scaled_rms(k1, y, opts.atol, opts.rtol);
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        const double span = grid.back() - grid.front();
        if (span > 0.0) h = std::min(h, span);
    }
    h = std::min(h, opts.h_max);
    double err_old = 1e-4;

    for (double target : grid) {
        while (t < target) {
            if (res.accepted + res.rejected >= opts.max_steps) {
                res.ok = false;
                res.failure_time = t;
                res.message = "step budget exhausted";
                return res;
            }
            const double h_min = opts.h_min > 0.0 ? opts.h_min : 1e-14 * std::max(1.0, std::fabs(t));
            const bool clipped = t + h >= target;
            const double hs = clipped ? target - t : h;
            auto stage = [&](State& out, std::initializer_list<std::pair<double, const State*>> terms) {
                for (std::size_t i = 0; i < n; ++i) {
                    double acc = y[i];
                    for (const auto& [coef, k] : terms) acc += hs * coef * (*k)[i];
                    out[i] = acc;
                }
            };
            stage(ytmp, {{a21, &k1}});
            f(t + c2 * hs, ytmp, k2);
            stage(ytmp, {{a31, &k1}, {a32, &k2}});
            f(t + c3 * hs, ytmp, k3);
            stage(ytmp, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
            f(t + c4 * hs, ytmp, k4);
            stage(ytmp, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
            f(t + c5 * hs, ytmp, k5);
            stage(ytmp, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
            f(t + hs, ytmp, k6);
            stage(ynew, {{a71, &k1}, {a73, &k3}, {a74, &k4}, {a75, &k5}, {a76, &k6}});
            f(t + hs, ynew, k7);
            for (std::size_t i = 0; i < n; ++i) {
                err[i] = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
                scale_ref[i] = std::max(std::fabs(y[i]), std::fabs(ynew[i]));
            }
            double en = scaled_rms(err, scale_ref, opts.atol, opts.rtol);
            if (!all_finite(ynew) || !std::isfinite(en)) en = 1e10;

            if (en <= 1.0) {
                t = clipped ? target : t + hs;
                y.swap(ynew);
                k1.swap(k7);
                ++res.accepted;
                const double fac = std::clamp(0.9 * std::pow(std::max(en, 1e-10), -0.17) *
                                                  std::pow(err_old, 0.04), 0.2, 10.0);
                err_old = std::max(en, 1e-4);
                const double proposal = hs * fac;
                h = clipped ? std::max(h, proposal) : proposal;
                h = std::min(h, opts.h_max);
                if (opts.guard) {
                    std::string msg = opts.guard(t, y);
                    if (!msg.empty()) {
                        res.ok = false;
                        res.failure_time = t;
                        res.message = std::move(msg);
                        return res;
                    }
                }
            } else {
                ++res.rejected;
                h = hs * std::max(0.2, 0.9 * std::pow(en, -0.2));
                if (h < h_min) {
                    res.ok = false;
                    res.failure_time = t;
                    res.message = "step size underflow";
                    return res;
                }
            }
        }
        res.times.push_back(target);
        res.states.push_back(y);
    }
    return res;
}

OdeResult trapezoid_implicit(const OdeRhs& f, const State& y0, const std::vector<double>& grid, double h) {
    check_grid(grid);
    if (!(h > 0.0)) throw std::invalid_argument("trapezoid_implicit: step must be positive");
    const std::size_t n = y0.size();
    OdeResult res;
    State y = y0, fy(n), ynew(n), fnew(n), fp(n), yp(n);
    double t = grid.front();
    Eigen::MatrixXd jac(n, n);
    Eigen::VectorXd g(n);
    for (double target : grid) {
        while (t < target) {
            const double hs = std::min(h, target - t);
            f(t, y, fy);
            for (std::size_t i = 0; i < n; ++i) ynew[i] = y[i] + hs * fy[i];
            bool converged = false;
            for (int it = 0; it < 20; ++it) {
                f(t + hs, ynew, fnew);
                for (std::size_t i = 0; i < n; ++i) g(i) = ynew[i] - y[i] - 0.5 * hs * (fy[i] + fnew[i]);
                for (std::size_t j = 0; j < n; ++j) {
                    yp = ynew;
                    const double dh = 1e-7 * std::max(1.0, std::fabs(ynew[j]));
                    yp[j] += dh;
                    f(t + hs, yp, fp);
                    for (std::size_t i = 0; i < n; ++i) jac(i, j) = -0.5 * hs * (fp[i] - fnew[i]) / dh;
                    jac(j, j) += 1.0;
                }
                const Eigen::VectorXd delta = jac.partialPivLu().solve(-g);
                double dn = 0.0, yn = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    ynew[i] += delta(i);
                    dn = std::max(dn, std::fabs(delta(i)));
                    yn = std::max(yn, std::fabs(ynew[i]));
                }
                if (dn <= 1e-13 * std::max(1.0, yn)) {
                    converged = true;
                    break;
                }
            }
            ++res.accepted;
            if (!converged || !all_finite(ynew)) {
                res.ok = false;
                res.failure_time = t;
                res.message = "Newton iteration failed in implicit trapezoid";
                return res;
            }
            y = ynew;
            t += hs;
        }
        res.times.push_back(target);
        res.states.push_back(y);
    }
    return res;
}

}  // namespace spm
