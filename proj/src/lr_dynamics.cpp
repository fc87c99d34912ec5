#include "spm/lr_dynamics.hpp"

#include "spm/numerics/ode.hpp"
#include "spm/numerics/quadrature.hpp"
#include "spm/numerics/roots.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace spm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kSqrtPi = 1.7724538509055160273;

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Binary KL between Bernoulli(sigmoid(a)) and Bernoulli(sigmoid(c)).
double binary_kl(double a, double c) {
    const double delta = c - a;
    const double sa = sigmoid(a);
    if (std::fabs(delta) < 1.0) return -sa * delta + std::log1p(sa * std::expm1(delta));
    return -sa * delta + softplus(c) - softplus(a);
}

// Gaussian-sigmoid expectations for both classes under one rule.
struct Expectations {
    double sp1 = 0, s2_1 = 0, s2pp1 = 0;         // class 1: sigma', sigma^2, (sigma^2)''
    double sp2 = 0, om2 = 0, om2sq = 0, om2pp = 0; // class 2: sigma', 1-sigma, (1-sigma)^2, ((1-sigma)^2)''
};

Expectations expectations(double mu1, double mu2, double q, const QuadratureRule& rule) {
    Expectations e;
    const double scale = std::sqrt(2.0 * q);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double w = rule.weights[i] / kSqrtPi;
        {
            const double z = mu1 + scale * rule.nodes[i];
            const double sg = sigmoid(z), sm = sigmoid(-z);
            const double d1 = sg * sm, d2 = d1 * (sm - sg);
            e.sp1 += w * d1;
            e.s2_1 += w * sg * sg;
            e.s2pp1 += w * (2 * d1 * d1 + 2 * sg * d2);
        }
        {
            const double z = mu2 + scale * rule.nodes[i];
            const double sg = sigmoid(z), sm = sigmoid(-z);
            const double d1 = sg * sm, d2 = d1 * (sm - sg);
            e.sp2 += w * d1;
            e.om2 += w * sm;
            e.om2sq += w * sm * sm;
            e.om2pp += w * (2 * d1 * d1 - 2 * sm * d2);
        }
    }
    return e;
}

LrCoefficients assemble(const Expectations& e, const LrState& x, const LrParams& prm) {
    const double p = prm.p;
    LrCoefficients c;
    c.A = (1 - p) * e.sp1 + p * e.sp2;
    c.Bcoef = -p * e.om2;
    c.D0 = (1 - p) * e.s2_1 + p * e.om2sq;
    c.Dtheta = (1 - p) * e.s2pp1 + p * e.om2pp;
    c.f = c.A * x.theta_par(prm.r) + c.Bcoef * prm.r;
    c.N_perp_bar = batched_noise(c, prm, x.R_perp);
    return c;
}

double rel_diff(double a, double b, double scale) {
    const double den = std::max(std::fabs(b), scale);
    return den > 0.0 ? std::fabs(a - b) / den : 0.0;
}

// N_bar = n0 + n1 R_perp with the coefficients held fixed.
std::pair<double, double> noise_split(const LrCoefficients& c, const LrParams& prm, CoeffMode mode) {
    const double B = static_cast<double>(prm.B), d = static_cast<double>(prm.d);
    if (mode == CoeffMode::Tame) return {d * prm.p / B, (B - 1) / B * c.A * c.A};
    return {(d - 1) * c.D0 / B, c.Dtheta / B + (B - 1) / B * c.A * c.A};
}

std::string tame_guard(double t, const LrState& x, double r) {
    if (x.R_perp > kTameRMax || std::fabs(x.s + r) > 10.0 || !std::isfinite(x.R_perp) || !std::isfinite(x.s))
        return "left tame regime at t=" + std::to_string(t);
    return {};
}

double alpha_of(double s, double R, double r) { return std::exp(0.5 * ((s + r) * (s + r) + R - r * r)); }

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol * std::max(1.0, std::fabs(b)); }

}  // namespace

double LrParams::b_star() const { return std::log(p / (1 - p)) - 0.5 * r * r; }

LrParams make_lr_params(double r, double p, std::int64_t B, double eps, double eta, std::int64_t d) {
    if (!(r > 0.0)) throw std::invalid_argument("lr: r must be positive");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("lr: p must lie in (0, 1)");
    if (B < 1) throw std::invalid_argument("lr: B must be >= 1");
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("lr: eps must lie in [0, 1]");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("lr: eta must be finite and >= 0");
    if (d < 2) throw std::invalid_argument("lr: d must be >= 2");
    return {r, p, B, eps, 1.0 - eps, eta, d};
}

double LrState::alpha(double r) const { return alpha_of(s, R_perp, r); }

bool LrState::valid() const {
    if (!(R_perp >= 0.0 && V_perp >= 0.0)) return false;
    return C_perp * C_perp <= R_perp * V_perp * (1 + 1e-9) + 1e-300;
}

std::string to_string(CoeffMode m) { return m == CoeffMode::Exact ? "exact" : "tame"; }

CoeffMode coeff_mode_from_string(const std::string& s) {
    if (s == "exact") return CoeffMode::Exact;
    if (s == "tame") return CoeffMode::Tame;
    throw std::invalid_argument("unknown coefficient mode: " + s);
}

double batched_noise(const LrCoefficients& c, const LrParams& prm, double R_perp) {
    const double B = static_cast<double>(prm.B), d = static_cast<double>(prm.d);
    return ((d - 1) * c.D0 + R_perp * c.Dtheta) / B + (B - 1) / B * c.A * c.A * R_perp;
}

LrCoefficients coefficients_exact(const LrState& x, const LrParams& prm, int order) {
    const double q = x.q(prm.r);
    if (!(q >= 0.0)) throw std::invalid_argument("coefficients_exact: q must be >= 0");
    const double mu1 = prm.b_star();
    const double mu2 = x.theta_par(prm.r) * prm.r + mu1;
    LrCoefficients lo = assemble(expectations(mu1, mu2, q, gauss_hermite(order)), x, prm);
    const LrCoefficients hi = assemble(expectations(mu1, mu2, q, gauss_hermite(std::min(2 * order, 256))), x, prm);
    const double p2 = prm.p * prm.p;
    lo.quad_rel_diff = std::max({rel_diff(lo.A, hi.A, 0.0), rel_diff(lo.Bcoef, hi.Bcoef, 0.0),
                                 rel_diff(lo.D0, hi.D0, 0.0), rel_diff(lo.Dtheta, hi.Dtheta, p2)});
    if (lo.quad_rel_diff > kQuadTol)
        throw NumericalError("coefficients_exact: quadrature did not converge (relative difference " +
                             std::to_string(lo.quad_rel_diff) + ")");
    return lo;
}

LrCoefficients coefficients_tame(const LrState& x, const LrParams& prm, double R_max) {
    if (prm.p > 0.1) throw std::invalid_argument("coefficients_tame: requires p <= 0.1");
    if (x.R_perp > R_max) throw NumericalError("coefficients_tame: R_perp exceeds R_max; left tame regime");
    const double p = prm.p, a = x.alpha(prm.r);
    const double B = static_cast<double>(prm.B), d = static_cast<double>(prm.d);
    LrCoefficients c;
    c.A = p * a;
    c.Bcoef = -p;
    c.D0 = p;
    c.Dtheta = 0.0;
    c.f = p * (a * x.theta_par(prm.r) - prm.r);
    c.N_perp_bar = d * p / B + (B - 1) / B * p * p * a * a * x.R_perp;
    return c;
}

LrCoefficients coefficients(const LrState& x, const LrParams& prm, CoeffMode mode) {
    return mode == CoeffMode::Exact ? coefficients_exact(x, prm) : coefficients_tame(x, prm);
}

LrState drift_5var(const LrState& x, const LrParams& prm, CoeffMode mode) {
    const LrCoefficients c = coefficients(x, prm, mode);
    const double e = prm.eps, b = 1 - e, h = prm.eta, A = c.A, N = c.N_perp_bar;
    LrState dx;
    dx.s = -h * b * x.u - h * e * c.f;
    dx.u = e * (c.f - x.u);
    dx.R_perp = -2 * h * b * x.C_perp - 2 * h * e * A * x.R_perp + h * h * b * b * x.V_perp +
                2 * h * h * b * e * A * x.C_perp + h * h * e * e * N;
    dx.V_perp = -(2 * e - e * e) * x.V_perp + 2 * b * e * A * x.C_perp + e * e * N;
    dx.C_perp = -e * x.C_perp + e * A * x.R_perp - h * b * b * x.V_perp - 2 * h * b * e * A * x.C_perp - h * e * e * N;
    return dx;
}

Trajectory evolve_5var(const LrState& initial, const LrParams& prm, const std::vector<double>& times,
                       CoeffMode mode, const Lr5Options& opts) {
    if (times.empty()) throw std::invalid_argument("evolve_5var: empty time grid");
    if (!initial.valid()) throw std::invalid_argument("evolve_5var: initial state violates R, V >= 0 or C^2 <= R V");
    const OdeRhs rhs = [&](double, const State& y, State& dy) {
        const LrState dx = drift_5var(LrState::from({y[0], y[1], y[2], y[3], y[4]}), prm, mode);
        dy = {dx.s, dx.u, dx.R_perp, dx.V_perp, dx.C_perp};
    };
    const auto a0 = initial.array();
    const State y0(a0.begin(), a0.end());
    OdeResult res;
    std::string solver = "dopri45";
    if (!opts.force_fallback) {
        OdeOptions o;
        o.rtol = opts.rtol;
        o.atol = opts.atol;
        if (prm.eps > 0.0) o.h_max = 0.1 / prm.eps;
        o.guard = [&](double t, const State& y) {
            return tame_guard(t, LrState::from({y[0], y[1], y[2], y[3], y[4]}), prm.r);
        };
        res = rk_adaptive(rhs, y0, times, o);
        if (!res.ok && res.message.rfind("left tame regime", 0) == 0) throw NumericalError("evolve_5var: " + res.message);
    }
    if (opts.force_fallback || !res.ok) {
        const double h = opts.fallback_step > 0.0 ? opts.fallback_step : 0.05 / std::max(prm.eps, 1e-300);
        res = trapezoid_implicit(rhs, y0, times, h);
        solver = "trapezoid_implicit";
        if (!res.ok) throw NumericalError("evolve_5var: " + res.message + " at t=" + std::to_string(res.failure_time));
        for (const auto& y : res.states) {
            const std::string g = tame_guard(0.0, LrState::from({y[0], y[1], y[2], y[3], y[4]}), prm.r);
            if (!g.empty()) throw NumericalError("evolve_5var: left tame regime during fallback");
        }
    }

    Trajectory tr;
    tr.clock = Clock::ActiveUpdate;
    tr.columns = {"s", "u", "R_perp", "V_perp", "C_perp", "alpha", "kl"};
    tr.times = res.times;
    for (const auto& y : res.states) {
        const LrState x = LrState::from({y[0], y[1], y[2], y[3], y[4]});
        const double kl = opts.with_kl ? kl_pop(x.s, std::max(0.0, x.R_perp), prm.r, prm.p) : kNaN;
        tr.states.push_back({x.s, x.u, x.R_perp, x.V_perp, x.C_perp, x.alpha(prm.r), kl});
    }
    tr.metadata = {{"model", "lr"},   {"coeff_mode", to_string(mode)}, {"solver", solver},
                   {"accepted", res.accepted}, {"rejected", res.rejected}};
    return tr;
}

LrState steady_state_5var(const LrParams& prm, CoeffMode mode, const LrState& guess) {
    const double e = prm.eps, b = 1 - e, h = prm.eta;
    if (!(e > 0.0 && h > 0.0)) throw std::invalid_argument("steady_state_5var: needs eps > 0 and eta > 0");

    // One sweep: signal root at fixed R, then the bulk solved with the
    // coefficients frozen at that state. The steady state is its fixed point.
    auto sweep = [&](double s0, double R) {
        LrState x{s0, 0.0, R, 0.0, 0.0};
        auto f = [&](double s) {
            LrState y = x;
            y.s = s;
            return coefficients(y, prm, mode).f;
        };
        const double step = 1e-7;
        x.s = newton_1d(f, [&](double s) { return (f(s + step) - f(s - step)) / (2 * step); }, s0, 1e-15 * prm.p)
                  .root;
        const LrCoefficients c = coefficients(x, prm, mode);
        const auto [n0, n1] = noise_split(c, prm, mode);
        const double A = c.A;
        // At steady state the R row combined with the C and V rows reduces
        // exactly to 2 C + eta V = 0. Eliminating C leaves a 2x2 system in
        // (R, V), solved directly since the unknowns differ by many decades.
        const double a11 = e * e * n1, a12 = -(2 * e - e * e) - b * e * A * h;
        const double a21 = e * A - h * e * e * n1, a22 = -h * b * b + (e + 2 * h * b * e * A) * h / 2;
        const double r1 = -e * e * n0, r2 = h * e * e * n0;
        const double det = a11 * a22 - a12 * a21;
        x.R_perp = (r1 * a22 - a12 * r2) / det;
        x.V_perp = (a11 * r2 - a21 * r1) / det;
        x.C_perp = -h * x.V_perp / 2;
        if (!std::isfinite(x.R_perp) || !std::isfinite(x.V_perp) || x.R_perp < 0.0)
            throw NumericalError("steady_state_5var: bulk steady state is not admissible");
        return x;
    };

    // Newton on z - sweep(z) in (s, log R); the plain iteration can contract slowly.
    LrState start = guess;
    // A cold exact solve starts from the tame answer, which keeps the first
    // sweep inside the quadrature's reliable range.
    if (mode == CoeffMode::Exact && guess.s == 0.0 && guess.R_perp == 0.0 && prm.p <= 0.1)
        start = steady_state_5var(prm, CoeffMode::Tame, guess);
    LrState x = sweep(start.s, std::max(start.R_perp, 0.0));
    Eigen::Vector2d z(x.s, std::log(x.R_perp));
    auto resid = [&](const Eigen::Vector2d& w, LrState* out) {
        const LrState y = sweep(w(0), std::exp(w(1)));
        if (out) *out = y;
        return Eigen::Vector2d(y.s - w(0), std::log(y.R_perp) - w(1));
    };
    for (int it = 0; it < 100; ++it) {
        LrState y;
        const Eigen::Vector2d F = resid(z, &y);
        if (F.norm() < 1e-13) return y;
        Eigen::Matrix2d J;
        for (int k = 0; k < 2; ++k) {
            Eigen::Vector2d zp = z;
            const double dz = 1e-7 * std::max(1.0, std::fabs(z(k)));
            zp(k) += dz;
            J.col(k) = (resid(zp, nullptr) - F) / dz;
        }
        Eigen::Vector2d step = J.fullPivLu().solve(-F);
        if (!step.allFinite()) step = F;
        double lambda = 1.0;
        while (lambda > 1e-4) {
            try {
                if (resid(z + lambda * step, nullptr).norm() < F.norm()) break;
            } catch (const std::exception&) {
            }
            lambda /= 2;
        }
        z += lambda * step;
    }
    throw NumericalError("steady_state_5var: Newton iteration did not converge");
}

// ---- regions ----

std::string to_string(LrRegion r) {
    switch (r) {
        case LrRegion::ConcentratedAbove: return "concentrated_above";
        case LrRegion::NoiseFloorAbove: return "noise_floor_above";
        case LrRegion::NoiseFloorBelow: return "noise_floor_below";
        case LrRegion::BoundaryE: return "boundary_E";
        case LrRegion::BoundaryF: return "boundary_F";
        case LrRegion::Empty: return "empty";
    }
    return "?";
}

LrRegion lr_region_from_string(const std::string& s) {
    for (auto r : {LrRegion::ConcentratedAbove, LrRegion::NoiseFloorAbove, LrRegion::NoiseFloorBelow, LrRegion::BoundaryE,
                   LrRegion::BoundaryF, LrRegion::Empty})
        if (to_string(r) == s) return r;
    throw std::invalid_argument("unknown LR region: " + s);
}

LrRegion classify_lr_region(const ScalingExponents& e, double tol) {
    if (e.gamma < 0.0) throw std::invalid_argument("classify_lr_region: gamma must be >= 0");
    const double res = 1 - e.sigma + e.kappa;
    const bool on_F = near(e.kappa, e.sigma - 1, tol);
    const bool on_E = near(e.gamma, res, tol);
    if (on_E) return LrRegion::BoundaryE;
    if (on_F) return LrRegion::BoundaryF;
    const bool concentrated = e.kappa < e.sigma - 1;
    const bool above = e.gamma > res;
    if (concentrated) return above ? LrRegion::ConcentratedAbove : LrRegion::Empty;
    return above ? LrRegion::NoiseFloorAbove : LrRegion::NoiseFloorBelow;
}

double lr_alpha_eta(const ScalingExponents& e) {
    if (e.alpha_eta) return *e.alpha_eta;
    const LrRegion reg = classify_lr_region(e);
    if (reg == LrRegion::Empty) throw std::invalid_argument("lr: the concentrated-below-resonance corner is empty");
    return reg == LrRegion::NoiseFloorBelow ? 1 - e.sigma : e.gamma - e.kappa;
}

LrParams instantiate_lr(const ScalingExponents& e, const LrConstants& c, std::int64_t d) {
    const double dd = static_cast<double>(d);
    const double p = c.p_star * std::pow(dd, -e.kappa);
    const auto B = static_cast<std::int64_t>(std::ceil(c.B_star * std::pow(dd, e.sigma) - 1e-9));
    const double eps = c.eps_star * std::pow(dd, -e.gamma);
    const double eta = c.eta_star * std::pow(dd, -lr_alpha_eta(e));
    return make_lr_params(c.r, p, std::max<std::int64_t>(B, 1), eps, eta, d);
}

void phase2_volterra_rhs(const LrConstants& c, const std::vector<double>& y, std::vector<double>& dy) {
    const double es = c.eps_star, eb = c.eta_star * c.p_star / c.eps_star, r = c.r;
    const double s = y[0], u = y[1], x = y[2], v = y[3];
    const double a = alpha_of(s, x * x, r);
    dy.resize(4);
    dy[0] = -es * eb * u;
    dy[1] = es * (a * (s + r) - r - u);
    dy[2] = -c.eta_star * c.p_star * v;
    dy[3] = -es * v + es * a * x;
}

ReducedSystem reduced_system(const ScalingExponents& e, const LrConstants& c) {
    const LrRegion reg = classify_lr_region(e);
    if (reg == LrRegion::Empty) throw std::invalid_argument("reduced_system: empty corner (forces gamma < 0)");
    ReducedSystem sys;
    sys.region = reg;
    const double es = c.eps_star, hp = c.eta_star * c.p_star, r = c.r;
    if (reg == LrRegion::NoiseFloorBelow) {
        sys.clock_power = 1 - e.sigma + e.kappa;
        sys.columns = {"s", "R_perp"};
        const double eta_eff = c.eta_star / c.B_star;
        sys.rhs = [=](const std::vector<double>& y, std::vector<double>& dy) {
            const auto v = slow_rhs(y[0], y[1], r, hp, eta_eff);
            dy = {v[0], v[1]};
        };
        sys.project = [](const LrState& x, const LrParams&) { return std::vector<double>{x.s, x.R_perp}; };
        return sys;
    }
    sys.clock_power = e.gamma;
    sys.columns = {"s", "u_tilde", "R_perp", "V_tilde", "C_tilde"};
    if (reg == LrRegion::BoundaryE) {
        if (!(e.gamma > 0.0)) throw std::invalid_argument("reduced_system: E requires gamma > 0");
        const double pump = es * es * c.p_star / c.B_star, kap = e.kappa;
        sys.rhs = [=](const std::vector<double>& y, std::vector<double>& dy) {
            const double a = alpha_of(y[0], y[2], r);
            dy = {-c.eta_star * y[1], es * (c.p_star * (a * (y[0] + r) - r) - y[1]), -2 * c.eta_star * y[4],
                  -2 * es * y[3] + 2 * es * c.p_star * a * y[4] + pump,
                  -es * y[4] + es * c.p_star * a * y[2] - c.eta_star * y[3]};
        };
        sys.project = [kap](const LrState& x, const LrParams& prm) {
            const double dk = std::pow(static_cast<double>(prm.d), kap);
            return std::vector<double>{x.s, x.u * dk, x.R_perp, x.V_perp * dk * dk, x.C_perp * dk};
        };
        return sys;
    }
    const double eb = hp / es;
    sys.rhs = [=](const std::vector<double>& y, std::vector<double>& dy) {
        const double a = alpha_of(y[0], y[2], r);
        dy = {-es * eb * y[1], es * (a * (y[0] + r) - r - y[1]), -2 * hp * y[4], -2 * es * y[3] + 2 * es * a * y[4],
              -es * y[4] + es * a * y[2] - hp * y[3]};
    };
    sys.project = [](const LrState& x, const LrParams& prm) {
        const double p = prm.p;
        return std::vector<double>{x.s, x.u / p, x.R_perp, x.V_perp / (p * p), x.C_perp / p};
    };
    return sys;
}

Trajectory evolve_reduced(const ReducedSystem& sys, const std::vector<double>& y0, const std::vector<double>& tau) {
    if (y0.size() != sys.columns.size()) throw std::invalid_argument("evolve_reduced: state size mismatch");
    const OdeRhs f = [&](double, const State& y, State& dy) { sys.rhs(y, dy); };
    OdeOptions o;
    o.rtol = 1e-10;
    o.atol = 1e-13;
    const OdeResult res = rk_adaptive(f, y0, tau, o);
    if (!res.ok) throw NumericalError("evolve_reduced: " + res.message);
    Trajectory tr;
    tr.clock = Clock::Slow;
    tr.clock_power = sys.clock_power;
    tr.columns = sys.columns;
    tr.times = res.times;
    tr.states = res.states;
    tr.metadata = {{"model", "lr"}, {"region", to_string(sys.region)}};
    return tr;
}

LrComparison compare_lr_reduced(const ScalingExponents& e, const LrConstants& c,
                                const std::vector<std::int64_t>& d_values, const std::vector<double>& tau,
                                double s0, double R0) {
    const ReducedSystem sys = reduced_system(e, c);
    std::vector<double> y0(sys.columns.size(), 0.0);
    y0[0] = s0;
    y0[sys.columns.size() == 2 ? 1 : 2] = R0;
    const Trajectory lim = evolve_reduced(sys, y0, tau);
    const std::size_t iR = sys.columns.size() == 2 ? 1 : 2;
    double sup_s = 0.0, sup_R = 0.0;
    for (const auto& y : lim.states) {
        sup_s = std::max(sup_s, std::fabs(y[0]));
        sup_R = std::max(sup_R, std::fabs(y[iR]));
    }
    LrComparison out;
    out.tau = tau;
    out.reduced = lim;
    for (auto d : d_values) {
        const LrParams prm = instantiate_lr(e, c, d);
        const double scale = std::pow(static_cast<double>(d), sys.clock_power);
        std::vector<double> t(tau.size());
        for (std::size_t i = 0; i < tau.size(); ++i) t[i] = tau[i] * scale;
        Lr5Options o;
        o.with_kl = false;
        o.rtol = 1e-10;
        o.atol = 1e-14;
        const Trajectory full = evolve_5var({s0, 0.0, R0, 0.0, 0.0}, prm, t, CoeffMode::Tame, o);
        double es = 0.0, eR = 0.0;
        Trajectory projected;
        projected.clock = Clock::Slow;
        projected.clock_power = sys.clock_power;
        projected.columns = sys.columns;
        projected.times = tau;
        projected.metadata = {{"d", d}};
        for (std::size_t i = 0; i < tau.size(); ++i) {
            const auto& z = full.states[i];
            const auto proj = sys.project(LrState{z[0], z[1], z[2], z[3], z[4]}, prm);
            es = std::max(es, std::fabs(proj[0] - lim.states[i][0]));
            eR = std::max(eR, std::fabs(proj[iR] - lim.states[i][iR]));
            projected.states.push_back(proj);
        }
        out.full.push_back(std::move(projected));
        out.d_values.push_back(static_cast<double>(d));
        out.sup_err_s.push_back(sup_s > 0.0 ? es / sup_s : es);
        out.sup_err_R.push_back(sup_R > 0.0 ? eR / sup_R : eR);
    }
    for (std::size_t i = 1; i < out.d_values.size(); ++i)
        if (out.sup_err_s[i] > out.sup_err_s[i - 1] || out.sup_err_R[i] > out.sup_err_R[i - 1]) out.shrinking = false;
    return out;
}

// ---- equilibrium ----

std::array<double, 3> equilibrium_residuals(double r, double eta_eff, double s, double R, double alpha) {
    return {alpha * (s + r) - r, R - eta_eff / (2 * alpha), alpha - alpha_of(s, R, r)};
}

SlowEquilibrium equilibrium_slow(double r, double eta_eff) {
    if (!(eta_eff > 0.0 && eta_eff < 2.0)) throw std::invalid_argument("equilibrium_slow: eta_eff must lie in (0, 2)");
    if (!(r > 0.0)) throw std::invalid_argument("equilibrium_slow: r must be positive");
    // 2 log a = r^2 (1/a^2 - 1) + eta_eff / (2 a)
    auto F = [&](double a) { return 2 * std::log(a) - r * r * (1 / (a * a) - 1) - eta_eff / (2 * a); };
    auto dF = [&](double a) { return 2 / a + 2 * r * r / (a * a * a) + eta_eff / (2 * a * a); };
    double a;
    int iters;
    try {
        const auto res = newton_1d(F, dF, 1.0, 1e-14, 100);
        a = res.root;
        iters = res.iterations;
    } catch (const NumericalError&) {
        // F is increasing in a; bracket upward from 1 where F(1) < 0.
        double hi = 2.0;
        while (F(hi) < 0.0) hi *= 2.0;
        const auto res = bisect_1d(F, 1.0, hi, 1e-15);
        a = res.root;
        iters = res.iterations;
    }
    SlowEquilibrium eq;
    eq.alpha_star = a;
    eq.s_star = r * (1 / a - 1);
    eq.R_star = eta_eff / (2 * a);
    eq.residuals = equilibrium_residuals(r, eta_eff, eq.s_star, eq.R_star, a);
    eq.iterations = iters;
    for (double v : eq.residuals)
        if (std::fabs(v) > 1e-10) throw NumericalError("equilibrium_slow: residual above 1e-10");
    return eq;
}

double floor_leading_order(double r, double eta_eff) {
    if (!(eta_eff > 0.0)) throw std::invalid_argument("floor_leading_order: eta_eff must be positive");
    const double k = 1.0 / (2 * (1 + r * r));
    return bisect_1d([&](double R) { return R * std::exp(k * R) - eta_eff / 2; }, 0.0, eta_eff / 2, 1e-16).root;
}

std::array<double, 2> slow_rhs(double s, double R, double r, double c, double eta_eff) {
    const double a = alpha_of(s, R, r);
    return {-c * (a * (s + r) - r), -2 * c * a * R + c * eta_eff};
}

SlowJacobian jacobian_slow(double s, double R, double r, double eta_star, double p_star) {
    const double c = eta_star * p_star, a = alpha_of(s, R, r), th = s + r;
    SlowJacobian j;
    j.exact << -c * a * (1 + th * th), -c * a * th / 2,  //
        -2 * c * a * R * th, -c * a * (2 + R);
    j.leading_order << 1 + r * r, r / 2,  //
        2 * r * R, 2 * (1 + R / 2);
    j.leading_order *= -c * a;
    const double tr = j.exact.trace(), det = j.exact.determinant();
    const double disc = std::max(0.0, tr * tr - 4 * det);
    j.eigenvalues = {0.5 * (tr - std::sqrt(disc)), 0.5 * (tr + std::sqrt(disc))};
    const double tl = j.leading_order.trace(), dl = j.leading_order.determinant();
    j.discriminant = tl * tl - 4 * dl;
    return j;
}

// ---- KL ----

namespace {

double kl_with_order(double s, double R, double r, double p, int order) {
    const double bs = std::log(p / (1 - p)) - 0.5 * r * r, th = s + r, sr = std::sqrt(std::max(0.0, R));
    const double k1 = gaussian_expectation_2d(
        [&](double xi, double zeta) { return binary_kl(r * xi + bs, th * xi + sr * zeta + bs); }, order);
    const double k2 = gaussian_expectation_2d(
        [&](double xi, double zeta) {
            return binary_kl(r * r + r * xi + bs, th * r + th * xi + sr * zeta + bs);
        },
        order);
    return (1 - p) * k1 + p * k2;
}

}  // namespace

KlResult kl_pop_checked(double s, double R, double r, double p) {
    if (!(R >= 0.0)) throw std::invalid_argument("kl_pop: R_perp must be >= 0");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("kl_pop: p must lie in (0, 1)");
    KlResult k;
    k.value = kl_with_order(s, R, r, p, 40);
    const double hi = kl_with_order(s, R, r, p, 64);
    k.quad_rel_diff = rel_diff(k.value, hi, 0.0);
    k.flagged = k.quad_rel_diff > kQuadTol;
    k.value = std::max(k.value, 0.0);
    return k;
}

double kl_pop(double s, double R, double r, double p) { return kl_pop_checked(s, R, r, p).value; }

double kl_leading(double s, double R, double r) { return alpha_of(s, R, r) - 1 - s * r; }

// ---- heatmaps ----

std::vector<LrHeatCell> lr_heatmaps(const std::vector<double>& kappas, const std::vector<double>& gammas, double sigma,
                                    const LrConstants& c) {
    const double eta_eff = c.eta_star / c.B_star;
    double eq_floor = kNaN;
    if (eta_eff > 0.0 && eta_eff < 2.0) eq_floor = equilibrium_slow(c.r, eta_eff).R_star;
    std::vector<LrHeatCell> out;
    out.reserve(kappas.size() * gammas.size());
    for (double g : gammas) {
        for (double k : kappas) {
            LrHeatCell cell;
            cell.kappa = k;
            cell.gamma = g;
            cell.T_exponent = std::max(g, 1 - sigma + k);
            cell.region = classify_lr_region({k, sigma, g, {}});
            switch (cell.region) {
                case LrRegion::ConcentratedAbove: cell.floor = 0.0; break;
                case LrRegion::NoiseFloorAbove:
                case LrRegion::BoundaryF:
                    cell.floor_is_exponent = true;
                    cell.floor = 1 - sigma + k - 2 * g;
                    break;
                case LrRegion::NoiseFloorBelow:
                case LrRegion::BoundaryE:
                    cell.floor = eq_floor;
                    cell.floor_leading = eta_eff / 2;
                    break;
                case LrRegion::Empty:
                    cell.floor = kNaN;
                    cell.T_exponent = kNaN;
                    break;
            }
            out.push_back(cell);
        }
    }
    return out;
}

}  // namespace spm
