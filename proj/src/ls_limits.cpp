#include "spm/ls_limits.hpp"

#include "spm/harness/parallel.hpp"
#include "spm/numerics/rng.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace spm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// P* = 1 - exp(-s) and chi* = s / P*, continuous at s = 0.
double corner_P(double s) { return -std::expm1(-s); }
double corner_chi(double s) { return s == 0.0 ? 1.0 : s / corner_P(s); }

bool on_lift_manifold(const MomentState& s) {
    return std::fabs(s.C * s.C - s.R * s.V) <= 1e-12 * std::max(1.0, s.R * s.V);
}

Trajectory make_traj(const std::vector<double>& tau, double power) {
    for (std::size_t i = 1; i < tau.size(); ++i)
        if (tau[i] < tau[i - 1]) throw std::invalid_argument("limit grid must be ascending");
    Trajectory tr;
    tr.clock = Clock::Slow;
    tr.clock_power = power;
    tr.columns = {"R", "V", "C"};
    tr.times = tau;
    return tr;
}

}  // namespace

std::string LimitSystem::kind() const {
    switch (system.index()) {
        case 0: return "sgd1d";
        case 1: return "heavy_ball2d";
        default: return "resonance3d";
    }
}

double LimitSystem::clock_power() const {
    return std::visit([](const auto& s) { return s.clock_power; }, system);
}

LimitSystem select_limit(const ScalingExponents& e, const ScalingConstants& c) {
    validate_exponents(e);
    validate_constants(c, e.gamma);
    LimitSystem out;
    out.region = classify_region(e);
    const double eta_bar = c.eta_star * c.p_star / c.eps_star;
    const double s = c.p_star * c.B_star;
    const double P = corner_P(s);
    const double eta_eff = c.eta_star / c.B_star;
    const double sgd = eta_eff * (2.0 - eta_eff);
    switch (out.region) {
        case Region::A:
        case Region::C:
            out.system = HeavyBall2D{c.eps_star, eta_bar, e.gamma};
            break;
        case Region::NoiseCharacterLine:
            out.system = HeavyBall2D{c.eps_star, eta_bar, e.gamma};
            out.supported = false;
            out.note = "noise-character line: strict-interior heavy-ball constants only";
            break;
        case Region::F:
            out.system = HeavyBall2D{c.eps_star / s, eta_bar, e.gamma - (e.kappa - e.sigma)};
            break;
        case Region::KappaEqSigmaAbove:
            out.system = HeavyBall2D{c.eps_star / P, eta_bar, e.gamma};
            break;
        case Region::ResonanceDense:
            out.system = Resonance3D{c.eps_star, eta_bar, c.eps_star * c.eps_star / s, e.gamma};
            break;
        case Region::ResonanceSparse: {
            const double rho = c.eps_star / s;
            out.system = Resonance3D{rho, eta_bar, rho * rho, 1.0};
            break;
        }
        case Region::TriplePoint:
            out.system = Resonance3D{c.eps_star / P, eta_bar, c.eps_star * c.eps_star / (P * s), 1.0};
            break;
        case Region::B:
            out.system = Sgd1D{s * sgd, 1.0 - e.sigma + e.kappa, eta_eff, s};
            break;
        case Region::D:
        case Region::E:
            out.system = Sgd1D{sgd, 1.0, eta_eff, 1.0};
            break;
        case Region::KappaEqSigmaBelow: {
            const double chi = corner_chi(s);
            out.system = Sgd1D{chi * sgd, 1.0, eta_eff, chi};
            break;
        }
    }
    return out;
}

Mat3 limit_matrix(const LimitSystem& sys) {
    Mat3 a;
    if (const auto* hb = std::get_if<HeavyBall2D>(&sys.system)) {
        a << 0, 0, -2 * hb->eta_bar, 0, -2, 2, 1, -hb->eta_bar, -1;
        return hb->rate * a;
    }
    if (const auto* r = std::get_if<Resonance3D>(&sys.system)) {
        const double q = r->rho_star;
        a << 0, 0, -2 * q * r->eta_bar, r->xi_star, -2 * q, 2 * q, q, -q * r->eta_bar, -q;
        return a;
    }
    throw std::invalid_argument("limit_matrix: one-dimensional limit has no 3x3 drift");
}

StabilityVerdict limit_stability(const LimitSystem& sys) {
    if (const auto* s = std::get_if<Sgd1D>(&sys.system)) {
        StabilityVerdict v = routh_hurwitz(1.0, 1.0, 0.0);
        v.stable = s->c_eff > 0.0;
        v.margin = s->c_eff;
        v.binding = v.stable ? HurwitzCondition::None : HurwitzCondition::C3;
        v.c1_pos = v.c2_pos = v.c1c2_gt_c3 = true;
        v.c3_pos = v.stable;
        return v;
    }
    return routh_hurwitz(char_poly(limit_matrix(sys)));
}

std::array<double, 2> heavy_ball_xy(const HeavyBall2D& hb, double x0, double y0, double tau) {
    Eigen::Matrix2d m;
    m << 0.0, -hb.rate * hb.eta_bar, hb.rate, -hb.rate;
    const Eigen::Matrix2d e = (m * tau).exp();
    const Eigen::Vector2d v = e * Eigen::Vector2d(x0, y0);
    return {v(0), v(1)};
}

CharPoly resonance_cubic(const Resonance3D& r) {
    const double z = r.zeta_star();
    return {3.0, 2.0 + 4.0 * r.eta_bar, 2.0 * r.eta_bar * (2.0 - r.eta_bar * z)};
}

double resonance_discriminant(const Resonance3D& r) {
    const double z = r.zeta_star(), h = r.eta_bar;
    return 4.0 * (std::pow(1.0 - 4.0 * h, 3) - 27.0 * h * h * h * h * z * z);
}

Trajectory evolve_limit(const LimitSystem& sys, const MomentState& init, const std::vector<double>& tau) {
    Trajectory tr = make_traj(tau, sys.clock_power());
    tr.metadata["limit_kind"] = sys.kind();
    tr.metadata["region"] = to_string(sys.region);
    tr.metadata["supported"] = sys.supported;
    if (!sys.note.empty()) tr.metadata["note"] = sys.note;
    const StabilityVerdict v = limit_stability(sys);
    tr.metadata["stable"] = v.stable;

    if (const auto* s = std::get_if<Sgd1D>(&sys.system)) {
        tr.metadata["c_eff"] = s->c_eff;
        for (double t : tau) tr.states.push_back({init.R * std::exp(-s->c_eff * t), kNaN, kNaN});
        return tr;
    }
    if (const auto* hb = std::get_if<HeavyBall2D>(&sys.system)) {
        tr.metadata["rate"] = hb->rate;
        tr.metadata["eta_bar"] = hb->eta_bar;
        if (on_lift_manifold(init) && init.R >= 0.0 && init.V >= 0.0) {
            double x0 = std::sqrt(init.R), y0 = 0.0;
            if (x0 > 0.0)
                y0 = init.C / x0;
            else
                y0 = std::sqrt(init.V);
            tr.metadata["solver"] = "square_root_lift";
            for (double t : tau) {
                const auto xy = heavy_ball_xy(*hb, x0, y0, t);
                tr.states.push_back({xy[0] * xy[0], xy[1] * xy[1], xy[0] * xy[1]});
            }
            return tr;
        }
    } else {
        const auto& r = std::get<Resonance3D>(sys.system);
        tr.metadata["rho_star"] = r.rho_star;
        tr.metadata["xi_star"] = r.xi_star;
        tr.metadata["eta_bar"] = r.eta_bar;
        tr.metadata["zeta_star"] = r.zeta_star();
    }
    const LinearFlow3 flow(limit_matrix(sys));
    tr.metadata["solver"] = "linear_flow";
    for (double t : tau) {
        const Vec3 x = flow.apply(t, init.vec());
        tr.states.push_back({x(0), x(1), x(2)});
    }
    return tr;
}

BalancingTransform balancing_transform(Region region, const DriftMatrix& m, const ScalingExponents& e) {
    const double rho = m.retention.rho, r2 = rho * rho;
    const double d = static_cast<double>(m.params.d), B = static_cast<double>(m.params.B), p = m.params.p;
    const double P = m.batch.P_batch;
    BalancingTransform t;
    t.clock_power = e.gamma;
    switch (region) {
        case Region::C:
        case Region::ResonanceDense:
            t.diag = {r2 * d / (B * p), 1.0, r2 * d / B};
            break;
        case Region::A:
        case Region::NoiseCharacterLine:
            t.diag = {r2, 1.0, r2 * p};
            break;
        case Region::F:
        case Region::ResonanceSparse:
            t.diag = {r2 * d, 1.0, r2 * d / B};
            t.clock_power = e.gamma - (e.kappa - e.sigma);
            break;
        case Region::TriplePoint:
        case Region::KappaEqSigmaAbove:
            t.diag = {r2 * d * P / (p * B), 1.0, r2 * d / B};
            break;
        default:
            throw std::invalid_argument("balancing_transform: region " + to_string(region) +
                                        " has a one-dimensional limit");
    }
    for (double v : t.diag)
        if (!(v > 0.0) || !std::isfinite(v)) throw std::domain_error("balancing_transform: degenerate scale");
    return t;
}

Mat3 balanced_matrix(const DriftMatrix& m, const BalancingTransform& t) {
    const double f = std::pow(static_cast<double>(m.params.d), t.clock_power);
    const Vec3 D(t.diag[0], t.diag[1], t.diag[2]);
    return D.cwiseInverse().asDiagonal() * (f * to_scaled(m)) * D.asDiagonal();
}

Trajectory main_on_slow_clock(const ScalingExponents& e, const ScalingConstants& c, std::int64_t d,
                              const std::vector<double>& tau, const MomentState& initial) {
    const LimitSystem sys = select_limit(e, c);
    const double power = sys.clock_power();
    const double scale = std::pow(static_cast<double>(d), power);
    const InstanceParams ip = instantiate(e, c, d);
    const DriftMatrix m = build_main_matrix(ip);
    std::vector<double> t(tau.size());
    for (std::size_t i = 0; i < tau.size(); ++i) t[i] = tau[i] * scale;
    Trajectory tr = evolve_linear(m, initial, t);
    tr.clock = Clock::Slow;
    tr.clock_power = power;
    tr.times = tau;
    tr.metadata["region"] = to_string(sys.region);
    tr.metadata["coordinates"] = "raw";
    if (sys.kind() != "sgd1d") {
        const BalancingTransform bt = balancing_transform(sys.region, m, e);
        const ScaledTransform st = scaled_transform(m);
        const double fv = bt.diag[0] / (st.Lambda_W * bt.diag[1]);
        const double fc = bt.diag[0] / (st.Lambda_Z * bt.diag[2]);
        for (auto& row : tr.states) {
            row[1] *= fv;
            row[2] *= fc;
        }
        tr.metadata["coordinates"] = "balanced";
        tr.metadata["balancing"] = bt.diag;
    }
    return tr;
}

std::vector<double> default_limit_grid(const LimitSystem& sys, std::size_t n) {
    double rate = 0.0;
    if (const auto* s = std::get_if<Sgd1D>(&sys.system)) {
        rate = s->c_eff;
    } else {
        const Eigen::Vector3cd ev = limit_matrix(sys).eigenvalues();
        rate = -ev.real().maxCoeff();
    }
    const double tmax = rate > 0.0 ? 8.0 / rate : 10.0;
    return linspace(0.0, tmax, n);
}

LimitComparison compare_main_limit(const ScalingExponents& e, const ScalingConstants& c,
                                   const std::vector<std::int64_t>& d_values, std::vector<double> tau) {
    const LimitSystem sys = select_limit(e, c);
    if (tau.empty()) tau = default_limit_grid(sys);
    const Trajectory lim = evolve_limit(sys, MomentState{1.0, 0.0, 0.0}, tau);
    double lim_sup = 0.0;
    for (const auto& row : lim.states) lim_sup = std::max(lim_sup, std::fabs(row[0]));
    LimitComparison out;
    out.tau = tau;
    for (auto d : d_values) {
        const Trajectory main = main_on_slow_clock(e, c, d, tau);
        double err = 0.0;
        for (std::size_t i = 0; i < tau.size(); ++i)
            err = std::max(err, std::fabs(main.states[i][0] - lim.states[i][0]));
        out.d_values.push_back(static_cast<double>(d));
        out.sup_rel_error.push_back(err / lim_sup);
    }
    for (std::size_t i = 1; i < out.sup_rel_error.size(); ++i)
        if (out.sup_rel_error[i] > out.sup_rel_error[i - 1]) out.monotone = false;
    return out;
}

Trajectory sde_lift_simulate(const Resonance3D& sys, double x0, double y0, const std::vector<double>& tau,
                             const SdeConfig& cfg) {
    if (cfg.n_paths < 1000) throw std::invalid_argument("sde_lift_simulate: n_paths must be >= 1000");
    if (tau.empty() || tau.front() < 0.0) throw std::invalid_argument("sde_lift_simulate: grid must start at >= 0");
    const double dt_max = 0.01 / sys.rho_star;
    const double dt = cfg.dt > 0.0 ? cfg.dt : 0.002 / sys.rho_star;
    if (dt > dt_max * (1 + 1e-12)) throw std::invalid_argument("sde_lift_simulate: dt must be <= 0.01 / rho_star");
    Trajectory tr = make_traj(tau, sys.clock_power);
    tr.columns = {"R", "V", "C", "se_R", "se_V", "se_C"};

    const std::size_t T = tau.size();
    const std::int64_t chunk = 256;
    const auto n_chunks = static_cast<std::size_t>((cfg.n_paths + chunk - 1) / chunk);
    struct Acc {
        std::vector<double> s1, s2;  // per grid point: sums of (x^2, y^2, xy) and their squares
        std::int64_t nan_paths = 0;
    };
    std::vector<Acc> acc(n_chunks);
    const double a = sys.rho_star * sys.eta_bar, q = sys.rho_star, sx = std::sqrt(sys.xi_star);
    parallel_for(n_chunks, cfg.threads, [&](std::size_t ci) {
        Acc& A = acc[ci];
        A.s1.assign(3 * T, 0.0);
        A.s2.assign(3 * T, 0.0);
        const std::int64_t lo = static_cast<std::int64_t>(ci) * chunk;
        const std::int64_t hi = std::min(cfg.n_paths, lo + chunk);
        std::vector<double> buf(3 * T);
        for (std::int64_t path = lo; path < hi; ++path) {
            RngStream rng = RngStream::derive(cfg.seed, static_cast<std::uint64_t>(path));
            double x = x0, y = y0, t = 0.0;
            bool ok = true;
            for (std::size_t k = 0; k < T && ok; ++k) {
                const double span = tau[k] - t;
                if (span > 0.0) {
                    const auto n = static_cast<std::int64_t>(std::ceil(span / dt - 1e-9));
                    const double h = span / static_cast<double>(n), sh = std::sqrt(h);
                    for (std::int64_t i = 0; i < n; ++i) {
                        const double z = rng.normal();
                        const double nx = x - a * y * h;
                        const double ny = y + q * (x - y) * h + sx * x * sh * z;
                        x = nx;
                        y = ny;
                    }
                    t = tau[k];
                }
                if (!std::isfinite(x) || !std::isfinite(y)) {
                    ok = false;
                    break;
                }
                buf[3 * k] = x * x;
                buf[3 * k + 1] = y * y;
                buf[3 * k + 2] = x * y;
            }
            if (!ok) {
                ++A.nan_paths;
                continue;
            }
            for (std::size_t j = 0; j < 3 * T; ++j) {
                A.s1[j] += buf[j];
                A.s2[j] += buf[j] * buf[j];
            }
        }
    });
    std::vector<double> s1(3 * T, 0.0), s2(3 * T, 0.0);
    std::int64_t nan_paths = 0;
    for (const auto& A : acc) {
        nan_paths += A.nan_paths;
        for (std::size_t j = 0; j < 3 * T; ++j) {
            s1[j] += A.s1[j];
            s2[j] += A.s2[j];
        }
    }
    const double n = static_cast<double>(cfg.n_paths - nan_paths);
    for (std::size_t k = 0; k < T; ++k) {
        std::vector<double> row(6);
        for (int j = 0; j < 3; ++j) {
            const double mean = s1[3 * k + j] / n;
            const double var = std::max(0.0, (s2[3 * k + j] - n * mean * mean) / (n - 1.0));
            row[j] = mean;
            row[3 + j] = std::sqrt(var / n);
        }
        tr.states.push_back(row);
    }
    LimitSystem ls;
    ls.system = sys;
    tr.metadata["limit_kind"] = "resonance3d_sde";
    tr.metadata["stable"] = limit_stability(ls).stable;
    tr.metadata["nan_paths"] = nan_paths;
    tr.metadata["n_paths"] = cfg.n_paths;
    tr.metadata["dt"] = dt;
    tr.metadata["seed"] = cfg.seed;
    return tr;
}

}  // namespace spm
