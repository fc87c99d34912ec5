#pragma once
// Per-region limit systems of the least-squares moment dynamics, the
// diagonal balancing used to compare them with the finite-d drift, and the
// stochastic 2D lift on the resonance line.

#include "spm/ls_moment_ode.hpp"
#include "spm/scaling.hpp"
#include "spm/stability.hpp"
#include "spm/trajectory.hpp"

#include <string>
#include <variant>
#include <vector>

namespace spm {

// dR/dtau = -c_eff R.
struct Sgd1D {
    double c_eff = 0.0;
    double clock_power = 1.0;
    double eta_eff = 0.0;    // eta d / B in the limit
    double prefactor = 1.0;  // c_eff / (eta_eff (2 - eta_eff))
};

// x' = -rate eta_bar y, y' = rate (x - y).
struct HeavyBall2D {
    double rate = 1.0;
    double eta_bar = 0.0;
    double clock_power = 0.0;
};

// Heavy-ball moments with the resonant feedthrough xi R in the V equation.
struct Resonance3D {
    double rho_star = 1.0;
    double eta_bar = 0.0;
    double xi_star = 0.0;
    double clock_power = 1.0;
    double zeta_star() const { return xi_star / rho_star; }
};

struct LimitSystem {
    std::variant<Sgd1D, HeavyBall2D, Resonance3D> system;
    Region region = Region::A;
    bool supported = true;  // false where only strict-interior constants are known
    std::string note;

    std::string kind() const;  // "sgd1d", "heavy_ball2d", "resonance3d"
    double clock_power() const;
};

LimitSystem select_limit(const ScalingExponents& exps, const ScalingConstants& consts);

// 3x3 moment drift on (R, V, C) for the 2D and 3D variants.
Mat3 limit_matrix(const LimitSystem& sys);
StabilityVerdict limit_stability(const LimitSystem& sys);

// Exact solution on the slow clock. For HeavyBall2D the moments come from
// the square-root lift when the initial state satisfies R V = C^2.
Trajectory evolve_limit(const LimitSystem& sys, const MomentState& initial, const std::vector<double>& tau);

// Heavy-ball state (x, y) at time tau.
std::array<double, 2> heavy_ball_xy(const HeavyBall2D& hb, double x0, double y0, double tau);

// Resonance3D normalized cubic in mu = lambda / rho_star and its discriminant.
CharPoly resonance_cubic(const Resonance3D& r);
double resonance_discriminant(const Resonance3D& r);

// Comparison coordinates y = D^{-1} x for x = (R, W, Z).
struct BalancingTransform {
    std::array<double, 3> diag{1.0, 1.0, 1.0};
    double clock_power = 0.0;
};

BalancingTransform balancing_transform(Region region, const DriftMatrix& m, const ScalingExponents& exps);

// D^{-1} (d^power scaled drift) D, the finite-d counterpart of limit_matrix.
Mat3 balanced_matrix(const DriftMatrix& m, const BalancingTransform& t);

// Main drift at dimension d on the slow clock of the region's limit, in
// comparison coordinates scaled so that R is unchanged (raw V and C for
// one-dimensional limits).
Trajectory main_on_slow_clock(const ScalingExponents& exps, const ScalingConstants& consts, std::int64_t d,
                              const std::vector<double>& tau, const MomentState& initial = {});

struct LimitComparison {
    std::vector<double> d_values;
    std::vector<double> sup_rel_error;  // sup |R_main - R_lim| / sup |R_lim| on the grid
    bool monotone = true;               // nonincreasing in d
    std::vector<double> tau;
};

// Default slow-clock window: eight e-folds of the slowest limit mode.
std::vector<double> default_limit_grid(const LimitSystem& sys, std::size_t n = 400);

LimitComparison compare_main_limit(const ScalingExponents& exps, const ScalingConstants& consts,
                                   const std::vector<std::int64_t>& d_values, std::vector<double> tau = {});

struct SdeConfig {
    std::int64_t n_paths = 10000;
    double dt = 0.0;  // 0 picks 0.002 / rho_star
    std::uint64_t seed = 0;
    int threads = 0;
};

// Euler-Maruyama ensemble of dX = -rho eta_bar Y dtau,
// dY = rho (X - Y) dtau + sqrt(xi) X dB. Columns R, V, C and their
// standard errors; metadata records NaN paths and stability.
Trajectory sde_lift_simulate(const Resonance3D& sys, double x0, double y0, const std::vector<double>& tau,
                             const SdeConfig& cfg);

}  // namespace spm
