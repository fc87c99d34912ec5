#pragma once
// Logistic regression on a rare-class Gaussian mixture with the bias pinned
// at its Bayes value: Gaussian-sigmoid coefficients, the five-variable
// moment ODE, per-region reduced systems, slow-manifold equilibria, and the
// population KL.

#include "spm/numerics/linalg3.hpp"
#include "spm/scaling.hpp"
#include "spm/trajectory.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace spm {

struct LrParams {
    double r = 1.0;  // signal norm |mu|
    double p = 0.01;
    std::int64_t B = 1;
    double eps = 1.0;
    double beta = 0.0;
    double eta = 0.0;
    std::int64_t d = 2;

    double b_star() const;  // log(p / (1 - p)) - r^2 / 2
};

LrParams make_lr_params(double r, double p, std::int64_t B, double eps, double eta, std::int64_t d);

// Signal error s = <theta - mu, mu_hat>, parallel momentum u, and the
// orthogonal second moments.
struct LrState {
    double s = 0.0;
    double u = 0.0;
    double R_perp = 0.0;
    double V_perp = 0.0;
    double C_perp = 0.0;

    double theta_par(double r) const { return s + r; }
    double q(double r) const { return theta_par(r) * theta_par(r) + R_perp; }
    double alpha(double r) const;  // exp((q - r^2) / 2)
    bool valid() const;

    std::array<double, 5> array() const { return {s, u, R_perp, V_perp, C_perp}; }
    static LrState from(const std::array<double, 5>& x) { return {x[0], x[1], x[2], x[3], x[4]}; }
};

struct LrCoefficients {
    double A = 0.0;
    double Bcoef = 0.0;
    double D0 = 0.0;
    double Dtheta = 0.0;
    double f = 0.0;           // A theta_par + Bcoef r
    double N_perp_bar = 0.0;  // batched orthogonal noise
    double quad_rel_diff = 0.0;  // largest 64-vs-128 node disagreement (exact mode)
};

enum class CoeffMode { Exact, Tame };
std::string to_string(CoeffMode m);
CoeffMode coeff_mode_from_string(const std::string& s);

constexpr double kQuadTol = 1e-8;
constexpr double kTameRMax = 50.0;

// Gauss-Hermite evaluation at `order` nodes, cross-checked against twice
// the order. Throws NumericalError when the two disagree beyond kQuadTol.
LrCoefficients coefficients_exact(const LrState& x, const LrParams& prm, int order = 64);
LrCoefficients coefficients_tame(const LrState& x, const LrParams& prm, double R_max = kTameRMax);
LrCoefficients coefficients(const LrState& x, const LrParams& prm, CoeffMode mode);

// Batched orthogonal noise from the per-sample coefficients.
double batched_noise(const LrCoefficients& c, const LrParams& prm, double R_perp);

// Expected one-step change of the five-tuple.
LrState drift_5var(const LrState& x, const LrParams& prm, CoeffMode mode);

struct Lr5Options {
    double rtol = 1e-8;
    double atol = 1e-12;
    bool with_kl = true;         // fill the kl column
    bool force_fallback = false; // skip the explicit pair (testing hook)
    double fallback_step = 0.0;  // 0 picks 0.05 / eps
};

// Integrates the five-variable ODE on the step clock. Columns s, u, R_perp,
// V_perp, C_perp, alpha, kl. Throws NumericalError with a time stamp when the
// state leaves the tame regime (R_perp > 50 or |s + r| > 10).
Trajectory evolve_5var(const LrState& initial, const LrParams& prm, const std::vector<double>& times,
                       CoeffMode mode, const Lr5Options& opts = {});

// Zero of drift_5var by damped Newton from `guess`.
LrState steady_state_5var(const LrParams& prm, CoeffMode mode, const LrState& guess);

// ---- co-scaling and regions ----

enum class LrRegion { ConcentratedAbove, NoiseFloorAbove, NoiseFloorBelow, BoundaryE, BoundaryF, Empty };
std::string to_string(LrRegion r);
LrRegion lr_region_from_string(const std::string& s);

// Concentrated iff kappa < sigma - 1; above resonance iff gamma > 1 - sigma + kappa.
LrRegion classify_lr_region(const ScalingExponents& exps, double tol = kBoundaryTol);

// gamma - kappa above resonance and on both boundaries, 1 - sigma below.
double lr_alpha_eta(const ScalingExponents& exps);

struct LrConstants {
    double p_star = 1.0;
    double B_star = 1.0;
    double eps_star = 1.0;
    double eta_star = 1.0;
    double r = 1.0;
};

LrParams instantiate_lr(const ScalingExponents& exps, const LrConstants& c, std::int64_t d);

// Reduced limit system in region-specific rescaled coordinates on the slow
// clock tau = t / d^clock_power.
struct ReducedSystem {
    LrRegion region = LrRegion::ConcentratedAbove;
    double clock_power = 0.0;
    std::vector<std::string> columns;
    std::function<void(const std::vector<double>&, std::vector<double>&)> rhs;
    // Finite-d five-tuple to the reduced coordinates.
    std::function<std::vector<double>(const LrState&, const LrParams&)> project;
};

// Above resonance and on F: the 5D heavy-ball skeleton (s, u/p, R, V/p^2,
// C/p) with the full alpha(s, R) coupling. E: the same block structure with
// d-power rebalancing and the surviving V pump. Below: the 2D slow manifold.
// Throws for the empty corner and for E at gamma = 0.
ReducedSystem reduced_system(const ScalingExponents& exps, const LrConstants& c);

// Fixed-step-free integration of a reduced system on a tau grid.
Trajectory evolve_reduced(const ReducedSystem& sys, const std::vector<double>& y0, const std::vector<double>& tau);

// Volterra lift of the heavy-ball bulk: (x, y) with R = x^2, V = y^2, C = x y.
// State (s, u, x, y).
void phase2_volterra_rhs(const LrConstants& c, const std::vector<double>& y, std::vector<double>& dy);

struct LrComparison {
    std::vector<double> d_values;
    std::vector<double> sup_err_s;  // sup |s_d - s_lim|
    std::vector<double> sup_err_R;  // sup |R_d - R_lim| / sup |R_lim|
    bool shrinking = true;
    std::vector<double> tau;
    Trajectory reduced;               // reduced system on the tau grid
    std::vector<Trajectory> full;     // per d, projected to the reduced columns
};

// Full sparse-limit (tame) ODE at each d against the reduced system, both on
// the region's slow clock, from (s, R_perp) = initial with zero momentum.
LrComparison compare_lr_reduced(const ScalingExponents& exps, const LrConstants& c,
                                const std::vector<std::int64_t>& d_values, const std::vector<double>& tau,
                                double s0, double R0);

// ---- slow-manifold equilibrium ----

struct SlowEquilibrium {
    double s_star = 0.0;
    double R_star = 0.0;
    double alpha_star = 1.0;
    std::array<double, 3> residuals{};  // the three equilibrium equations
    int iterations = 0;
};

SlowEquilibrium equilibrium_slow(double r, double eta_eff);

// Residuals of alpha (s + r) = r, R = eta_eff / (2 alpha), alpha = exp(...).
std::array<double, 3> equilibrium_residuals(double r, double eta_eff, double s, double R, double alpha);

// Root of R exp(R / (2 (1 + r^2))) = eta_eff / 2.
double floor_leading_order(double r, double eta_eff);

struct SlowJacobian {
    Eigen::Matrix2d exact;          // analytic Jacobian of the slow RHS
    Eigen::Matrix2d leading_order;  // -c alpha [[1+r^2, r/2], [2 r R, 2 + R]]
    std::array<double, 2> eigenvalues{};  // of `exact`, ascending
    double discriminant = 0.0;            // of `leading_order`
};

// Slow RHS of the below-resonance manifold; c = eta* p*.
std::array<double, 2> slow_rhs(double s, double R, double r, double c, double eta_eff);
SlowJacobian jacobian_slow(double s_star, double R_star, double r, double eta_star, double p_star);

// ---- population KL ----

struct KlResult {
    double value = 0.0;
    double quad_rel_diff = 0.0;
    bool flagged = false;  // 40 vs 64 nodes disagree beyond kQuadTol
};

KlResult kl_pop_checked(double s, double R_perp, double r, double p);
double kl_pop(double s, double R_perp, double r, double p);

// Normalized leading KL coefficient alpha - 1 - s r.
double kl_leading(double s, double R_perp, double r);

// ---- heatmaps ----

struct LrHeatCell {
    double kappa = 0.0;
    double gamma = 0.0;
    LrRegion region = LrRegion::Empty;
    bool floor_is_exponent = false;
    double floor = 0.0;          // R* value, or its d-exponent when floor_is_exponent
    double floor_leading = 0.0;  // eta* / (2 B*) below resonance and on E
    double T_exponent = 0.0;     // max(gamma, 1 - sigma + kappa)
};

std::vector<LrHeatCell> lr_heatmaps(const std::vector<double>& kappas, const std::vector<double>& gammas,
                                    double sigma, const LrConstants& c);

}  // namespace spm
