#pragma once
// Co-scaling of (p, B, eps, eta) with dimension, batch activation factors,
// geometric retention/drift coefficients, and the (kappa, gamma) phase map.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spm {

struct ScalingExponents {
    double kappa = 0.0;  // sparsity: p = p* d^-kappa
    double sigma = 0.0;  // batch: B = ceil(B* d^sigma)
    double gamma = 0.0;  // momentum: eps = eps* d^-gamma
    std::optional<double> alpha_eta;  // eta = eta* d^-alpha_eta; derived when empty
};

struct ScalingConstants {
    double p_star = 1.0;
    double B_star = 1.0;
    double eps_star = 1.0;
    double eta_star = 1.0;
};

struct InstanceParams {
    std::int64_t d = 2;
    double p = 1.0;
    std::int64_t B = 1;
    double eps = 1.0;  // primary; beta is derived so that beta + eps == 1
    double beta = 0.0;
    double eta = 0.0;
    std::vector<std::string> warnings;
};

// Validates and packs explicit instance parameters.
InstanceParams make_params(std::int64_t d, double p, std::int64_t B, double eps, double eta);

InstanceParams instantiate(const ScalingExponents& exps, const ScalingConstants& consts, std::int64_t d);

struct BatchFactors {
    double P_batch = 1.0;
    double Q_batch = 0.0;
    double log_Q = 0.0;  // B log(1-p); -inf when p == 1
    double B1 = 1.0;
    double B_diag = 1.0;
    double B_cross = 0.0;
    double B2 = 1.0;
};

BatchFactors batch_factors(double p, std::int64_t B, std::int64_t d);

struct RetentionDrift {
    double beta_bar1 = 0.0;       // E beta^K
    double beta_bar2 = 0.0;       // E beta^{2K}
    double one_minus_bb1 = 1.0;   // 1 - beta_bar1, cancellation-free
    double one_minus_bb2 = 1.0;   // 1 - beta_bar2, cancellation-free
    double delta_theta = 0.0;     // E S_K
    double delta_g = 0.0;         // E S_{K-1}
    double delta_theta2 = 0.0;    // E S_K^2
    double delta_g2 = 0.0;        // E S_{K-1}^2
    double delta_m1_theta = 0.0;  // E beta^K S_K
    double delta_m1_g = 0.0;      // E beta^K S_{K-1}
    double delta_theta_g = 0.0;   // E S_K S_{K-1}
    double rho = 1.0;             // eps / (P + eps)
    double nu = 0.0;              // max(0, gamma - kappa_eff); NaN without exponents
    double kappa_eff = 0.0;       // max(0, kappa - sigma); NaN without exponents
};

// K ~ Geom(P_batch) on {1,2,...}, S_j = beta (1 - beta^j) / eps.
RetentionDrift retention_drift(double beta, double P_batch);
// Same, with eps primary and Q passed separately so tiny eps or P keep full precision.
RetentionDrift retention_drift_eps(double eps, double P_batch, double Q_batch,
                                   const ScalingExponents* exps = nullptr);

enum class Region {
    A, B, C, D, E, F,
    ResonanceDense,
    ResonanceSparse,
    KappaEqSigmaAbove,
    KappaEqSigmaBelow,
    TriplePoint,
    NoiseCharacterLine,
};

std::string to_string(Region r);
Region region_from_string(const std::string& s);
bool is_interior(Region r);
// Regions whose limit is one-dimensional (retention faster than learning).
bool below_resonance(Region r);

constexpr double kBoundaryTol = 1e-12;

Region classify_region(const ScalingExponents& exps);

// Exponent e with eta_max ~ d^e.
double eta_max_exponent(Region region, const ScalingExponents& exps);

void validate_exponents(const ScalingExponents& exps);
void validate_constants(const ScalingConstants& consts, double gamma);

}  // namespace spm
