#pragma once
// Routh-Hurwitz verdicts, the maximal stable learning rate, and the
// retention/learning timescale report.

#include "spm/ls_moment_ode.hpp"

#include <string>
#include <vector>

namespace spm {

enum class HurwitzCondition { None, C1, C2, C3, C1C2 };
std::string to_string(HurwitzCondition c);

struct StabilityVerdict {
    bool stable = false;
    bool c1_pos = false, c2_pos = false, c3_pos = false, c1c2_gt_c3 = false;
    HurwitzCondition binding = HurwitzCondition::None;  // most violated condition
    double margin = 0.0;                                // min(c1, c2, c3, c1 c2 - c3)
};

StabilityVerdict routh_hurwitz(double c1, double c2, double c3);
StabilityVerdict routh_hurwitz(const CharPoly& cp);

struct EtaMaxResult {
    double eta_max = 0.0;
    HurwitzCondition binding = HurwitzCondition::None;  // first condition lost above eta_max
    bool monotone = true;                               // single sign change on the scan
    std::vector<double> sign_changes;                   // approximate eta of every verdict flip
};

// Largest stable eta at fixed (p, B, eps, d), bisected in log eta.
EtaMaxResult find_eta_max(const InstanceParams& base, double rel_tol = 1e-6);
EtaMaxResult find_eta_max(const ScalingExponents& exps, const ScalingConstants& consts, std::int64_t d,
                          double rel_tol = 1e-6);

enum class SpectralType { AllAtRho, OneSlowTwoFast };
std::string to_string(SpectralType t);

struct TimescaleReport {
    double rho = 0.0;
    double tau_learn = 0.0;  // 1 / (eta B1)
    double Delta = 0.0;      // eta B1 / rho
    std::array<cplx, 3> eigenvalues{};
    SpectralType spectral_type = SpectralType::AllAtRho;
};

TimescaleReport spectrum_report(const DriftMatrix& m);

}  // namespace spm
