#include "spm/scaling.hpp"

#include "spm/closed_forms.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spm {

void validate_exponents(const ScalingExponents& e) {
    for (double v : {e.kappa, e.sigma, e.gamma})
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("exponents kappa, sigma, gamma must be finite and >= 0");
    if (e.alpha_eta && !std::isfinite(*e.alpha_eta)) throw std::invalid_argument("alpha_eta must be finite");
}

void validate_constants(const ScalingConstants& c, double gamma) {
    for (double v : {c.p_star, c.B_star, c.eps_star, c.eta_star})
        if (!std::isfinite(v) || v <= 0.0) throw std::invalid_argument("scaling constants must be finite and > 0");
    if (gamma == 0.0 && c.eps_star > 1.0) throw std::invalid_argument("eps_star>1 with gamma=0");
}

InstanceParams make_params(std::int64_t d, double p, std::int64_t B, double eps, double eta) {
    if (d < 2) throw std::invalid_argument("dimension d must be >= 2");
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("gate probability p must lie in (0,1]");
    if (B < 1) throw std::invalid_argument("batch size B must be >= 1");
    if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("eps = 1 - beta must lie in (0,1]");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("learning rate must be finite and >= 0");
    InstanceParams ip;
    ip.d = d;
    ip.p = p;
    ip.B = B;
    ip.eps = eps;
    ip.beta = 1.0 - eps;
    ip.eta = eta;
    return ip;
}

InstanceParams instantiate(const ScalingExponents& e, const ScalingConstants& c, std::int64_t d) {
    validate_exponents(e);
    validate_constants(c, e.gamma);
    if (d < 2) throw std::invalid_argument("dimension d must be >= 2");
    const double dd = static_cast<double>(d);
    std::vector<std::string> warnings;

    double p = c.p_star * std::pow(dd, -e.kappa);
    if (p > 1.0) {
        std::ostringstream os;
        os << "p clamped to 1 (raw value " << p << ")";
        warnings.push_back(os.str());
        p = 1.0;
    }
    const double braw = c.B_star * std::pow(dd, e.sigma);
    const auto B = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(braw * (1.0 - 1e-12))));
    double eps = c.eps_star * std::pow(dd, -e.gamma);
    if (eps > 1.0) {
        std::ostringstream os;
        os << "eps clamped to 1 (raw value " << eps << ")";
        warnings.push_back(os.str());
        eps = 1.0;
    }
    const double alpha = e.alpha_eta ? *e.alpha_eta : -eta_max_exponent(classify_region(e), e);
    const double eta = c.eta_star * std::pow(dd, -alpha);
    InstanceParams ip = make_params(d, p, B, eps, eta);
    ip.warnings = std::move(warnings);
    return ip;
}

BatchFactors batch_factors(double p, std::int64_t B, std::int64_t d) {
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("batch_factors: p must lie in (0,1]");
    if (B < 1 || d < 1) throw std::invalid_argument("batch_factors: B and d must be positive");
    BatchFactors bf;
    const double Bd = static_cast<double>(B);
    if (p == 1.0) {
        bf.log_Q = -std::numeric_limits<double>::infinity();
        bf.Q_batch = 0.0;
        bf.P_batch = 1.0;
    } else {
        bf.log_Q = Bd * std::log1p(-p);
        bf.Q_batch = std::exp(bf.log_Q);
        bf.P_batch = -std::expm1(bf.log_Q);
    }
    bf.B1 = p / bf.P_batch;
    bf.B_diag = bf.B1 / Bd;
    bf.B_cross = p * (Bd - 1.0) * bf.B_diag;
    bf.B2 = (static_cast<double>(d) + 2.0) * bf.B_diag + bf.B_cross;
    return bf;
}

RetentionDrift retention_drift(double beta, double P_batch) {
    if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("retention_drift: beta must lie in [0,1)");
    if (!(P_batch > 0.0 && P_batch <= 1.0)) throw std::invalid_argument("retention_drift: P_batch must lie in (0,1]");
    return retention_drift_eps(1.0 - beta, P_batch, 1.0 - P_batch);
}

RetentionDrift retention_drift_eps(double eps, double P, double Q, const ScalingExponents* exps) {
    if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("retention_drift: eps must lie in (0,1]");
    if (!(P > 0.0 && P <= 1.0)) throw std::invalid_argument("retention_drift: P_batch must lie in (0,1]");
    const RetentionTerms<double> t = retention_terms(eps, P, Q);
    RetentionDrift r;
    r.beta_bar1 = t.bb1;
    r.beta_bar2 = t.bb2;
    r.one_minus_bb1 = t.om1;
    r.one_minus_bb2 = t.om2;
    r.delta_theta = t.dth;
    r.delta_g = t.dg;
    r.delta_theta2 = t.dth2;
    r.delta_g2 = t.dg2;
    r.delta_theta_g = t.dthg;
    r.delta_m1_theta = t.dm1th;
    r.delta_m1_g = t.dm1g;
    r.rho = eps / (P + eps);
    if (exps) {
        r.kappa_eff = std::max(0.0, exps->kappa - exps->sigma);
        r.nu = std::max(0.0, exps->gamma - r.kappa_eff);
    } else {
        r.kappa_eff = std::numeric_limits<double>::quiet_NaN();
        r.nu = std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

std::string to_string(Region r) {
    switch (r) {
        case Region::A: return "A";
        case Region::B: return "B";
        case Region::C: return "C";
        case Region::D: return "D";
        case Region::E: return "E";
        case Region::F: return "F";
        case Region::ResonanceDense: return "ResonanceDense";
        case Region::ResonanceSparse: return "ResonanceSparse";
        case Region::KappaEqSigmaAbove: return "KappaEqSigmaAbove";
        case Region::KappaEqSigmaBelow: return "KappaEqSigmaBelow";
        case Region::TriplePoint: return "TriplePoint";
        case Region::NoiseCharacterLine: return "NoiseCharacterLine";
    }
    return "?";
}

Region region_from_string(const std::string& s) {
    for (Region r : {Region::A, Region::B, Region::C, Region::D, Region::E, Region::F, Region::ResonanceDense,
                     Region::ResonanceSparse, Region::KappaEqSigmaAbove, Region::KappaEqSigmaBelow,
                     Region::TriplePoint, Region::NoiseCharacterLine})
        if (to_string(r) == s) return r;
    throw std::invalid_argument("unknown region tag: " + s);
}

bool is_interior(Region r) {
    return r == Region::A || r == Region::B || r == Region::C || r == Region::D || r == Region::E || r == Region::F;
}

bool below_resonance(Region r) {
    return r == Region::B || r == Region::D || r == Region::E || r == Region::KappaEqSigmaBelow;
}

Region classify_region(const ScalingExponents& e) {
    validate_exponents(e);
    const double k = e.kappa, s = e.sigma, g = e.gamma;
    const double res = 1.0 - s + k;
    if (std::fabs(k - s) <= kBoundaryTol) {
        if (std::fabs(g - 1.0) <= kBoundaryTol) return Region::TriplePoint;
        return g > 1.0 ? Region::KappaEqSigmaAbove : Region::KappaEqSigmaBelow;
    }
    if (std::fabs(k - (s - 1.0)) <= kBoundaryTol) return Region::NoiseCharacterLine;
    if (k < s - 1.0) return Region::A;
    if (std::fabs(g - res) <= kBoundaryTol) return k < s ? Region::ResonanceDense : Region::ResonanceSparse;
    if (k < s) return g < res ? Region::B : Region::C;
    if (g <= k - s) return Region::D;
    return g < res ? Region::E : Region::F;
}

double eta_max_exponent(Region region, const ScalingExponents& e) {
    switch (region) {
        case Region::A:
        case Region::C:
        case Region::F:
        case Region::KappaEqSigmaAbove:
        case Region::NoiseCharacterLine:
            return e.kappa - e.gamma;
        case Region::B:
        case Region::D:
        case Region::E:
        case Region::KappaEqSigmaBelow:
        case Region::ResonanceDense:
        case Region::ResonanceSparse:
        case Region::TriplePoint:
            return e.sigma - 1.0;
    }
    return e.sigma - 1.0;
}

}  // namespace spm
