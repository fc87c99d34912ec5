#include "spm/stability.hpp"

#include "spm/numerics/roots.hpp"

#include <cmath>

namespace spm {

namespace {

double eval(const std::vector<double>& c, double x) {
    double acc = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) acc = acc * x + c[i];
    return acc;
}

StabilityVerdict verdict_at(const CharPolyEta& ce, double eta) {
    return routh_hurwitz(eval(ce.c1, eta), eval(ce.c2, eta), eval(ce.c3, eta));
}

}  // namespace

std::string to_string(HurwitzCondition c) {
    switch (c) {
        case HurwitzCondition::None: return "none";
        case HurwitzCondition::C1: return "c1>0";
        case HurwitzCondition::C2: return "c2>0";
        case HurwitzCondition::C3: return "c3>0";
        case HurwitzCondition::C1C2: return "c1c2>c3";
    }
    return "?";
}

std::string to_string(SpectralType t) {
    return t == SpectralType::AllAtRho ? "all-at-rho" : "one-slow-two-fast";
}

StabilityVerdict routh_hurwitz(double c1, double c2, double c3) {
    StabilityVerdict v;
    const double h = c1 * c2 - c3;
    v.c1_pos = c1 > 0.0;
    v.c2_pos = c2 > 0.0;
    v.c3_pos = c3 > 0.0;
    v.c1c2_gt_c3 = h > 0.0;
    v.stable = v.c1_pos && v.c2_pos && v.c3_pos && v.c1c2_gt_c3;
    v.margin = std::min(std::min(c1, c2), std::min(c3, h));
    if (!v.c1_pos) v.binding = HurwitzCondition::C1;
    else if (!v.c2_pos) v.binding = HurwitzCondition::C2;
    else if (!v.c3_pos) v.binding = HurwitzCondition::C3;
    else if (!v.c1c2_gt_c3) v.binding = HurwitzCondition::C1C2;
    return v;
}

StabilityVerdict routh_hurwitz(const CharPoly& cp) { return routh_hurwitz(cp.c1, cp.c2, cp.c3); }

EtaMaxResult find_eta_max(const InstanceParams& base, double rel_tol) {
    InstanceParams ip = base;
    ip.eta = 0.0;
    const DriftMatrix m = build_main_matrix(ip);
    const CharPolyEta ce = char_poly_eta(m);

    double lo = 1e-12, hi = 10.0;
    if (!verdict_at(ce, lo).stable) throw NumericalError("find_eta_max: no stable eta found");
    while (verdict_at(ce, hi).stable) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e15) throw NumericalError("find_eta_max: stable for all eta up to 1e15");
    }
    const double top = hi;
    while (hi / lo - 1.0 > rel_tol) {
        const double mid = std::sqrt(lo * hi);
        if (verdict_at(ce, mid).stable) lo = mid;
        else hi = mid;
    }
    EtaMaxResult res;
    res.eta_max = lo;
    const StabilityVerdict above = verdict_at(ce, hi);
    res.binding = above.binding;
    if (!above.c3_pos && !above.c1c2_gt_c3) res.binding = HurwitzCondition::C3;

    // Scan the bracket for additional verdict flips.
    const int n = 240;
    bool prev = true;
    for (int i = 0; i <= n; ++i) {
        const double eta = std::exp(std::log(1e-12) + (std::log(top) - std::log(1e-12)) * i / n);
        const bool s = verdict_at(ce, eta).stable;
        if (s != prev) res.sign_changes.push_back(eta);
        prev = s;
    }
    res.monotone = res.sign_changes.size() <= 1;
    return res;
}

EtaMaxResult find_eta_max(const ScalingExponents& exps, const ScalingConstants& consts, std::int64_t d,
                          double rel_tol) {
    ScalingExponents e = exps;
    e.alpha_eta = 0.0;
    return find_eta_max(instantiate(e, consts, d), rel_tol);
}

TimescaleReport spectrum_report(const DriftMatrix& m) {
    TimescaleReport r;
    r.rho = m.retention.rho;
    const double rate = m.params.eta * m.batch.B1;
    r.tau_learn = rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
    r.Delta = rate / r.rho;
    const CharPoly cp = char_poly(m);
    r.eigenvalues = cubic_roots(cp.c1, cp.c2, cp.c3);
    int slow = 0;
    for (const auto& z : r.eigenvalues)
        if (std::abs(z) < 0.1 * r.rho) ++slow;
    r.spectral_type = slow == 1 ? SpectralType::OneSlowTwoFast : SpectralType::AllAtRho;
    return r;
}

}  // namespace spm
