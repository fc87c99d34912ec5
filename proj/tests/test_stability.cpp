#include <doctest.h>

#include "spm/numerics/rng.hpp"
#include "spm/stability.hpp"

#include <cmath>

using namespace spm;

namespace {

double slope(const ScalingExponents& e, const ScalingConstants& c) {
    std::vector<double> x, y;
    for (double d : {1e2, 1e3, 1e4}) {
        x.push_back(std::log(d));
        y.push_back(std::log(find_eta_max(e, c, static_cast<std::int64_t>(d)).eta_max));
    }
    const double mx = (x[0] + x[1] + x[2]) / 3, my = (y[0] + y[1] + y[2]) / 3;
    double num = 0, den = 0;
    for (int i = 0; i < 3; ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return num / den;
}

}  // namespace

TEST_CASE("Routh-Hurwitz verdicts") {
    auto v = routh_hurwitz(1, 1, 0.5);
    CHECK(v.stable);
    CHECK(v.margin == doctest::Approx(0.5));
    v = routh_hurwitz(1, 1, 2);
    CHECK_FALSE(v.stable);
    CHECK(v.binding == HurwitzCondition::C1C2);
    v = routh_hurwitz(1, 1, 0);
    CHECK_FALSE(v.stable);
    CHECK(v.binding == HurwitzCondition::C3);
}

TEST_CASE("eta_max at zero momentum matches the discrete edge 2/(d+2)") {
    for (std::int64_t d : {8, 100, 1000}) {
        const auto r = find_eta_max(make_params(d, 1.0, 1, 1.0, 0.0));
        CHECK(r.eta_max == doctest::Approx(2.0 / (d + 2)).epsilon(2e-6));
        CHECK(r.monotone);
        CHECK(r.binding == HurwitzCondition::C3);
    }
}

TEST_CASE("eta_max slopes") {
    const ScalingConstants c{1, 1, 1, 1};
    // Noise-limited regions follow sigma - 1.
    CHECK(std::fabs(slope({0.85, 1.2, 0.325, {}}, c) - 0.2) < 0.05);
    CHECK(std::fabs(slope({2.2, 1.2, 0.5, {}}, c) - 0.2) < 0.05);
    // Above resonance the exact drift is still noise-limited: the O(eta)
    // damping in c1 and c2 keeps c1 c2 > c3, so the slope is sigma - 1 rather
    // than kappa - gamma.
    CHECK(std::fabs(slope({2.2, 1.2, 2.6, {}}, c) - 0.2) < 0.05);
}

TEST_CASE("verdicts agree with eigenvalue real parts") {
    RngStream s(53, 0);
    int compared = 0;
    for (int i = 0; i < 500; ++i) {
        const auto d = static_cast<std::int64_t>(2 + s.geometric(0.003));
        const double p = std::exp(-6 * s.uniform()), eps = std::exp(-7 * s.uniform());
        const auto B = static_cast<std::int64_t>(s.geometric(0.05));
        InstanceParams ip = make_params(d, p, B, eps, 0.0);
        const double emax = find_eta_max(ip).eta_max;
        ip.eta = emax * std::exp(2.0 * (s.uniform() - 0.5));
        const auto m = build_main_matrix(ip);
        const auto v = routh_hurwitz(char_poly(m));
        const Eigen::Vector3cd ev = m.matrix().eigenvalues();
        double maxre = -1e300, maxabs = 0;
        for (int k = 0; k < 3; ++k) {
            maxre = std::max(maxre, ev(k).real());
            maxabs = std::max(maxabs, std::abs(ev(k)));
        }
        if (std::fabs(maxre) <= 1e-9 * maxabs) continue;
        ++compared;
        CHECK(v.stable == (maxre < 0));
        if (ip.eta <= emax) {
            CHECK(v.c1_pos);
            CHECK(v.c2_pos);
        }
    }
    CHECK(compared > 400);
}

TEST_CASE("binding-constraint map over the phase plane") {
    // c3 binds on the whole grid; the correlation inequality keeps positive slack at eta_max.
    const double sigma = 1.2;
    const int n = 40;
    int total = 0, noise_binds = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double k = 3.0 * (i + 0.5) / n, g = 3.0 * (j + 0.5) / n;
            const ScalingExponents e{k, sigma, g, {}};
            const Region r = classify_region(e);
            if (!is_interior(r)) continue;
            const auto res = find_eta_max(e, {}, 1000);
            ++total;
            noise_binds += res.binding == HurwitzCondition::C3;
            ScalingExponents ee = e;
            ee.alpha_eta = 0.0;
            InstanceParams ip = instantiate(ee, {}, 1000);
            ip.eta = res.eta_max * (1 - 1e-6);
            const auto cp = char_poly(build_main_matrix(ip));
            CHECK(cp.c1 * cp.c2 > cp.c3);
        }
    CHECK(total > 1000);
    CHECK(noise_binds == total);
}

TEST_CASE("spectrum report") {
    // Below resonance: one slow eigenvalue near c3/c2, slow/rho shrinking with d.
    double prev = 1e300;
    for (std::int64_t d : {100, 1000, 10000}) {
        const ScalingExponents e{0.85, 1.2, 0.325, 0.0};
        InstanceParams ip = instantiate(e, {}, d);
        ip.eta = 0.5 * find_eta_max(ip).eta_max;
        const auto m = build_main_matrix(ip);
        const auto rep = spectrum_report(m);
        const auto cp = char_poly(m);
        const double slow = std::abs(rep.eigenvalues[0]);
        CHECK(slow / (cp.c3 / cp.c2) > 0.5);
        CHECK(slow / (cp.c3 / cp.c2) < 2.0);
        CHECK(slow / rep.rho < prev);
        prev = slow / rep.rho;
        for (int k = 1; k < 3; ++k) {
            CHECK(std::abs(rep.eigenvalues[k]) / rep.rho > 0.05);
            CHECK(std::abs(rep.eigenvalues[k]) / rep.rho < 20);
        }
        if (d == 10000) CHECK(rep.spectral_type == SpectralType::OneSlowTwoFast);
        CHECK(rep.Delta == doctest::Approx((1 / rep.rho) / rep.tau_learn));
    }
    // Above resonance with eta ~ rho / B1: every mode on the retention scale.
    for (std::int64_t d : {100, 1000, 10000}) {
        const InstanceParams ip = instantiate({0.85, 1.2, 1.15, {}}, {}, d);
        const auto rep = spectrum_report(build_main_matrix(ip));
        for (const auto& z : rep.eigenvalues) {
            CHECK(std::abs(z) / rep.rho >= 0.05);
            CHECK(std::abs(z) / rep.rho <= 20);
        }
        CHECK(rep.spectral_type == SpectralType::AllAtRho);
    }
    // c3 = 0 gives an exact zero eigenvalue.
    const auto m0 = build_main_matrix(make_params(100, 0.1, 4, 0.1, 0.0));
    CHECK(spectrum_report(m0).eigenvalues[0] == cplx(0.0));
}
