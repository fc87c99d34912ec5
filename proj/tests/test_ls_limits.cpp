#include <doctest.h>

#include "spm/ls_limits.hpp"
#include "spm/numerics/linalg3.hpp"
#include "spm/numerics/rng.hpp"
#include "spm/numerics/roots.hpp"

#include <cmath>

using namespace spm;

namespace {

// Exact second moments of one Euler-Maruyama step of the lifted SDE.
Mat3 em_moment_step(const Resonance3D& r, double h) {
    const double a = r.rho_star * r.eta_bar * h, q = r.rho_star * h;
    Mat3 m;
    m << 1, a * a, -2 * a,                                         //
        q * q + r.xi_star * h, (1 - q) * (1 - q), 2 * q * (1 - q),  //
        q, -a * (1 - q), (1 - q) - a * q;
    return m;
}

bool non_monotone(const Trajectory& tr) {
    for (std::size_t i = 1; i < tr.size(); ++i)
        if (tr.states[i][0] > tr.states[i - 1][0] + 1e-15) return true;
    return false;
}

}  // namespace

TEST_CASE("select_limit examples") {
    auto dense = select_limit({0.85, 1.2, 1.15, {}}, {1, 1, 1, 0.2});
    REQUIRE(dense.kind() == "heavy_ball2d");
    const auto& hb = std::get<HeavyBall2D>(dense.system);
    CHECK(hb.rate == 1.0);
    CHECK(hb.eta_bar == doctest::Approx(0.2));
    CHECK(hb.clock_power == doctest::Approx(1.15));

    auto below = select_limit({1.2, 1.2, 0.5, {}}, {1, 1, 1, 0.2});
    REQUIRE(below.kind() == "sgd1d");
    const auto& s = std::get<Sgd1D>(below.system);
    CHECK(s.prefactor == doctest::Approx(1.581976706869326).epsilon(1e-12));
    CHECK(s.clock_power == 1.0);
    CHECK(s.c_eff == doctest::Approx(1.581976706869326 * 0.2 * 1.8).epsilon(1e-12));

    // chi* -> 1 as p* B* -> 0.
    auto tiny = select_limit({1.2, 1.2, 0.5, {}}, {1e-9, 1, 1, 0.2});
    CHECK(std::get<Sgd1D>(tiny.system).prefactor == doctest::Approx(1.0).epsilon(1e-8));

    auto sparse = select_limit({2.2, 1.2, 2.6, {}}, {2.0, 0.5, 0.3, 0.2});
    const auto& hs = std::get<HeavyBall2D>(sparse.system);
    CHECK(hs.rate == doctest::Approx(0.3 / 1.0));
    CHECK(hs.clock_power == doctest::Approx(1.6));

    auto dense_below = select_limit({0.85, 1.2, 0.325, {}}, {0.5, 2.0, 1, 0.2});
    const auto& sb = std::get<Sgd1D>(dense_below.system);
    CHECK(sb.c_eff == doctest::Approx(0.2 * 0.5 * (2 - 0.1)));
    CHECK(sb.clock_power == doctest::Approx(0.65));

    auto nc = select_limit({0.2, 1.2, 0.5, {}}, {1, 1, 1, 0.2});
    CHECK(nc.region == Region::NoiseCharacterLine);
    CHECK_FALSE(nc.supported);

    CHECK_THROWS(select_limit({0.5, 1.2, -0.1, {}}, {}));
}

TEST_CASE("triple-point Hurwitz threshold at eta* = 2 B*") {
    for (double Bs : {0.5, 1.0, 3.0}) {
        auto stable = [&](double eta_star) {
            return limit_stability(select_limit({1.2, 1.2, 1.0, {}}, {1.0, Bs, 1.0, eta_star})).stable;
        };
        CHECK(stable(2 * Bs * 0.999));
        CHECK_FALSE(stable(2 * Bs * 1.001));
        const auto root = bisect_1d([&](double x) { return stable(x) ? 1.0 : -1.0; }, 0.1, 10.0 * Bs, 1e-9);
        CHECK(std::fabs(root.root - 2 * Bs) < 1e-6);
        const auto sys = select_limit({1.2, 1.2, 1.0, {}}, {1.0, Bs, 1.0, 2 * Bs});
        CHECK(std::fabs(char_poly(limit_matrix(sys)).c3) < 1e-12);
    }
}

TEST_CASE("evolve_limit closed forms") {
    auto sgd = select_limit({2.2, 1.2, 0.4, {}}, {1, 1, 1, 1.0});
    CHECK(std::get<Sgd1D>(sgd.system).c_eff == 1.0);
    const auto tr = evolve_limit(sgd, {}, {0.0, 1.0, 3.0});
    CHECK(tr.states[1][0] == doctest::Approx(std::exp(-1.0)));
    CHECK(tr.states[2][0] == doctest::Approx(std::exp(-3.0)));

    // Critical damping at eta_bar = 1/4.
    const HeavyBall2D hb{2.0, 0.25, 1.0};
    const double disc = hb.rate * hb.rate - 4 * hb.rate * hb.rate * hb.eta_bar;
    CHECK(disc == 0.0);
    const auto xy = heavy_ball_xy(hb, 1.0, 0.0, 1.5);
    // Double root -rate/2: x(t) = (1 + rate t / 2) e^{-rate t / 2} for x0 = 1, y0 = 0.
    CHECK(xy[0] == doctest::Approx((1 + 1.5) * std::exp(-1.5)).epsilon(1e-12));

    // Oscillation switch.
    for (double eb : {0.1, 0.5}) {
        LimitSystem sys;
        sys.system = HeavyBall2D{1.0, eb, 1.0};
        const auto t = evolve_limit(sys, {}, linspace(0, 60, 3000));
        CHECK(non_monotone(t) == (eb > 0.25));
    }
}

TEST_CASE("square-root lift matches the 3D moment drift") {
    RngStream s(101, 0);
    for (int i = 0; i < 100; ++i) {
        const HeavyBall2D hb{0.1 + s.uniform() * 3, s.uniform() * 2, 1.0};
        LimitSystem sys;
        sys.system = hb;
        const Mat3 a = limit_matrix(sys);
        const double x = s.normal(), y = s.normal();
        const double dx = -hb.rate * hb.eta_bar * y, dy = hb.rate * (x - y);
        const Vec3 lift(2 * x * dx, 2 * y * dy, dx * y + x * dy);
        const Vec3 rhs = a * Vec3(x * x, y * y, x * y);
        CHECK((lift - rhs).norm() <= 1e-12 * std::max(1.0, rhs.norm()));
    }
    // Lift and 3D flow agree along trajectories.
    LimitSystem sys;
    sys.system = HeavyBall2D{1.3, 0.7, 1.0};
    const auto grid = linspace(0, 10, 11);
    const auto lifted = evolve_limit(sys, {1.0, 0.0, 0.0}, grid);
    CHECK(lifted.metadata["solver"] == "square_root_lift");
    const LinearFlow3 flow(limit_matrix(sys));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Vec3 x = flow.apply(grid[i], Vec3(1, 0, 0));
        for (int k = 0; k < 3; ++k) CHECK(std::fabs(lifted.states[i][k] - x(k)) < 1e-12);
    }
}

TEST_CASE("resonance cubic and spectrum") {
    const auto sys = select_limit({0.85, 1.2, 0.65, {}}, {1, 1, 1, 0.5});
    REQUIRE(sys.kind() == "resonance3d");
    const auto& r = std::get<Resonance3D>(sys.system);
    CHECK(r.eta_bar == doctest::Approx(0.5));
    CHECK(r.zeta_star() == doctest::Approx(1.0));
    const auto roots = cubic_roots(3.0, 2.0 + 4.0 * 0.5, 2.0 * 0.5 * (2.0 - 0.5));
    CHECK(roots[0].real() == doctest::Approx(-0.576).epsilon(1e-3 / 0.576));
    CHECK(roots[1].real() == doctest::Approx(-1.213).epsilon(1e-3 / 1.213));
    // The quoted imaginary part is rounded; the exact root gives c2 = 4 to 1e-12.
    CHECK(std::fabs(std::fabs(roots[1].imag()) - 1.062) < 5e-3);
    const CharPoly cp = char_poly(limit_matrix(sys));
    const CharPoly nc = resonance_cubic(r);
    const double q = r.rho_star;
    CHECK(cp.c1 == doctest::Approx(nc.c1 * q));
    CHECK(cp.c2 == doctest::Approx(nc.c2 * q * q));
    CHECK(cp.c3 == doctest::Approx(nc.c3 * q * q * q));
    CHECK(resonance_discriminant(r) < 0.0);

    RngStream s(5, 5);
    for (int i = 0; i < 200; ++i) {
        const Resonance3D rr{1.0, 0.24 * s.uniform(), s.uniform() * 0.5, 1.0};
        const double D = resonance_discriminant(rr);
        if (std::fabs(D) < 1e-8) continue;
        const auto z = cubic_roots(resonance_cubic(rr).c1, resonance_cubic(rr).c2, resonance_cubic(rr).c3);
        const bool complex = z[1].imag() != 0.0 || z[2].imag() != 0.0;
        CHECK(complex == (D < 0.0));
    }
}

TEST_CASE("resonance-line universality of zeta*") {
    const ScalingConstants c{0.7, 1.9, 0.4, 0.3};
    const double target = 0.4 / (0.7 * 1.9);
    for (ScalingExponents e : {ScalingExponents{0.85, 1.2, 0.65, {}}, ScalingExponents{2.2, 1.2, 2.0, {}},
                               ScalingExponents{1.2, 1.2, 1.0, {}}}) {
        const auto sys = select_limit(e, c);
        REQUIRE(sys.kind() == "resonance3d");
        CHECK(std::get<Resonance3D>(sys.system).zeta_star() == doctest::Approx(target).epsilon(1e-13));
    }
}

TEST_CASE("balancing transforms") {
    const ScalingExponents e{0.85, 1.2, 1.15, {}};
    const ScalingConstants c{1, 1, 1, 0.2};
    const Mat3 lim = limit_matrix(select_limit(e, c));
    double prev = 1e300;
    for (std::int64_t d : {100, 1000, 10000}) {
        const auto m = build_main_matrix(instantiate(e, c, d));
        const Mat3 bal = balanced_matrix(m, balancing_transform(Region::C, m, e));
        const double dev = (bal - lim).cwiseAbs().maxCoeff();
        CHECK(dev < prev);
        prev = dev;
    }
    CHECK(prev < 0.05);

    const auto mb = build_main_matrix(instantiate({0.85, 1.2, 0.325, {}}, c, 1000));
    CHECK_THROWS(balancing_transform(Region::B, mb, {0.85, 1.2, 0.325, {}}));

    // Triple point: the (W <- R) entry tends to xi*.
    const ScalingExponents tp{1.2, 1.2, 1.0, {}};
    const ScalingConstants ct{1.2, 1, 1, 0.2};
    const double P = 1 - std::exp(-1.2), xi = 1.0 / (P * 1.2);
    double prev_gap = 1e300;
    for (std::int64_t d : {1000, 10000, 100000}) {
        const auto m = build_main_matrix(instantiate(tp, ct, d));
        const Mat3 bal = balanced_matrix(m, balancing_transform(Region::TriplePoint, m, tp));
        const double gap = std::fabs(bal(1, 0) - xi);
        CHECK(gap < prev_gap);
        prev_gap = gap;
    }
    CHECK(prev_gap < 0.02 * xi);
}

TEST_CASE("main drift converges to every limit") {
    struct Case { ScalingExponents e; double eta; };
    const Case cases[] = {{{0.05, 1.2, 0.8, {}}, 0.2}, {{0.85, 1.2, 1.15, {}}, 0.2}, {{2.2, 1.2, 2.6, {}}, 0.2},
                          {{0.85, 1.2, 0.325, {}}, 0.2}, {{2.2, 1.2, 1.5, {}}, 0.2}, {{2.2, 1.2, 0.4, {}}, 0.2},
                          {{0.85, 1.2, 0.65, {}}, 0.5}, {{2.2, 1.2, 2.0, {}}, 0.5}, {{1.2, 1.2, 1.5, {}}, 0.2},
                          {{1.2, 1.2, 0.5, {}}, 0.2}, {{1.2, 1.2, 1.0, {}}, 0.2}};
    for (const auto& cs : cases) {
        const auto r = compare_main_limit(cs.e, {1, 1, 1, cs.eta}, {100, 1000, 10000});
        CHECK(r.monotone);
        CHECK(r.sup_rel_error.back() < 0.05);
    }
}

TEST_CASE("SDE lift") {
    const std::vector<double> grid = {0.0, 0.5, 1.0, 2.0};
    // Zero diffusion reproduces the heavy-ball squares up to O(dt).
    const Resonance3D det{1.0, 0.3, 0.0, 1.0};
    SdeConfig cfg;
    cfg.n_paths = 1000;
    cfg.seed = 3;
    const auto tr = sde_lift_simulate(det, 1.0, 0.0, grid, cfg);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto xy = heavy_ball_xy({1.0, 0.3, 1.0}, 1.0, 0.0, grid[i]);
        CHECK(std::fabs(tr.states[i][0] - xy[0] * xy[0]) < 5e-3);
        CHECK(tr.states[i][3] < 1e-6);
    }

    // Ensemble matches the exact Euler-Maruyama moment recursion within 4 SE.
    const Resonance3D r{1.5, 0.4, 1.2, 1.0};
    cfg.n_paths = 20000;
    cfg.dt = 0.005;
    const auto em = sde_lift_simulate(r, 1.0, 0.0, grid, cfg);
    Vec3 mom(1, 0, 0);
    const Mat3 step = em_moment_step(r, 0.005);
    double t = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        while (t < grid[i] - 1e-12) {
            mom = step * mom;
            t += 0.005;
        }
        for (int k = 0; k < 3; ++k) CHECK(std::fabs(em.states[i][k] - mom(k)) <= 4 * em.states[i][3 + k] + 1e-15);
    }

    // Weak order one: halving the step halves the bias of the EM moments.
    LimitSystem sys;
    sys.system = r;
    const Vec3 exact = LinearFlow3(limit_matrix(sys)).apply(2.0, Vec3(1, 0, 0));
    auto bias = [&](double h) {
        Vec3 m(1, 0, 0);
        const Mat3 st = em_moment_step(r, h);
        for (int i = 0; i < static_cast<int>(std::lround(2.0 / h)); ++i) m = st * m;
        return (m - exact).norm();
    };
    const double ratio = bias(0.01) / bias(0.005);
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.05));
    CHECK_THROWS(sde_lift_simulate(r, 1.0, 0.0, grid, SdeConfig{100, 0.0, 0, 0}));
}
