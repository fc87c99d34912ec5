#include <doctest.h>

#include "spm/lr_mc.hpp"
#include "spm/trajectory.hpp"

#include <cmath>

using namespace spm;

TEST_CASE("stable sigmoid") {
    CHECK(stable_sigmoid(0.0) == 0.5);
    CHECK(stable_sigmoid(800.0) == 1.0);
    CHECK(stable_sigmoid(-800.0) == 0.0);
    CHECK(stable_sigmoid(-700.0) == doctest::Approx(std::exp(-700.0)).epsilon(1e-12));
    CHECK(stable_sigmoid(-35.0) == doctest::Approx(std::exp(-35.0)).epsilon(1e-12));
    for (double z : {-5.0, -0.3, 2.0})
        CHECK(stable_sigmoid(z) + stable_sigmoid(-z) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("realize and project round-trip") {
    const LrState x{0.2, -0.1, 0.5, 0.3, 0.1};
    const auto it = lr_realize(x, 7, 1.5);
    const auto y = lr_project(it, Eigen::VectorXd::Unit(7, 0), 1.5);
    CHECK(y.s == doctest::Approx(x.s));
    CHECK(y.u == doctest::Approx(x.u));
    CHECK(y.R_perp == doctest::Approx(x.R_perp));
    CHECK(y.V_perp == doctest::Approx(x.V_perp));
    CHECK(y.C_perp == doctest::Approx(x.C_perp));
    CHECK_THROWS(lr_realize({0, 0, 0.1, 0.1, 1.0}, 7, 1.0));
    CHECK_THROWS(lr_realize(x, 2, 1.0));
}

TEST_CASE("Stein identity, orthogonal noise and label rate") {
    const auto prm = make_lr_params(1.0, 0.01, 1, 0.1, 0.1, 50);
    const double s = 0.3, R = 0.3;
    const auto c = coefficients_exact({s, 0, R, 0, 0}, prm);
    const auto est = lr_stein_check(prm, s, R, 10'000'000, 404);
    CHECK(std::fabs(est.g_par.mean - c.f) < 4 * est.g_par.se);
    CHECK(std::fabs(est.g_dir.mean - c.A * std::sqrt(R) * std::cos(est.phi)) < 4 * est.g_dir.se);
    CHECK(std::fabs(est.g_perp_sq.mean - (49 * c.D0 + R * c.Dtheta)) < 4 * est.g_perp_sq.se);
    CHECK(std::fabs(est.label_rate.mean - 0.01) < 4 * est.label_rate.se);
}

TEST_CASE("initial gradient at the trivial classifier scales with p") {
    double prev = 1e300;
    for (double p : {1e-2, 1e-3, 1e-4}) {
        const auto prm = make_lr_params(1.0, p, 1, 0.1, 0.1, 20);
        const auto est = lr_stein_check(prm, -1.0, 0.0, 1'000'000, 5);
        const double exact = coefficients_exact({-1.0, 0, 0, 0, 0}, prm).f;
        CHECK(std::fabs(est.g_par.mean - exact) < 4 * est.g_par.se);
        CHECK(std::fabs(exact / p + 1.0) < 2 * p);
        CHECK(std::fabs(est.g_par.mean) < prev);
        prev = std::fabs(est.g_par.mean);
    }
}

TEST_CASE("one-step oracle matches the five-variable drift") {
    struct Setting {
        double r, p;
        std::int64_t B;
    };
    // theta_par = 1 keeps q within the 64-node quadrature's reliable range.
    for (const Setting& st : {Setting{0.5, 0.05, 1}, Setting{2.0, 0.005, 16}, Setting{2.0, 0.05, 16}}) {
        const LrState x{1.0 - st.r, 0.1, 0.5, 0.3, 0.1};
        const auto prm = make_lr_params(st.r, st.p, st.B, 0.2, 0.5, 20);
        const auto dx = drift_5var(x, prm, CoeffMode::Exact).array();
        const auto est = lr_one_step_oracle(prm, x, 1'000'000, 31);
        for (std::size_t k = 0; k < 5; ++k) CHECK(std::fabs(est.mean[k] - dx[k]) < 4 * est.se[k]);
    }
    const LrState x{0.2, 0.1, 0.5, 0.3, 0.1};
    const auto prm = make_lr_params(1.0, 0.05, 4, 0.2, 0.5, 12);
    const auto dx = drift_5var(x, prm, CoeffMode::Exact).array();
    const auto est = lr_one_step_oracle(prm, x, 200'000, 8, GradientSampler::PerSample);
    for (std::size_t k = 0; k < 5; ++k) CHECK(std::fabs(est.mean[k] - dx[k]) < 4 * est.se[k]);
}

TEST_CASE("ensemble tracks the five-variable ODE at d = 200") {
    LrMcConfig c;
    c.params = make_lr_params(1.0, 0.02, 8, 0.1, 0.2, 200);
    c.n_seeds = 64;
    c.max_steps = 2000;
    c.record_stride = 250;
    c.master_seed = 12;
    c.threads = 0;
    const auto mc = simulate_lr(c);
    std::vector<double> t(mc.step.begin(), mc.step.end());
    Lr5Options o;
    o.with_kl = false;
    const auto ode = evolve_5var({-1.0, 0, 0, 0, 0}, c.params, t, CoeffMode::Exact, o);
    for (std::size_t i = 1; i < t.size(); ++i)
        for (std::size_t k = 0; k < 5; ++k) CHECK(std::fabs(mc.mean[k][i] - ode.states[i][k]) < 3 * mc.se[k][i]);
}

TEST_CASE("samplers agree in distribution") {
    LrMcConfig c;
    c.params = make_lr_params(1.5, 0.05, 4, 0.2, 0.5, 30);
    c.n_seeds = 256;
    c.max_steps = 100;
    c.record_stride = 50;
    c.master_seed = 3;
    c.initial = LrState{0.1, 0, 0.4, 0, 0};
    const auto a = simulate_lr(c);
    c.sampler = GradientSampler::PerSample;
    const auto b = simulate_lr(c);
    for (std::size_t i = 1; i < a.step.size(); ++i)
        for (std::size_t k = 0; k < 5; ++k)
            CHECK(std::fabs(a.mean[k][i] - b.mean[k][i]) < 4 * std::hypot(a.se[k][i], b.se[k][i]));
    CHECK(a.mean[2][0] == doctest::Approx(0.4));
    CHECK(a.mean[0][0] == doctest::Approx(0.1));
}

TEST_CASE("determinism and guards") {
    LrMcConfig c;
    c.params = make_lr_params(1.0, 0.05, 3, 0.2, 0.3, 25);
    c.n_seeds = 12;
    c.max_steps = 40;
    c.record_stride = 7;
    c.master_seed = 99;
    c.threads = 1;
    const auto a = simulate_lr(c);
    c.threads = 4;
    const auto b = simulate_lr(c);
    CHECK(a.step == std::vector<std::int64_t>{0, 7, 14, 21, 28, 35});
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(a.mean[k] == b.mean[k]);
        CHECK(a.se[k] == b.se[k]);
    }
    c.master_seed = 100;
    CHECK(simulate_lr(c).mean[2] != a.mean[2]);

    // Logistic gradients are bounded by |x|, so finite runs never diverge.
    for (bool d : a.diverged) CHECK_FALSE(d);

    auto bad = c;
    bad.record_stride = 0;
    CHECK_THROWS(simulate_lr(bad));
    bad = c;
    bad.n_seeds = 0;
    CHECK_THROWS(simulate_lr(bad));
    bad = c;
    bad.params.d = 1'000'000;
    bad.params.B = 2000;
    CHECK_THROWS(simulate_lr(bad));
}
