#include <doctest.h>

#include "spm/ls_mc.hpp"
#include "spm/numerics/rng.hpp"

#include <Eigen/QR>

#include <cmath>

using namespace spm;

namespace {

McConfig base_config(const InstanceParams& p, int seeds, std::int64_t steps, std::uint64_t seed) {
    McConfig c;
    c.params = p;
    c.n_seeds = seeds;
    c.max_active_updates = steps;
    c.master_seed = seed;
    c.threads = 1;
    return c;
}

// Exact ensemble mean of the discrete map: x_{n+1} = (I + A) x_n.
Vec3 discrete_mean(const DriftMatrix& m, std::int64_t n) {
    const Mat3 step = Mat3::Identity() + m.matrix();
    Vec3 x(1, 0, 0);
    for (std::int64_t i = 0; i < n; ++i) x = step * x;
    return x;
}

double two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("one-step oracle matches the drift matrix for both samplers") {
    const auto p = make_params(20, 0.3, 4, 0.3, 0.1);
    const auto m = build_main_matrix(p);
    const MomentState x{1.0, 0.5, 0.3};
    const Vec3 expect = m.matrix() * x.vec();
    for (auto sampler : {GradientSampler::PerSample, GradientSampler::Projected}) {
        const auto est = one_step_oracle(p, x, 200000, 17, sampler);
        for (int k = 0; k < 3; ++k) CHECK(std::fabs(est.mean(k) - expect(k)) < 4 * est.se(k));
    }
    CHECK_THROWS(one_step_oracle(p, {1.0, 0.1, 0.5}, 100, 1));
}

TEST_CASE("plain SGD matches the fourth-moment recursion") {
    const double eta = 0.005;
    auto c = base_config(make_params(100, 1.0, 1, 1.0, eta), 64, 200, 11);
    c.record_at = {0, 50, 100, 200};
    const auto r = simulate(c);
    for (std::size_t i = 0; i < r.index.size(); ++i) {
        const double expect = std::pow(1 - 2 * eta + eta * eta * 102, static_cast<double>(r.index[i]));
        CHECK(std::fabs(r.mean_R[i] - expect) <= 4 * r.se_R[i] + 1e-14);
    }
}

TEST_CASE("ensemble mean follows the exact discrete moment map") {
    const auto p = make_params(50, 0.3, 4, 0.3, 0.05);
    auto c = base_config(p, 256, 120, 5);
    c.record_at = {10, 40, 120};
    c.threads = 0;
    const auto r = simulate(c);
    const auto m = build_main_matrix(p);
    for (std::size_t i = 0; i < r.index.size(); ++i) {
        const Vec3 x = discrete_mean(m, r.index[i]);
        CHECK(std::fabs(r.mean_R[i] - x(0)) < 4 * r.se_R[i]);
        CHECK(std::fabs(r.mean_V[i] - x(1)) < 4 * r.se_V[i]);
        CHECK(std::fabs(r.mean_C[i] - x(2)) < 4 * r.se_C[i]);
    }
}

TEST_CASE("eta = 0 freezes the error") {
    auto c = base_config(make_params(30, 0.2, 5, 0.4, 0.0), 128, 20, 3);
    c.theta_star_norm = 2.0;
    const auto r = simulate(c);
    for (std::size_t i = 0; i < r.index.size(); ++i) {
        CHECK(r.mean_R[i] == doctest::Approx(4.0).epsilon(1e-14));
        CHECK(r.se_R[i] < 1e-12);
    }
    // Momentum still integrates gradients; its mean follows the moment map.
    const auto m = build_main_matrix(c.params);
    const double v1 = (Mat3::Identity() + m.matrix()) .row(1).dot(Vec3(4, 0, 0));
    CHECK(v1 > 0.0);
    CHECK(std::fabs(r.mean_V[1] - v1) < 4 * r.se_V[1]);
}

TEST_CASE("fast_forward_step") {
    const auto p = make_params(6, 0.5, 3, 0.25, 0.3);
    RngStream rng(9, 0);
    LsState s0;
    s0.e = Eigen::VectorXd(6);
    s0.m = Eigen::VectorXd(6);
    for (int i = 0; i < 6; ++i) {
        s0.e(i) = rng.normal();
        s0.m(i) = rng.normal();
    }
    ActiveBatch b;
    b.B = 3;
    b.features = Eigen::MatrixXd(2, 6);
    for (int i = 0; i < b.features.size(); ++i) b.features.data()[i] = rng.normal();
    const Eigen::VectorXd g = b.features.transpose() * (b.features * s0.e) / 3.0;

    // K = 1: one active step, no drift.
    LsState s = s0;
    fast_forward_step(s, 1, b, p);
    const Eigen::VectorXd m1 = p.beta * s0.m + p.eps * g;
    CHECK((s.m - m1).norm() < 1e-14);
    CHECK((s.e - (s0.e - p.eta * m1)).norm() < 1e-14);

    // K = 5 equals four explicit empty steps then the active one.
    LsState ex = s0;
    for (int k = 0; k < 4; ++k) {
        ex.m *= p.beta;
        ex.e -= p.eta * ex.m;
    }
    const Eigen::VectorXd ge = b.features.transpose() * (b.features * ex.e) / 3.0;
    ex.m = p.beta * ex.m + p.eps * ge;
    ex.e -= p.eta * ex.m;
    s = s0;
    fast_forward_step(s, 5, b, p);
    CHECK((s.e - ex.e).norm() < 1e-12);
    CHECK((s.m - ex.m).norm() < 1e-12);

    // beta = 0: no drift and the momentum resets.
    const auto p0 = make_params(6, 0.5, 3, 1.0, 0.3);
    s = s0;
    fast_forward_step(s, 7, b, p0);
    CHECK((s.m - g).norm() < 1e-14);
    CHECK((s.e - (s0.e - 0.3 * g)).norm() < 1e-14);

    CHECK_THROWS(fast_forward_step(s, 0, b, p));
    CHECK_THROWS(fast_forward_step(s, 2, b, make_params(6, 0.5, 3, 0.0, 0.3)));
}

TEST_CASE("explicit and fast-forward ensembles agree") {
    const auto p = make_params(20, 0.1, 4, 0.3, 0.05);
    auto c = base_config(p, 400, 200, 21);
    c.record_at = {20, 50, 100, 150, 200};
    c.threads = 0;
    c.mode = McMode::FastForward;
    const auto ff = simulate(c);
    c.mode = McMode::ExplicitSteps;
    const auto ex = simulate(c);
    for (std::size_t i = 0; i < c.record_at.size(); ++i) {
        const double z = (ff.mean_R[i] - ex.mean_R[i]) / std::hypot(ff.se_R[i], ex.se_R[i]);
        CHECK(two_sided_p(z) > 0.01);
    }
}

TEST_CASE("empty minibatches only decay the momentum") {
    auto c = base_config(make_params(10, 0.1, 3, 0.2, 0.1), 1, 100, 8);
    c.mode = McMode::ExplicitSteps;
    std::int64_t empties = 0;
    bool exact = true;
    simulate_seed(c, 0, nullptr, [&](const StepEvent& ev) {
        if (ev.N != 0) return;
        ++empties;
        const Eigen::VectorXd expect = c.params.beta * ev.before->m;
        exact = exact && (ev.after->m.array() == expect.array()).all();
    });
    CHECK(empties > 50);
    CHECK(exact);
}

TEST_CASE("statistics are invariant under rotating theta*") {
    const auto p = make_params(16, 0.4, 3, 0.3, 0.1);
    auto c = base_config(p, 512, 60, 41);
    c.record_at = {10, 30, 60};
    c.threads = 0;
    c.theta_star = Eigen::VectorXd::Unit(16, 0);
    const auto r1 = simulate(c);

    RngStream rng(77, 0);
    Eigen::MatrixXd g(16, 16);
    for (int i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    c.theta_star = q * Eigen::VectorXd::Unit(16, 0);
    c.master_seed = 42;
    const auto r2 = simulate(c);
    for (std::size_t i = 0; i < c.record_at.size(); ++i) {
        CHECK(std::fabs(r1.mean_R[i] - r2.mean_R[i]) < 4 * std::hypot(r1.se_R[i], r2.se_R[i]));
        CHECK(std::fabs(r1.mean_V[i] - r2.mean_V[i]) < 4 * std::hypot(r1.se_V[i], r2.se_V[i]));
        CHECK(std::fabs(r1.mean_C[i] - r2.mean_C[i]) < 4 * std::hypot(r1.se_C[i], r2.se_C[i]));
    }
}

TEST_CASE("active-batch gradient has conditional mean B1 e") {
    const auto p = make_params(40, 0.15, 6, 0.2, 0.02);
    for (auto sampler : {GradientSampler::PerSample, GradientSampler::Projected}) {
        auto c = base_config(p, 1, 4000, 13);
        c.sampler = sampler;
        c.record_at = {4000};
        double sxx = 0, sxy = 0;
        std::vector<std::pair<double, double>> pts;
        simulate_seed(c, 0, nullptr, [&](const StepEvent& ev) {
            const double x = ev.before->e.squaredNorm();
            const double y = ev.before->e.dot(*ev.gradient);
            pts.emplace_back(x, y);
            sxx += x * x;
            sxy += x * y;
        });
        const double slope = sxy / sxx;
        double meat = 0;
        for (auto [x, y] : pts) meat += x * x * (y - slope * x) * (y - slope * x);
        const double se = std::sqrt(meat) / sxx;
        const double B1 = batch_factors(p.p, p.B, p.d).B1;
        CHECK(std::fabs(slope - B1) < 4 * se);
    }
}

TEST_CASE("results do not depend on the thread count") {
    auto c = base_config(make_params(25, 0.3, 4, 0.3, 0.05), 24, 50, 99);
    c.threads = 1;
    const auto a = simulate(c);
    c.threads = 4;
    const auto b = simulate(c);
    CHECK(a.mean_R == b.mean_R);
    CHECK(a.se_V == b.se_V);
    CHECK(a.mean_C == b.mean_C);
}

TEST_CASE("divergence and guards") {
    auto c = base_config(make_params(100, 1.0, 1, 1.0, 1.0), 2, 100, 1);
    const auto r = simulate(c);
    CHECK(r.diverged[0]);
    CHECK(r.divergence_index[0] > 0);
    CHECK(std::isnan(r.mean_R.back()));

    auto big = base_config(make_params(1000000, 0.5, 2000, 0.5, 0.1), 1, 1, 1);
    CHECK_THROWS(simulate(big));
    auto bad = base_config(make_params(10, 0.5, 2, 0.5, 0.1), 0, 1, 1);
    CHECK_THROWS(simulate(bad));
    bad.n_seeds = 1;
    bad.record_at = {0, 5};
    CHECK_THROWS(simulate(bad));
    CHECK(mc_mode_from_string(to_string(McMode::ExplicitSteps)) == McMode::ExplicitSteps);
    CHECK(gradient_sampler_from_string("projected") == GradientSampler::Projected);
    CHECK_THROWS(mc_mode_from_string("bogus"));
}
