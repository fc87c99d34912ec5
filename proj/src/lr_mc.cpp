#include "spm/lr_mc.hpp"

#include "spm/harness/parallel.hpp"
#include "spm/numerics/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace spm {

namespace {

constexpr double kDivergenceLevel = 1e100;
constexpr std::uint64_t kSignalStream = 0x5EED'51C4'A1D1'0000ull;

using Vec5 = Eigen::Matrix<double, 5, 1>;

double softplus(double t) { return t > 30.0 ? t + std::exp(-t) : std::log1p(std::exp(t)); }

void fill_normal(RngStream& rng, Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
}

Eigen::VectorXd random_unit(RngStream& rng, Eigen::Index d) {
    Eigen::VectorXd v(d);
    fill_normal(rng, v);
    return v / v.norm();
}

// Unit vector orthogonal to every column of `basis` (orthonormal columns).
Eigen::VectorXd random_orthogonal_unit(RngStream& rng, const Eigen::MatrixXd& basis) {
    for (;;) {
        Eigen::VectorXd v(basis.rows());
        fill_normal(rng, v);
        v -= basis * (basis.transpose() * v);
        const double n = v.norm();
        if (n > 1e-8) return v / n;
    }
}

struct LrStepper {
    const LrParams& prm;
    GradientSampler sampler;
    Eigen::VectorXd mu_hat;
    double bias;
    Eigen::MatrixXd Z;
    Eigen::VectorXd c, xi;

    LrStepper(const LrParams& p, GradientSampler s, Eigen::VectorXd mu)
        : prm(p), sampler(s), mu_hat(std::move(mu)), bias(p.b_star()) {}

    // Batched gradient at theta; each sample draws its label before its features.
    void gradient(RngStream& rng, const Eigen::VectorXd& theta, Eigen::VectorXd& g) {
        const auto d = theta.size();
        const auto B = static_cast<Eigen::Index>(prm.B);
        const double theta_par = theta.dot(mu_hat);
        if (sampler == GradientSampler::PerSample) {
            Z.resize(B, d);
            c.resize(B);
            double label_weight = 0.0;
            for (Eigen::Index i = 0; i < B; ++i) {
                const double y = rng.bernoulli(prm.p) ? 1.0 : 0.0;
                for (Eigen::Index j = 0; j < d; ++j) Z(i, j) = rng.normal();
                const double logit = Z.row(i).dot(theta) + y * prm.r * theta_par + bias;
                c(i) = stable_sigmoid(logit) - y;
                label_weight += c(i) * y;
            }
            g.noalias() = Z.transpose() * c;
            g += (label_weight * prm.r) * mu_hat;
            g /= static_cast<double>(B);
            return;
        }
        // Only the coordinates along mu_hat and the orthogonal part of theta
        // enter the logits; the remaining directions carry an independent
        // Gaussian with variance sum c_i^2.
        Eigen::VectorXd perp = theta - theta_par * mu_hat;
        const double rho = perp.norm();
        if (rho > 0.0) perp /= rho;
        double s_mu = 0.0, s_a = 0.0, s_c2 = 0.0;
        for (Eigen::Index i = 0; i < B; ++i) {
            const double y = rng.bernoulli(prm.p) ? 1.0 : 0.0;
            const double x_mu = y * prm.r + rng.normal();
            const double z_a = rng.normal();
            const double ci = stable_sigmoid(theta_par * x_mu + rho * z_a + bias) - y;
            s_mu += ci * x_mu;
            s_a += ci * z_a;
            s_c2 += ci * ci;
        }
        xi.resize(d);
        fill_normal(rng, xi);
        xi -= xi.dot(mu_hat) * mu_hat;
        if (rho > 0.0) xi -= xi.dot(perp) * perp;
        g = std::sqrt(s_c2) * xi + s_mu * mu_hat;
        if (rho > 0.0) g += s_a * perp;
        g /= static_cast<double>(B);
    }

    void step(RngStream& rng, LrIterate& it, Eigen::VectorXd& g) {
        gradient(rng, it.theta, g);
        it.m *= prm.beta;
        it.m += prm.eps * g;
        it.theta -= prm.eta * it.m;
    }
};

void check_config(const LrMcConfig& c) {
    const LrParams& p = c.params;
    make_lr_params(p.r, p.p, p.B, p.eps, p.eta, p.d);
    if (c.n_seeds < 1) throw std::invalid_argument("lr_mc: n_seeds must be >= 1");
    if (c.max_steps < 1) throw std::invalid_argument("lr_mc: max_steps must be >= 1");
    if (c.record_stride < 1) throw std::invalid_argument("lr_mc: record_stride must be >= 1");
    const double cost = static_cast<double>(p.B) * static_cast<double>(p.d);
    if (cost > kMcBudget && !c.override_budget)
        throw std::invalid_argument("lr_mc: B*d exceeds the per-step budget; set override_budget");
    if (c.initial) {
        if (!c.initial->valid()) throw std::invalid_argument("lr_mc: initial state violates C^2 <= R V");
        if (p.d < 3) throw std::invalid_argument("lr_mc: an initial state needs d >= 3");
    }
}

bool finite_iterate(const LrIterate& it) {
    const double a = it.theta.squaredNorm(), b = it.m.squaredNorm();
    return std::isfinite(a) && std::isfinite(b) && a < kDivergenceLevel && b < kDivergenceLevel;
}

// Realizes x with the orthogonal parts along two random directions.
LrIterate place(const LrState& x, const Eigen::VectorXd& mu_hat, double r, RngStream& rng) {
    const auto d = mu_hat.size();
    Eigen::MatrixXd basis(d, 1);
    basis.col(0) = mu_hat;
    const Eigen::VectorXd ea = random_orthogonal_unit(rng, basis);
    basis.conservativeResize(d, 2);
    basis.col(1) = ea;
    const Eigen::VectorXd eb = random_orthogonal_unit(rng, basis);
    const double sr = std::sqrt(x.R_perp);
    LrIterate it;
    it.theta = (r + x.s) * mu_hat + sr * ea;
    const double along = sr > 0.0 ? x.C_perp / sr : 0.0;
    it.m = x.u * mu_hat + along * ea + std::sqrt(std::max(0.0, x.V_perp - along * along)) * eb;
    return it;
}

Vec5 as_vec(const LrState& x) { return Vec5(x.s, x.u, x.R_perp, x.V_perp, x.C_perp); }

}  // namespace

double stable_sigmoid(double z) { return std::exp(-softplus(-z)); }

LrState lr_project(const LrIterate& it, const Eigen::VectorXd& mu_hat, double r) {
    const double tp = it.theta.dot(mu_hat), mp = it.m.dot(mu_hat);
    const Eigen::VectorXd tperp = it.theta - tp * mu_hat;
    const Eigen::VectorXd mperp = it.m - mp * mu_hat;
    return {tp - r, mp, tperp.squaredNorm(), mperp.squaredNorm(), tperp.dot(mperp)};
}

LrIterate lr_realize(const LrState& x, std::int64_t d, double r) {
    if (d < 3) throw std::invalid_argument("lr_realize: needs d >= 3");
    if (!x.valid()) throw std::invalid_argument("lr_realize: state violates C^2 <= R V");
    const auto n = static_cast<Eigen::Index>(d);
    LrIterate it;
    it.theta = Eigen::VectorXd::Zero(n);
    it.m = Eigen::VectorXd::Zero(n);
    const double sr = std::sqrt(x.R_perp);
    const double along = sr > 0.0 ? x.C_perp / sr : 0.0;
    it.theta(0) = r + x.s;
    it.theta(1) = sr;
    it.m(0) = x.u;
    it.m(1) = along;
    it.m(2) = std::sqrt(std::max(0.0, x.V_perp - along * along));
    return it;
}

std::vector<std::array<double, 5>> simulate_lr_seed(const LrMcConfig& config, int seed_index,
                                                    std::int64_t* divergence_index) {
    check_config(config);
    const LrParams& prm = config.params;
    const auto d = static_cast<Eigen::Index>(prm.d);
    RngStream signal(config.master_seed, kSignalStream);
    const Eigen::VectorXd mu_hat = random_unit(signal, d);
    RngStream rng = RngStream::derive(config.master_seed, static_cast<std::uint64_t>(seed_index));

    LrIterate it;
    if (config.initial) {
        it = place(*config.initial, mu_hat, prm.r, rng);
    } else {
        it.theta = Eigen::VectorXd::Zero(d);
        it.m = Eigen::VectorXd::Zero(d);
    }
    LrStepper stepper(prm, config.sampler, mu_hat);
    Eigen::VectorXd g(d);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::array<double, 5>> out;
    out.reserve(static_cast<std::size_t>(config.max_steps / config.record_stride + 1));
    out.push_back(lr_project(it, mu_hat, prm.r).array());
    std::int64_t diverged_at = -1;
    for (std::int64_t n = 1; n <= config.max_steps; ++n) {
        if (diverged_at < 0) {
            stepper.step(rng, it, g);
            if (!finite_iterate(it)) diverged_at = n;
        }
        if (n % config.record_stride == 0)
            out.push_back(diverged_at >= 0 ? std::array<double, 5>{nan, nan, nan, nan, nan}
                                           : lr_project(it, mu_hat, prm.r).array());
    }
    if (divergence_index) *divergence_index = diverged_at;
    return out;
}

LrMcResult simulate_lr(const LrMcConfig& config) {
    check_config(config);
    const auto n = static_cast<std::size_t>(config.n_seeds);
    std::vector<std::vector<std::array<double, 5>>> runs(n);
    std::vector<std::int64_t> div(n, -1);
    parallel_for(n, config.threads, [&](std::size_t s) {
        runs[s] = simulate_lr_seed(config, static_cast<int>(s), &div[s]);
    });

    LrMcResult res;
    res.n_seeds = config.n_seeds;
    res.divergence_index = div;
    for (auto v : div) res.diverged.push_back(v >= 0);
    const std::size_t T = runs[0].size();
    for (std::size_t t = 0; t < T; ++t) res.step.push_back(static_cast<std::int64_t>(t) * config.record_stride);
    for (int k = 0; k < 5; ++k) {
        res.mean[k].assign(T, 0.0);
        res.se[k].assign(T, 0.0);
    }
    res.mean_alpha.assign(T, 0.0);
    const double ns = static_cast<double>(n);
    for (std::size_t t = 0; t < T; ++t) {
        double alpha = 0.0;
        for (std::size_t s = 0; s < n; ++s) alpha += LrState::from(runs[s][t]).alpha(config.params.r);
        res.mean_alpha[t] = alpha / ns;
        for (int k = 0; k < 5; ++k) {
            double m = 0.0;
            for (std::size_t s = 0; s < n; ++s) m += runs[s][t][k];
            m /= ns;
            double ss = 0.0;
            for (std::size_t s = 0; s < n; ++s) ss += (runs[s][t][k] - m) * (runs[s][t][k] - m);
            res.mean[k][t] = m;
            res.se[k][t] = n > 1 ? std::sqrt(ss / (ns - 1.0) / ns) : 0.0;
        }
    }
    return res;
}

namespace {

// Welford accumulator over fixed-size vectors with Chan merging.
template <int N>
struct Moments {
    using V = Eigen::Matrix<double, N, 1>;
    double count = 0.0;
    V mean = V::Zero();
    V m2 = V::Zero();

    void add(const V& x) {
        count += 1.0;
        const V delta = x - mean;
        mean += delta / count;
        m2 += delta.cwiseProduct(x - mean);
    }
    void merge(const Moments& o) {
        if (o.count == 0.0) return;
        const double n = count + o.count;
        const V delta = o.mean - mean;
        mean += delta * (o.count / n);
        m2 += o.m2 + delta.cwiseProduct(delta) * (count * o.count / n);
        count = n;
    }
    V se() const { return (m2 / (count - 1.0) / count).cwiseSqrt(); }
};

template <int N, class Body>
Moments<N> chunked(std::int64_t total, std::uint64_t seed, Body body) {
    constexpr std::int64_t chunk = 16384;
    const auto n_chunks = static_cast<std::size_t>((total + chunk - 1) / chunk);
    std::vector<Moments<N>> parts(n_chunks);
    parallel_for(n_chunks, 0, [&](std::size_t c) {
        RngStream rng = RngStream::derive(seed, c);
        const std::int64_t lo = static_cast<std::int64_t>(c) * chunk;
        const std::int64_t hi = std::min(total, lo + chunk);
        body(rng, hi - lo, parts[c]);
    });
    Moments<N> tot;
    for (const auto& p : parts) tot.merge(p);
    return tot;
}

}  // namespace

LrOneStep lr_one_step_oracle(const LrParams& prm, const LrState& x, std::int64_t replicates, std::uint64_t seed,
                             GradientSampler sampler) {
    make_lr_params(prm.r, prm.p, prm.B, prm.eps, prm.eta, prm.d);
    if (replicates < 2) throw std::invalid_argument("lr_one_step_oracle: need at least 2 replicates");
    const LrIterate base = lr_realize(x, prm.d, prm.r);
    const auto d = static_cast<Eigen::Index>(prm.d);
    const Eigen::VectorXd mu_hat = Eigen::VectorXd::Unit(d, 0);
    const Vec5 x0 = as_vec(lr_project(base, mu_hat, prm.r));
    const auto tot = chunked<5>(replicates, seed, [&](RngStream& rng, std::int64_t count, Moments<5>& acc) {
        LrStepper stepper(prm, sampler, mu_hat);
        Eigen::VectorXd g(d);
        for (std::int64_t i = 0; i < count; ++i) {
            LrIterate it = base;
            stepper.step(rng, it, g);
            acc.add(as_vec(lr_project(it, mu_hat, prm.r)) - x0);
        }
    });
    LrOneStep out;
    const Vec5 se = tot.se();
    for (int k = 0; k < 5; ++k) {
        out.mean[static_cast<std::size_t>(k)] = tot.mean(k);
        out.se[static_cast<std::size_t>(k)] = se(k);
    }
    out.replicates = replicates;
    return out;
}

SteinEstimate lr_stein_check(const LrParams& prm, double s, double R_perp, std::int64_t samples, std::uint64_t seed) {
    make_lr_params(prm.r, prm.p, prm.B, prm.eps, prm.eta, prm.d);
    if (prm.d < 3) throw std::invalid_argument("lr_stein_check: needs d >= 3");
    if (!(R_perp >= 0.0)) throw std::invalid_argument("lr_stein_check: R_perp must be >= 0");
    if (samples < 2) throw std::invalid_argument("lr_stein_check: need at least 2 samples");
    RngStream angle(seed, kSignalStream);
    const double phi = 2.0 * M_PI * angle.uniform();
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    const double tp = prm.r + s, rho = std::sqrt(R_perp), bias = prm.b_star();
    const auto rest_dof = static_cast<std::uint64_t>(prm.d - 3);
    const auto tot = chunked<4>(samples, seed, [&](RngStream& rng, std::int64_t count, Moments<4>& acc) {
        for (std::int64_t i = 0; i < count; ++i) {
            const double y = rng.bernoulli(prm.p) ? 1.0 : 0.0;
            const double x_mu = y * prm.r + rng.normal();
            const double z_a = rng.normal(), z_w = rng.normal();
            const double rest = rest_dof > 0 ? rng.chi_square(rest_dof) : 0.0;
            const double c = stable_sigmoid(tp * x_mu + rho * z_a + bias) - y;
            acc.add(Eigen::Vector4d(c * x_mu, c * (cphi * z_a + sphi * z_w), c * c * (z_a * z_a + z_w * z_w + rest), y));
        }
    });
    const Eigen::Vector4d se = tot.se();
    SteinEstimate out;
    out.g_par = {tot.mean(0), se(0)};
    out.g_dir = {tot.mean(1), se(1)};
    out.g_perp_sq = {tot.mean(2), se(2)};
    out.label_rate = {tot.mean(3), se(3)};
    out.phi = phi;
    out.samples = samples;
    return out;
}

}  // namespace spm
