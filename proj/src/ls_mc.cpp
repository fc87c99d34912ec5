#include "spm/ls_mc.hpp"

#include "spm/harness/parallel.hpp"
#include "spm/numerics/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace spm {

namespace {

constexpr double kDivergenceLevel = 1e100;

struct Stepper {
    const InstanceParams& ip;
    GradientSampler sampler;
    double log_beta;  // log(1 - eps)
    double log_Q;
    Eigen::MatrixXd features;
    Eigen::VectorXd scratch;

    Stepper(const InstanceParams& params, GradientSampler s)
        : ip(params), sampler(s), log_beta(std::log1p(-params.eps)),
          log_Q(static_cast<double>(params.B) * std::log1p(-params.p)) {}

    void fill_normal(RngStream& rng, double* data, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) data[i] = rng.normal();
    }

    // Batched gradient at error e given N >= 1 active samples.
    void gradient(RngStream& rng, const Eigen::VectorXd& e, std::uint64_t N, Eigen::VectorXd& g) {
        const auto d = e.size();
        const double B = static_cast<double>(ip.B);
        if (sampler == GradientSampler::PerSample) {
            features.resize(static_cast<Eigen::Index>(N), d);
            fill_normal(rng, features.data(), static_cast<std::size_t>(features.size()));
            scratch.noalias() = features * e;
            g.noalias() = features.transpose() * scratch;
            g /= B;
            return;
        }
        const double r = e.norm();
        g.resize(d);
        fill_normal(rng, g.data(), static_cast<std::size_t>(d));
        const double S = rng.chi_square(N);
        if (r == 0.0) {
            g.setZero();
            return;
        }
        const double along = g.dot(e) / r;
        // g <- (r/B) (S e/r + sqrt(S) (z - <z,e/r> e/r))
        const double s = std::sqrt(S);
        g *= s;
        g += ((S - s * along) / r) * e;
        g *= r / B;
    }

    void active_update(RngStream& rng, LsState& st, std::uint64_t N, Eigen::VectorXd& g) {
        gradient(rng, st.e, N, g);
        st.m *= ip.beta;
        st.m += ip.eps * g;
        st.e -= ip.eta * st.m;
    }

    // Drift over K - 1 empty minibatches.
    void drift(LsState& st, std::uint64_t K) const {
        if (K <= 1) return;
        const double x = static_cast<double>(K - 1) * log_beta;
        const double geo = ip.beta * (-std::expm1(x)) / ip.eps;
        st.e -= (ip.eta * geo) * st.m;
        st.m *= std::exp(x);
    }
};

bool finite_state(const LsState& s) {
    const double R = s.e.squaredNorm(), V = s.m.squaredNorm();
    return std::isfinite(R) && std::isfinite(V) && R < kDivergenceLevel && V < kDivergenceLevel;
}

void check_config(const McConfig& c) {
    if (c.n_seeds < 1) throw std::invalid_argument("ls_mc: n_seeds must be >= 1");
    if (c.max_active_updates < 1) throw std::invalid_argument("ls_mc: max_active_updates must be >= 1");
    if (!(c.theta_star_norm > 0.0)) throw std::invalid_argument("ls_mc: theta_star_norm must be positive");
    const InstanceParams& p = c.params;
    make_params(p.d, p.p, p.B, p.eps, p.eta);
    if (c.theta_star.size() != 0 && c.theta_star.size() != p.d)
        throw std::invalid_argument("ls_mc: theta_star has the wrong dimension");
    if (!(p.eps > 0.0)) throw std::invalid_argument("ls_mc: beta = 1 is not supported");
    const double cost = static_cast<double>(p.B) * static_cast<double>(p.d);
    if (cost > kMcBudget && !c.override_budget)
        throw std::invalid_argument("ls_mc: B*d exceeds the per-step budget; set override_budget");
    for (std::size_t i = 0; i < c.record_at.size(); ++i) {
        if (c.record_at[i] < 0 || c.record_at[i] > c.max_active_updates)
            throw std::invalid_argument("ls_mc: record index out of range");
        if (i > 0 && c.record_at[i] <= c.record_at[i - 1])
            throw std::invalid_argument("ls_mc: record indices must be strictly ascending");
    }
}

std::vector<std::int64_t> record_indices(const McConfig& c) {
    if (!c.record_at.empty()) return c.record_at;
    std::vector<std::int64_t> out(static_cast<std::size_t>(c.max_active_updates + 1));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::int64_t>(i);
    return out;
}

}  // namespace

std::string to_string(McMode m) { return m == McMode::ExplicitSteps ? "explicit-steps" : "fast-forward"; }

McMode mc_mode_from_string(const std::string& s) {
    if (s == "explicit-steps") return McMode::ExplicitSteps;
    if (s == "fast-forward") return McMode::FastForward;
    throw std::invalid_argument("unknown Monte Carlo mode: " + s);
}

std::string to_string(GradientSampler g) { return g == GradientSampler::PerSample ? "per-sample" : "projected"; }

GradientSampler gradient_sampler_from_string(const std::string& s) {
    if (s == "per-sample") return GradientSampler::PerSample;
    if (s == "projected") return GradientSampler::Projected;
    throw std::invalid_argument("unknown gradient sampler: " + s);
}

MomentState moments(const LsState& s) { return {s.e.squaredNorm(), s.m.squaredNorm(), s.e.dot(s.m)}; }

void fast_forward_step(LsState& state, std::int64_t K, const ActiveBatch& batch, const InstanceParams& params) {
    if (K < 1) throw std::invalid_argument("fast_forward_step: K must be >= 1");
    if (!(params.eps > 0.0)) throw std::invalid_argument("fast_forward_step: beta = 1 is not supported");
    if (batch.features.cols() != state.e.size()) throw std::invalid_argument("fast_forward_step: feature dimension");
    if (K > 1) {
        const double x = static_cast<double>(K - 1) * std::log1p(-params.eps);
        state.e -= (params.eta * params.beta * (-std::expm1(x)) / params.eps) * state.m;
        state.m *= std::exp(x);
    }
    Eigen::VectorXd g = batch.features.transpose() * (batch.features * state.e);
    g /= static_cast<double>(batch.B);
    state.m *= params.beta;
    state.m += params.eps * g;
    state.e -= params.eta * state.m;
}

std::vector<MomentState> simulate_seed(const McConfig& config, int seed_index, std::int64_t* divergence_index,
                                       const StepObserver& observer) {
    check_config(config);
    const InstanceParams& ip = config.params;
    const auto d = static_cast<Eigen::Index>(ip.d);
    RngStream rng = RngStream::derive(config.master_seed, static_cast<std::uint64_t>(seed_index));
    const auto rec = record_indices(config);

    LsState st;
    Eigen::VectorXd star(d);
    if (config.theta_star.size() == d) {
        star = config.theta_star;
    } else {
        for (Eigen::Index i = 0; i < d; ++i) star(i) = rng.normal();
        star *= config.theta_star_norm / star.norm();
    }
    st.e = -star;  // theta_0 = 0
    st.m = Eigen::VectorXd::Zero(d);

    Stepper step(ip, config.sampler);
    Eigen::VectorXd g(d);
    std::vector<MomentState> out;
    out.reserve(rec.size());
    std::size_t next = 0;
    std::int64_t diverged_at = -1;
    LsState before;
    auto notify = [&](std::int64_t n, std::uint64_t N, const Eigen::VectorXd* grad) {
        observer(StepEvent{n, N, &before, &st, grad});
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto record = [&](std::int64_t n) {
        while (next < rec.size() && rec[next] == n) {
            out.push_back(diverged_at >= 0 ? MomentState{nan, nan, nan} : moments(st));
            ++next;
        }
    };
    record(0);
    const auto B = static_cast<std::uint64_t>(ip.B);
    for (std::int64_t n = 1; n <= config.max_active_updates && next < rec.size(); ++n) {
        if (diverged_at < 0) {
            std::uint64_t N = 0;
            if (config.mode == McMode::FastForward) {
                const std::uint64_t K = std::isfinite(step.log_Q) ? rng.geometric_log_q(step.log_Q) : 1;
                step.drift(st, K);
                N = rng.binomial_nonzero(B, ip.p);
            } else {
                for (;;) {
                    N = rng.binomial(B, ip.p);
                    if (N > 0) break;
                    if (observer) before = st;
                    st.m *= ip.beta;
                    st.e -= ip.eta * st.m;
                    if (observer) notify(n - 1, 0, nullptr);
                }
            }
            if (observer) before = st;
            step.active_update(rng, st, N, g);
            if (observer) notify(n, N, &g);
            if (!finite_state(st)) diverged_at = n;
        }
        record(n);
    }
    if (divergence_index) *divergence_index = diverged_at;
    return out;
}

McEnsembleResult simulate(const McConfig& config) {
    check_config(config);
    const auto rec = record_indices(config);
    const auto n = static_cast<std::size_t>(config.n_seeds);
    std::vector<std::vector<MomentState>> runs(n);
    std::vector<std::int64_t> div(n, -1);
    parallel_for(n, config.threads, [&](std::size_t s) {
        runs[s] = simulate_seed(config, static_cast<int>(s), &div[s]);
    });

    McEnsembleResult res;
    res.index = rec;
    res.n_seeds = config.n_seeds;
    res.divergence_index = div;
    for (auto v : div) res.diverged.push_back(v >= 0);
    const std::size_t T = rec.size();
    for (auto* v : {&res.mean_R, &res.se_R, &res.mean_V, &res.se_V, &res.mean_C, &res.se_C}) v->assign(T, 0.0);
    const double ns = static_cast<double>(n);
    for (std::size_t t = 0; t < T; ++t) {
        double s[3] = {0, 0, 0};
        for (std::size_t k = 0; k < n; ++k) {
            const auto& x = runs[k][t];
            s[0] += x.R;
            s[1] += x.V;
            s[2] += x.C;
        }
        const double mean[3] = {s[0] / ns, s[1] / ns, s[2] / ns};
        double ss[3] = {0, 0, 0};
        for (std::size_t k = 0; k < n; ++k) {
            const auto& x = runs[k][t];
            const double dx[3] = {x.R - mean[0], x.V - mean[1], x.C - mean[2]};
            for (int j = 0; j < 3; ++j) ss[j] += dx[j] * dx[j];
        }
        double se[3] = {0, 0, 0};
        if (n > 1)
            for (int j = 0; j < 3; ++j) se[j] = std::sqrt(ss[j] / (ns - 1.0) / ns);
        res.mean_R[t] = mean[0];
        res.mean_V[t] = mean[1];
        res.mean_C[t] = mean[2];
        res.se_R[t] = se[0];
        res.se_V[t] = se[1];
        res.se_C[t] = se[2];
    }
    return res;
}

OneStepEstimate one_step_oracle(const InstanceParams& params, const MomentState& state, std::int64_t replicates,
                                std::uint64_t seed, GradientSampler sampler) {
    const InstanceParams& ip = make_params(params.d, params.p, params.B, params.eps, params.eta);
    if (replicates < 2) throw std::invalid_argument("one_step_oracle: need at least 2 replicates");
    if (!(state.R > 0.0) || state.C * state.C > state.R * state.V)
        throw std::invalid_argument("one_step_oracle: moments must satisfy R > 0 and C^2 <= R V");
    if (ip.d < 2) throw std::invalid_argument("one_step_oracle: d must be >= 2");
    const auto d = static_cast<Eigen::Index>(ip.d);
    LsState base;
    base.e = Eigen::VectorXd::Zero(d);
    base.m = Eigen::VectorXd::Zero(d);
    const double sr = std::sqrt(state.R);
    base.e(0) = sr;
    base.m(0) = state.C / sr;
    base.m(1) = std::sqrt(std::max(0.0, state.V - state.C * state.C / state.R));
    const Vec3 x0 = moments(base).vec();

    constexpr std::int64_t chunk = 8192;
    const auto n_chunks = static_cast<std::size_t>((replicates + chunk - 1) / chunk);
    struct Partial {
        double count = 0;
        Vec3 mean = Vec3::Zero();
        Vec3 m2 = Vec3::Zero();
    };
    std::vector<Partial> parts(n_chunks);
    parallel_for(n_chunks, 0, [&](std::size_t c) {
        RngStream rng = RngStream::derive(seed, c);
        Stepper step(ip, sampler);
        Eigen::VectorXd g(d);
        const std::int64_t lo = static_cast<std::int64_t>(c) * chunk;
        const std::int64_t hi = std::min(replicates, lo + chunk);
        Partial& p = parts[c];
        for (std::int64_t r = lo; r < hi; ++r) {
            LsState st = base;
            const std::uint64_t K = std::isfinite(step.log_Q) ? rng.geometric_log_q(step.log_Q) : 1;
            step.drift(st, K);
            const std::uint64_t N = rng.binomial_nonzero(static_cast<std::uint64_t>(ip.B), ip.p);
            step.active_update(rng, st, N, g);
            const Vec3 dx = moments(st).vec() - x0;
            p.count += 1;
            const Vec3 delta = dx - p.mean;
            p.mean += delta / p.count;
            p.m2 += delta.cwiseProduct(dx - p.mean);
        }
    });
    // Chan et al. pairwise combination in chunk order.
    Partial tot;
    for (const auto& p : parts) {
        if (p.count == 0) continue;
        const double n = tot.count + p.count;
        const Vec3 delta = p.mean - tot.mean;
        tot.mean += delta * (p.count / n);
        tot.m2 += p.m2 + delta.cwiseProduct(delta) * (tot.count * p.count / n);
        tot.count = n;
    }
    OneStepEstimate out;
    out.mean = tot.mean;
    out.se = (tot.m2 / (tot.count - 1) / tot.count).cwiseSqrt();
    out.replicates = replicates;
    return out;
}

}  // namespace spm
