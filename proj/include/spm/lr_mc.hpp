#pragma once
// Monte Carlo SGD with momentum on the rare-class Gaussian mixture with the
// bias fixed at its Bayes value, recorded as the five-variable state.

#include "spm/lr_dynamics.hpp"
#include "spm/ls_mc.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spm {

struct LrMcConfig {
    LrParams params;
    int n_seeds = 1;
    std::int64_t max_steps = 1;
    std::uint64_t master_seed = 0;
    std::int64_t record_stride = 1;
    int threads = 0;
    GradientSampler sampler = GradientSampler::PerSample;
    // Starting (s, u, R_perp, V_perp, C_perp); empty starts from theta = 0, m = 0.
    std::optional<LrState> initial;
    bool override_budget = false;
};

inline const std::array<std::string, 5> kLrStateColumns = {"s", "u", "R_perp", "V_perp", "C_perp"};

struct LrMcResult {
    std::vector<std::int64_t> step;
    std::array<std::vector<double>, 5> mean, se;  // in kLrStateColumns order
    std::vector<double> mean_alpha;
    int n_seeds = 0;
    std::vector<bool> diverged;
    std::vector<std::int64_t> divergence_index;
};

LrMcResult simulate_lr(const LrMcConfig& config);

// Single seed; rows are the five-tuple at steps 0, stride, 2 stride, ...
std::vector<std::array<double, 5>> simulate_lr_seed(const LrMcConfig& config, int seed_index,
                                                    std::int64_t* divergence_index = nullptr);

// Full-dimensional iterate pair and the unit signal direction.
struct LrIterate {
    Eigen::VectorXd theta;
    Eigen::VectorXd m;
};
LrState lr_project(const LrIterate& it, const Eigen::VectorXd& mu_hat, double r);

// Iterate realizing a five-tuple with mu_hat = e_1 (needs d >= 3).
LrIterate lr_realize(const LrState& x, std::int64_t d, double r);

// Numerically stable logistic function.
double stable_sigmoid(double z);

struct LrOneStep {
    std::array<double, 5> mean{}, se{};
    std::int64_t replicates = 0;
};

// Empirical E[Delta state] of one SGD step from a fixed realized state.
LrOneStep lr_one_step_oracle(const LrParams& prm, const LrState& x, std::int64_t replicates, std::uint64_t seed,
                             GradientSampler sampler = GradientSampler::Projected);

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

// Per-sample population checks at theta = (r + s) mu_hat + sqrt(R_perp) e_a.
struct SteinEstimate {
    MeanSe g_par;         // <g, mu_hat>
    MeanSe g_dir;         // <g, v> for v = cos(phi) e_a + sin(phi) e_w
    double phi = 0.0;     // random angle defining v
    MeanSe g_perp_sq;     // |g_perp|^2
    MeanSe label_rate;    // fraction of rare-class draws
    std::int64_t samples = 0;
};

SteinEstimate lr_stein_check(const LrParams& prm, double s, double R_perp, std::int64_t samples, std::uint64_t seed);

}  // namespace spm
