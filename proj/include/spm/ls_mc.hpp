#pragma once
// Monte Carlo simulation of SGD with momentum on the gated Gaussian least
// squares model, recorded on the active-update clock.

#include "spm/ls_moment_ode.hpp"
#include "spm/scaling.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace spm {

enum class McMode { ExplicitSteps, FastForward };

// How the active-batch gradient is drawn. PerSample draws the N active
// feature vectors; Projected draws the same law in O(d) from the
// decomposition along the current error direction.
enum class GradientSampler { PerSample, Projected };

std::string to_string(McMode m);
McMode mc_mode_from_string(const std::string& s);
std::string to_string(GradientSampler g);
GradientSampler gradient_sampler_from_string(const std::string& s);

struct McConfig {
    InstanceParams params;
    double theta_star_norm = 1.0;
    int n_seeds = 1;
    std::int64_t max_active_updates = 1;
    McMode mode = McMode::FastForward;
    GradientSampler sampler = GradientSampler::PerSample;
    std::uint64_t master_seed = 0;
    // Active-update indices to record (ascending, within [0, max]); empty records all.
    std::vector<std::int64_t> record_at;
    int threads = 0;  // 0 uses the hardware concurrency
    bool override_budget = false;
    // Fixed target; empty draws theta* uniformly on the sphere per seed.
    Eigen::VectorXd theta_star;
};

struct McEnsembleResult {
    std::vector<std::int64_t> index;
    std::vector<double> mean_R, se_R, mean_V, se_V, mean_C, se_C;
    int n_seeds = 0;
    std::vector<bool> diverged;                 // per seed
    std::vector<std::int64_t> divergence_index; // per seed, -1 when finite throughout
};

// Error and momentum: e = theta - theta*, m.
struct LsState {
    Eigen::VectorXd e;
    Eigen::VectorXd m;
};

MomentState moments(const LsState& s);

// Features of one active batch, one row per active sample (N >= 1 rows).
struct ActiveBatch {
    Eigen::MatrixXd features;
    std::int64_t B = 1;
};

// K - 1 empty steps in closed form, then one active update with `batch`.
void fast_forward_step(LsState& state, std::int64_t K, const ActiveBatch& batch, const InstanceParams& params);

McEnsembleResult simulate(const McConfig& config);

// One minibatch as seen by an observer. Explicit mode reports every
// minibatch including empty ones; fast-forward reports active updates only,
// with `before` taken after the closed-form drift. `gradient` is null when N = 0.
struct StepEvent {
    std::int64_t active_index = 0;
    std::uint64_t N = 0;
    const LsState* before = nullptr;
    const LsState* after = nullptr;
    const Eigen::VectorXd* gradient = nullptr;
};
using StepObserver = std::function<void(const StepEvent&)>;

// Single-seed run; rows are (R, V, C) at the recorded indices.
std::vector<MomentState> simulate_seed(const McConfig& config, int seed_index,
                                       std::int64_t* divergence_index = nullptr, const StepObserver& observer = {});

// Empirical one-step drift E[Delta(R,V,C)] from a fixed state with the given
// moments, per active update.
struct OneStepEstimate {
    Vec3 mean = Vec3::Zero();
    Vec3 se = Vec3::Zero();
    std::int64_t replicates = 0;
};
OneStepEstimate one_step_oracle(const InstanceParams& params, const MomentState& state, std::int64_t replicates,
                                std::uint64_t seed, GradientSampler sampler = GradientSampler::PerSample);

// Sizes accepted without override_budget: B * d per active step.
constexpr double kMcBudget = 1e9;

}  // namespace spm
