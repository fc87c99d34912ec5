#pragma once
// Convergence summaries, the vocabulary spectral-conflict report, and the
// least-squares risk heatmap.

#include "spm/harness/io.hpp"
#include "spm/scaling.hpp"
#include "spm/trajectory.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spm {

struct ColumnError {
    std::string column;
    std::vector<double> sup_rel_error;  // per d: sup |x_d - x_lim| / sup |x_lim|
    bool monotone = true;               // nonincreasing in d
};

struct ConvergenceReport {
    std::vector<double> d_values;
    std::vector<ColumnError> columns;
    std::vector<std::string> absent;  // limit columns without finite values
    bool monotone = true;

    nlohmann::json to_json() const;
};

// Compares each trajectory against `limit` on the shared grid, for every
// requested column that the limit defines (all finite). Throws on grid mismatch.
ConvergenceReport convergence_report(const std::vector<Trajectory>& finite_d, const std::vector<double>& d_values,
                                     const Trajectory& limit, const std::vector<std::string>& columns);

// ---- spectral conflict ----

struct TokenRow {
    std::int64_t rank = 1;
    double p = 0.0;
    double P_batch = 0.0;  // 1 - (1 - p)^B
    double kappa = 0.0;    // -log_d p
    double kappa_eff = 0.0;
    std::string region;
    bool above_resonance = false;  // gamma > 1 - sigma + kappa
    bool concentrated = false;     // kappa < sigma - 1
};

struct SpectralConflictReport {
    double sigma = 0.0;
    double gamma = 0.0;
    double kappa_max = 0.0;  // log_d V
    std::vector<TokenRow> rows;
    std::optional<std::int64_t> crossing_rank;  // first rank below resonance after an above one
    std::int64_t n_crossings = 0;
    double fraction_above = 0.0;
    double fraction_below = 0.0;
    double fraction_concentrated = 0.0;

    Table table() const;
    nlohmann::json summary() const;
};

// Zipf p_r proportional to r^-zipf_exponent over ranks 1..V.
SpectralConflictReport spectral_conflict(std::int64_t V, double zipf_exponent, std::int64_t d, double B, double beta);

// ---- least-squares risk heatmap ----

struct RiskCell {
    double kappa = 0.0;
    double gamma = 0.0;
    std::string region;
    double log10_risk = 0.0;  // at the best eta found
    double eta_opt = 0.0;
    double eta_max = 0.0;
    std::string status = "ok";
};

struct RiskHeatmapConfig {
    double sigma = 1.2;
    std::int64_t d = 1000;
    std::vector<double> kappas;
    std::vector<double> gammas;
    ScalingConstants constants;
    // Budget of nonzero per-sample gradients, in units of d.
    double budget = 10.0;
    int eta_points = 61;
    int threads = 0;
};

// Last-iterate main-ODE risk after the budget at the best stable eta, per cell.
// A failing cell is reported with its status; the sweep continues.
std::vector<RiskCell> ls_risk_heatmap(const RiskHeatmapConfig& cfg);
Table risk_heatmap_table(const std::vector<RiskCell>& cells);

}  // namespace spm
