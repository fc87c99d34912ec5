#include "spm/harness/reports.hpp"

#include "spm/harness/parallel.hpp"
#include "spm/ls_moment_ode.hpp"
#include "spm/stability.hpp"

#include <cmath>
#include <stdexcept>

namespace spm {

nlohmann::json ConvergenceReport::to_json() const {
    nlohmann::json j;
    j["d_values"] = d_values;
    j["monotone"] = monotone;
    j["absent_columns"] = absent;
    for (const auto& c : columns)
        j["columns"][c.column] = {{"sup_rel_error", c.sup_rel_error}, {"monotone", c.monotone}};
    return j;
}

ConvergenceReport convergence_report(const std::vector<Trajectory>& finite_d, const std::vector<double>& d_values,
                                     const Trajectory& limit, const std::vector<std::string>& columns) {
    if (finite_d.size() != d_values.size()) throw std::invalid_argument("convergence_report: one trajectory per d");
    for (const auto& tr : finite_d)
        if (tr.times != limit.times) throw std::invalid_argument("convergence_report: time grids differ");
    ConvergenceReport rep;
    rep.d_values = d_values;
    for (const auto& name : columns) {
        const std::size_t li = limit.column_index(name);
        double sup = 0.0;
        bool finite = true;
        for (const auto& row : limit.states) {
            finite = finite && std::isfinite(row[li]);
            sup = std::max(sup, std::fabs(row[li]));
        }
        if (!finite) {
            rep.absent.push_back(name);
            continue;
        }
        ColumnError ce;
        ce.column = name;
        for (const auto& tr : finite_d) {
            const std::size_t ti = tr.column_index(name);
            double err = 0.0;
            for (std::size_t i = 0; i < tr.size(); ++i)
                err = std::max(err, std::fabs(tr.states[i][ti] - limit.states[i][li]));
            ce.sup_rel_error.push_back(sup > 0.0 ? err / sup : err);
        }
        for (std::size_t i = 1; i < ce.sup_rel_error.size(); ++i)
            if (ce.sup_rel_error[i] > ce.sup_rel_error[i - 1]) ce.monotone = false;
        rep.monotone = rep.monotone && ce.monotone;
        rep.columns.push_back(std::move(ce));
    }
    return rep;
}

// ---- spectral conflict ----

SpectralConflictReport spectral_conflict(std::int64_t V, double zipf, std::int64_t d, double B, double beta) {
    if (V < 2) throw std::invalid_argument("spectral_conflict: V must be >= 2");
    if (d < 2) throw std::invalid_argument("spectral_conflict: d must be >= 2");
    if (!(B >= 1.0)) throw std::invalid_argument("spectral_conflict: B must be >= 1");
    if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("spectral_conflict: beta must lie in [0, 1)");
    if (!(zipf >= 0.0)) throw std::invalid_argument("spectral_conflict: zipf exponent must be >= 0");
    const double ld = std::log(static_cast<double>(d));
    SpectralConflictReport rep;
    rep.sigma = std::log(B) / ld;
    rep.gamma = -std::log1p(-beta) / ld;
    rep.kappa_max = std::log(static_cast<double>(V)) / ld;

    // Normalizer summed from the smallest terms up.
    double H = 0.0;
    for (std::int64_t r = V; r >= 1; --r) H += std::pow(static_cast<double>(r), -zipf);
    const double log_H = std::log(H);

    rep.rows.reserve(static_cast<std::size_t>(V));
    std::int64_t above = 0, conc = 0;
    for (std::int64_t r = 1; r <= V; ++r) {
        TokenRow row;
        row.rank = r;
        const double log_p = -zipf * std::log(static_cast<double>(r)) - log_H;
        row.p = std::exp(log_p);
        row.P_batch = -std::expm1(B * std::log1p(-row.p));
        row.kappa = -log_p / ld;
        row.kappa_eff = std::max(0.0, row.kappa - rep.sigma);
        row.above_resonance = rep.gamma > 1.0 - rep.sigma + row.kappa;
        row.concentrated = row.kappa < rep.sigma - 1.0;
        try {
            row.region = to_string(classify_region({row.kappa, rep.sigma, rep.gamma, {}}));
        } catch (const std::exception&) {
            row.region = "unclassified";
        }
        if (row.above_resonance) ++above;
        if (row.concentrated) ++conc;
        if (!rep.rows.empty() && rep.rows.back().above_resonance != row.above_resonance) {
            ++rep.n_crossings;
            if (!rep.crossing_rank) rep.crossing_rank = r;
        }
        rep.rows.push_back(std::move(row));
    }
    const double n = static_cast<double>(V);
    rep.fraction_above = static_cast<double>(above) / n;
    rep.fraction_below = 1.0 - rep.fraction_above;
    rep.fraction_concentrated = static_cast<double>(conc) / n;
    return rep;
}

Table SpectralConflictReport::table() const {
    Table t;
    std::vector<double> rank, p, P, k, ke, ab, co;
    std::vector<std::string> reg;
    for (const auto& r : rows) {
        rank.push_back(static_cast<double>(r.rank));
        p.push_back(r.p);
        P.push_back(r.P_batch);
        k.push_back(r.kappa);
        ke.push_back(r.kappa_eff);
        reg.push_back(r.region);
        ab.push_back(r.above_resonance ? 1.0 : 0.0);
        co.push_back(r.concentrated ? 1.0 : 0.0);
    }
    t.add("rank", std::move(rank));
    t.add("p_r", std::move(p));
    t.add("P_batch_r", std::move(P));
    t.add("kappa_r", std::move(k));
    t.add("kappa_eff_r", std::move(ke));
    t.add("region", std::move(reg));
    t.add("above_resonance", std::move(ab));
    t.add("concentrated", std::move(co));
    return t;
}

nlohmann::json SpectralConflictReport::summary() const {
    nlohmann::json j = {{"sigma", sigma},
                        {"gamma", gamma},
                        {"kappa_max", kappa_max},
                        {"n_crossings", n_crossings},
                        {"fraction_above", fraction_above},
                        {"fraction_below", fraction_below},
                        {"fraction_concentrated", fraction_concentrated}};
    j["crossing_rank"] = crossing_rank ? nlohmann::json(*crossing_rank) : nlohmann::json(nullptr);
    return j;
}

// ---- risk heatmap ----

namespace {

RiskCell risk_cell(const RiskHeatmapConfig& cfg, double kappa, double gamma) {
    RiskCell cell;
    cell.kappa = kappa;
    cell.gamma = gamma;
    try {
        const ScalingExponents e{kappa, cfg.sigma, gamma, {}};
        cell.region = to_string(classify_region(e));
        const InstanceParams base = instantiate(e, cfg.constants, cfg.d);
        const BatchFactors bf = batch_factors(base.p, base.B, base.d);
        const double per_update = base.p * static_cast<double>(base.B) / bf.P_batch;  // E[N | N >= 1]
        const double n = cfg.budget * static_cast<double>(cfg.d) / per_update;
        const EtaMaxResult em = find_eta_max(base, 1e-6);
        cell.eta_max = em.eta_max;
        if (!(em.eta_max > 0.0) || !std::isfinite(em.eta_max)) {
            cell.status = "no_stable_eta";
            cell.log10_risk = std::nan("");
            return cell;
        }
        auto risk = [&](double log_eta) {
            const auto m = build_main_matrix(make_params(base.d, base.p, base.B, base.eps, std::exp(log_eta)));
            return evolve_linear(m, MomentState{1.0, 0.0, 0.0}, {0.0, n}).states[1][0];
        };
        const double hi = std::log(em.eta_max * 0.999), lo = hi - 14.0;
        double best = risk(hi), best_le = hi;
        for (int i = 0; i < cfg.eta_points; ++i) {
            const double le = lo + (hi - lo) * i / (cfg.eta_points - 1);
            const double r = risk(le);
            if (r < best) {
                best = r;
                best_le = le;
            }
        }
        // Golden-section refinement within one scan cell.
        const double h = (hi - lo) / (cfg.eta_points - 1);
        double a = std::max(lo, best_le - h), b = std::min(hi, best_le + h);
        const double g = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = b - g * (b - a), x2 = a + g * (b - a), f1 = risk(x1), f2 = risk(x2);
        for (int it = 0; it < 40; ++it) {
            if (f1 < f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = risk(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = risk(x2);
            }
        }
        if (f1 < best) {
            best = f1;
            best_le = x1;
        }
        cell.eta_opt = std::exp(best_le);
        cell.log10_risk = std::log10(best);
    } catch (const std::exception& ex) {
        cell.status = std::string("error: ") + ex.what();
        cell.log10_risk = std::nan("");
    }
    return cell;
}

}  // namespace

std::vector<RiskCell> ls_risk_heatmap(const RiskHeatmapConfig& cfg) {
    if (cfg.kappas.empty() || cfg.gammas.empty()) throw std::invalid_argument("risk heatmap: empty grid");
    if (!(cfg.budget > 0.0)) throw std::invalid_argument("risk heatmap: budget must be positive");
    if (cfg.eta_points < 3) throw std::invalid_argument("risk heatmap: eta_points must be >= 3");
    const std::size_t nk = cfg.kappas.size(), n = nk * cfg.gammas.size();
    std::vector<RiskCell> cells(n);
    parallel_for(n, cfg.threads, [&](std::size_t i) { cells[i] = risk_cell(cfg, cfg.kappas[i % nk], cfg.gammas[i / nk]); });
    return cells;
}

Table risk_heatmap_table(const std::vector<RiskCell>& cells) {
    Table t;
    std::vector<double> k, g, r, eo, em;
    std::vector<std::string> reg, st;
    for (const auto& c : cells) {
        k.push_back(c.kappa);
        g.push_back(c.gamma);
        reg.push_back(c.region.empty() ? "unclassified" : c.region);
        r.push_back(c.log10_risk);
        eo.push_back(c.eta_opt);
        em.push_back(c.eta_max);
        st.push_back(c.status);
    }
    t.add("kappa", std::move(k));
    t.add("gamma", std::move(g));
    t.add("region", std::move(reg));
    t.add("log10_risk", std::move(r));
    t.add("eta_opt", std::move(eo));
    t.add("eta_max", std::move(em));
    t.add("status", std::move(st));
    return t;
}

}  // namespace spm
