#include "spm/harness/run.hpp"

#include "spm/harness/io.hpp"
#include "spm/harness/reports.hpp"
#include "spm/lr_dynamics.hpp"
#include "spm/lr_mc.hpp"
#include "spm/ls_limits.hpp"
#include "spm/ls_mc.hpp"
#include "spm/ls_moment_ode.hpp"
#include "spm/stability.hpp"

#include <chrono>
#include <ctime>

namespace spm {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

double num(const json& s, const char* k) { return s.at(k).get<double>(); }
std::int64_t whole(const json& s, const char* k) { return s.at(k).get<std::int64_t>(); }
std::string str(const json& s, const char* k) { return s.at(k).get<std::string>(); }

struct Context {
    const json& s;
    fs::path out;
    json outputs = json::array();
    json warnings = json::array();
    json summary = json::object();

    void csv(const std::string& name, const Table& t) {
        write_csv(out / name, t);
        outputs.push_back(name);
    }
    void sidecar(const std::string& name, const json& j) {
        write_json(out / name, j);
        outputs.push_back(name);
    }
    void warn(const std::vector<std::string>& w) {
        for (const auto& x : w) warnings.push_back(x);
    }
};

ScalingExponents ls_exponents(const json& s) {
    ScalingExponents e{num(s, "kappa"), num(s, "sigma"), num(s, "gamma"), {}};
    if (!s.at("alpha_eta").is_null()) e.alpha_eta = num(s, "alpha_eta");
    return e;
}

ScalingConstants ls_constants(const json& s) {
    return {num(s, "p_star"), num(s, "B_star"), num(s, "eps_star"), num(s, "eta_star")};
}

InstanceParams ls_instance(Context& cx) {
    const json& s = cx.s;
    InstanceParams ip = instantiate(ls_exponents(s), ls_constants(s), whole(s, "d"));
    const bool explicit_any = !s.at("p").is_null() || !s.at("B").is_null() || !s.at("eps").is_null() ||
                              !s.at("eta").is_null();
    if (explicit_any) {
        auto w = ip.warnings;
        ip = make_params(ip.d, s.at("p").is_null() ? ip.p : num(s, "p"), s.at("B").is_null() ? ip.B : whole(s, "B"),
                         s.at("eps").is_null() ? ip.eps : num(s, "eps"), s.at("eta").is_null() ? ip.eta : num(s, "eta"));
        ip.warnings.insert(ip.warnings.begin(), w.begin(), w.end());
    }
    cx.warn(ip.warnings);
    return ip;
}

json params_json(const InstanceParams& ip) {
    return {{"d", ip.d}, {"p", ip.p}, {"B", ip.B}, {"eps", ip.eps}, {"beta", ip.beta}, {"eta", ip.eta}};
}

MomentState ls_initial(const json& s) { return {num(s, "R0"), num(s, "V0"), num(s, "C0")}; }

json verdict_json(const StabilityVerdict& v) {
    return {{"stable", v.stable},     {"c1_pos", v.c1_pos}, {"c2_pos", v.c2_pos},
            {"c3_pos", v.c3_pos},     {"c1c2_gt_c3", v.c1c2_gt_c3},
            {"binding", to_string(v.binding)}, {"margin", v.margin}};
}

void run_ls_ode(Context& cx) {
    const InstanceParams ip = ls_instance(cx);
    const DriftMatrix m = build_main_matrix(ip);
    const auto n = static_cast<std::size_t>(whole(cx.s, "n_points"));
    const std::vector<double> t = cx.s.at("t_max").is_null() ? default_time_grid(m, n)
                                                              : linspace(0.0, num(cx.s, "t_max"), n);
    Trajectory tr = evolve_linear(m, ls_initial(cx.s), t);
    const Clock clock = clock_from_string(str(cx.s, "clock"));
    if (clock == Clock::Slow) throw ConfigError("$.clock: use ls-limit or ls-compare for the slow clock");
    if (clock != tr.clock) tr = clock_convert(tr, clock, m.batch.P_batch);
    cx.csv("trajectory.csv", trajectory_table(tr));
    const ScaledTransform st = scaled_transform(m);
    const TimescaleReport ts = spectrum_report(m);
    json side = {{"params", params_json(ip)},
                 {"transform", {{"Lambda_W", st.Lambda_W}, {"Lambda_Z", st.Lambda_Z}, {"P_batch", m.batch.P_batch}}},
                 {"solver", {{"method", "matrix exponential"}, {"rho", ts.rho}, {"tau_learn", ts.tau_learn}}},
                 {"metadata", tr.metadata}};
    cx.sidecar("trajectory.json", side);
    cx.summary = {{"final_R", tr.states.back()[0]}, {"params", params_json(ip)}};
}

void run_ls_mc(Context& cx) {
    const json& s = cx.s;
    McConfig c;
    c.params = ls_instance(cx);
    c.theta_star_norm = num(s, "theta_star_norm");
    c.n_seeds = static_cast<int>(whole(s, "n_seeds"));
    c.max_active_updates = whole(s, "max_active_updates");
    c.mode = mc_mode_from_string(str(s, "mc_mode"));
    c.sampler = gradient_sampler_from_string(str(s, "sampler"));
    c.master_seed = static_cast<std::uint64_t>(whole(s, "seed"));
    c.threads = static_cast<int>(whole(s, "threads"));
    c.override_budget = s.at("override_budget").get<bool>();
    const std::int64_t stride = whole(s, "record_stride");
    if (stride < 1) throw ConfigError("$.record_stride: must be >= 1");
    for (std::int64_t i = 0; i < c.max_active_updates; i += stride) c.record_at.push_back(i);
    c.record_at.push_back(c.max_active_updates);
    const McEnsembleResult r = simulate(c);
    Table t;
    t.add("active_update_index", std::vector<double>(r.index.begin(), r.index.end()));
    t.add("mean_R", r.mean_R);
    t.add("se_R", r.se_R);
    t.add("mean_V", r.mean_V);
    t.add("se_V", r.se_V);
    t.add("mean_C", r.mean_C);
    t.add("se_C", r.se_C);
    cx.csv("ensemble.csv", t);
    cx.summary = {{"n_seeds", r.n_seeds},
                  {"diverged", r.diverged},
                  {"divergence_index", r.divergence_index},
                  {"params", params_json(c.params)}};
}

std::vector<double> limit_grid(const json& s, const LimitSystem& sys) {
    const auto n = static_cast<std::size_t>(whole(s, "n_points"));
    return s.at("tau_max").is_null() ? default_limit_grid(sys, n) : linspace(0.0, num(s, "tau_max"), n);
}

void run_ls_limit(Context& cx) {
    const LimitSystem sys = select_limit(ls_exponents(cx.s), ls_constants(cx.s));
    if (!sys.supported) cx.warnings.push_back(sys.note);
    const Trajectory tr = evolve_limit(sys, ls_initial(cx.s), limit_grid(cx.s, sys));
    cx.csv("limit.csv", trajectory_table(tr));
    cx.summary = {{"limit_kind", sys.kind()}, {"region", to_string(sys.region)}, {"metadata", tr.metadata}};
}

void run_ls_compare(Context& cx) {
    const ScalingExponents e = ls_exponents(cx.s);
    const ScalingConstants c = ls_constants(cx.s);
    const LimitSystem sys = select_limit(e, c);
    if (!sys.supported) cx.warnings.push_back(sys.note);
    const auto tau = limit_grid(cx.s, sys);
    const MomentState x0 = ls_initial(cx.s);
    const Trajectory lim = evolve_limit(sys, x0, tau);
    cx.csv("limit.csv", trajectory_table(lim));
    std::vector<Trajectory> mains;
    std::vector<double> ds;
    for (const auto& dj : cx.s.at("d_values")) {
        const auto d = dj.get<std::int64_t>();
        mains.push_back(main_on_slow_clock(e, c, d, tau, x0));
        ds.push_back(static_cast<double>(d));
        cx.csv("main_d" + std::to_string(d) + ".csv", trajectory_table(mains.back()));
    }
    const ConvergenceReport rep = convergence_report(mains, ds, lim, {"R", "V", "C"});
    json j = rep.to_json();
    j["limit_kind"] = sys.kind();
    j["region"] = to_string(sys.region);
    cx.sidecar("convergence.json", j);
    cx.summary = j;
}

void run_stability(Context& cx) {
    const InstanceParams ip = ls_instance(cx);
    const DriftMatrix m = build_main_matrix(ip);
    const CharPoly cp = char_poly(m);
    const EtaMaxResult em = find_eta_max(ip);
    const TimescaleReport ts = spectrum_report(m);
    json eig = json::array();
    for (const auto& z : ts.eigenvalues) eig.push_back({z.real(), z.imag()});
    std::string region = "unclassified";
    try {
        region = to_string(classify_region(ls_exponents(cx.s)));
    } catch (const std::exception&) {
    }
    cx.summary = {{"region", region},
                  {"params", params_json(ip)},
                  {"char_poly", {{"c1", cp.c1}, {"c2", cp.c2}, {"c3", cp.c3}}},
                  {"verdict", verdict_json(routh_hurwitz(cp))},
                  {"eta_max", {{"value", em.eta_max}, {"binding", to_string(em.binding)}, {"monotone", em.monotone}}},
                  {"spectrum",
                   {{"rho", ts.rho},
                    {"tau_learn", ts.tau_learn},
                    {"Delta", ts.Delta},
                    {"type", to_string(ts.spectral_type)},
                    {"eigenvalues", eig}}}};
    cx.sidecar("verdict.json", cx.summary);
}

std::vector<double> axis(const json& s, const std::string& name) {
    const auto n = whole(s, (name + "_points").c_str());
    if (n < 1) throw ConfigError("$." + name + "_points: must be >= 1");
    const double a = num(s, (name + "_min").c_str()), b = num(s, (name + "_max").c_str());
    return n == 1 ? std::vector<double>{a} : linspace(a, b, static_cast<std::size_t>(n));
}

void run_phase_map(Context& cx) {
    RiskHeatmapConfig c;
    c.sigma = num(cx.s, "sigma");
    c.d = whole(cx.s, "d");
    c.kappas = axis(cx.s, "kappa");
    c.gammas = axis(cx.s, "gamma");
    c.constants = ls_constants(cx.s);
    c.budget = num(cx.s, "budget");
    c.eta_points = static_cast<int>(whole(cx.s, "eta_points"));
    c.threads = static_cast<int>(whole(cx.s, "threads"));
    const auto cells = ls_risk_heatmap(c);
    cx.csv("heatmap.csv", risk_heatmap_table(cells));
    std::int64_t failed = 0;
    for (const auto& cell : cells) failed += cell.status != "ok";
    cx.summary = {{"cells", cells.size()}, {"failed_cells", failed}};
}

LrParams lr_params(const json& s) {
    return make_lr_params(num(s, "r"), num(s, "p"), whole(s, "B"), num(s, "eps"), num(s, "eta"), whole(s, "d"));
}

double lr_s0(const json& s) { return s.at("s0").is_null() ? -num(s, "r") : num(s, "s0"); }

void run_lr_ode(Context& cx) {
    const LrParams prm = lr_params(cx.s);
    const LrState x0{lr_s0(cx.s), 0.0, num(cx.s, "R0"), 0.0, 0.0};
    Lr5Options o;
    o.with_kl = cx.s.at("with_kl").get<bool>();
    const auto t = linspace(0.0, num(cx.s, "t_max"), static_cast<std::size_t>(whole(cx.s, "n_points")));
    const Trajectory tr = evolve_5var(x0, prm, t, coeff_mode_from_string(str(cx.s, "coeff_mode")), o);
    cx.csv("trajectory.csv", trajectory_table(tr));
    const auto& last = tr.states.back();
    cx.summary = {{"final", {{"s", last[0]}, {"R_perp", last[2]}, {"alpha", last[5]}, {"kl", last[6]}}}};
}

void run_lr_mc(Context& cx) {
    const json& s = cx.s;
    LrMcConfig c;
    c.params = lr_params(s);
    c.n_seeds = static_cast<int>(whole(s, "n_seeds"));
    c.max_steps = whole(s, "max_steps");
    c.record_stride = whole(s, "record_stride");
    c.master_seed = static_cast<std::uint64_t>(whole(s, "seed"));
    c.threads = static_cast<int>(whole(s, "threads"));
    c.sampler = gradient_sampler_from_string(str(s, "sampler"));
    c.override_budget = s.at("override_budget").get<bool>();
    if (!s.at("s0").is_null() || num(s, "R0") != 0.0) c.initial = LrState{lr_s0(s), 0.0, num(s, "R0"), 0.0, 0.0};
    const LrMcResult r = simulate_lr(c);
    Table t;
    t.add("step", std::vector<double>(r.step.begin(), r.step.end()));
    for (std::size_t k = 0; k < kLrStateColumns.size(); ++k) {
        t.add("mean_" + kLrStateColumns[k], r.mean[k]);
        t.add("se_" + kLrStateColumns[k], r.se[k]);
    }
    t.add("mean_alpha", r.mean_alpha);
    cx.csv("ensemble.csv", t);
    cx.summary = {{"n_seeds", r.n_seeds}, {"diverged", r.diverged}, {"divergence_index", r.divergence_index}};
}

LrConstants lr_constants(const json& s) {
    return {num(s, "p_star"), num(s, "B_star"), num(s, "eps_star"), num(s, "eta_star"), num(s, "r")};
}

void run_lr_compare(Context& cx) {
    const ScalingExponents e{num(cx.s, "kappa"), num(cx.s, "sigma"), num(cx.s, "gamma"), {}};
    std::vector<std::int64_t> ds;
    for (const auto& dj : cx.s.at("d_values")) ds.push_back(dj.get<std::int64_t>());
    const auto tau = linspace(0.0, num(cx.s, "tau_max"), static_cast<std::size_t>(whole(cx.s, "n_points")));
    const LrComparison cmp = compare_lr_reduced(e, lr_constants(cx.s), ds, tau, num(cx.s, "s0"), num(cx.s, "R0"));
    cx.csv("reduced.csv", trajectory_table(cmp.reduced));
    for (std::size_t i = 0; i < ds.size(); ++i)
        cx.csv("full_d" + std::to_string(ds[i]) + ".csv", trajectory_table(cmp.full[i]));
    json j = {{"region", to_string(classify_lr_region(e))},
              {"d_values", cmp.d_values},
              {"sup_err_s", cmp.sup_err_s},
              {"sup_rel_err_R_perp", cmp.sup_err_R},
              {"shrinking", cmp.shrinking}};
    cx.sidecar("convergence.json", j);
    cx.summary = j;
}

void run_lr_heatmap(Context& cx) {
    const auto cells = lr_heatmaps(axis(cx.s, "kappa"), axis(cx.s, "gamma"), num(cx.s, "sigma"), lr_constants(cx.s));
    Table t;
    std::vector<double> k, g, f, T;
    std::vector<std::string> reg;
    for (const auto& c : cells) {
        k.push_back(c.kappa);
        g.push_back(c.gamma);
        reg.push_back(to_string(c.region));
        f.push_back(c.floor);
        T.push_back(c.T_exponent);
    }
    t.add("kappa", std::move(k));
    t.add("gamma", std::move(g));
    t.add("region_tag", std::move(reg));
    t.add("floor_value_or_exponent", std::move(f));
    t.add("T_exponent", std::move(T));
    cx.csv("heatmap.csv", t);
    cx.summary = {{"cells", cells.size()}};
}

void run_spectral(Context& cx) {
    const auto rep = spectral_conflict(whole(cx.s, "V"), num(cx.s, "zipf"), whole(cx.s, "d"), num(cx.s, "B"),
                                       num(cx.s, "beta"));
    cx.csv("tokens.csv", rep.table());
    cx.summary = rep.summary();
    cx.sidecar("summary.json", cx.summary);
}

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

json run_experiment(const CommandSchema& schema, const json& settings) {
    check_settings(schema, settings);
    const auto start = std::chrono::steady_clock::now();
    Context cx{settings, fs::path(settings.at("out").get<std::string>())};
    fs::create_directories(cx.out);
    const std::string& n = schema.name;
    if (n == "ls-ode") run_ls_ode(cx);
    else if (n == "ls-mc") run_ls_mc(cx);
    else if (n == "ls-limit") run_ls_limit(cx);
    else if (n == "ls-compare") run_ls_compare(cx);
    else if (n == "stability") run_stability(cx);
    else if (n == "phase-map") run_phase_map(cx);
    else if (n == "lr-ode") run_lr_ode(cx);
    else if (n == "lr-mc") run_lr_mc(cx);
    else if (n == "lr-compare") run_lr_compare(cx);
    else if (n == "lr-heatmap") run_lr_heatmap(cx);
    else if (n == "spectral-conflict") run_spectral(cx);
    else throw ConfigError("unknown command '" + n + "'");
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest = {{"spec_version", kSpecVersion},
                     {"tool", kToolName},
                     {"tool_version", kToolVersion},
                     {"command", schema.name},
                     {"model", schema.model},
                     {"mode", schema.mode},
                     {"config", settings},
                     {"config_hash", settings_hash(settings)},
                     {"wall_time_s", wall},
                     {"created", utc_now()},
                     {"warnings", cx.warnings},
                     {"outputs", cx.outputs},
                     {"summary", cx.summary}};
    write_json(cx.out / "manifest.json", manifest);
    return manifest;
}

}  // namespace spm
