#include <doctest.h>

#include "spm/harness/config.hpp"
#include "spm/harness/io.hpp"
#include "spm/harness/reports.hpp"
#include "spm/harness/run.hpp"
#include "spm/ls_limits.hpp"
#include "spm/numerics/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

using namespace spm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("spm_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

json settings_for(const std::string& cmd, const json& overlay) {
    const auto& schema = command_schema(cmd);
    json s = default_settings(schema);
    apply_overlay(schema, s, overlay);
    return s;
}

}  // namespace

TEST_CASE("CSV round-trip is bit-exact") {
    RngStream rng(7, 0);
    std::vector<double> x;
    for (int i = 0; i < 2000; ++i) x.push_back(rng.normal() * std::pow(10.0, rng.uniform() * 600 - 300));
    const double nan = std::numeric_limits<double>::quiet_NaN(), inf = std::numeric_limits<double>::infinity();
    for (double v : {0.0, -0.0, nan, inf, -inf, 5e-324, 1.7976931348623157e308, 0.1, 1.0 / 3.0}) x.push_back(v);
    Table t;
    t.add("x", x);
    t.add("label", std::vector<std::string>(x.size(), "a,\"b\""));
    const Table back = parse_csv(to_csv(t));
    CHECK(tables_equal(t, back));
    CHECK(to_csv(back) == to_csv(t));
    CHECK(std::signbit(back.real("x")[1]));

    const auto dir = scratch("csv");
    write_csv(dir / "t.csv", t);
    CHECK(tables_equal(read_csv(dir / "t.csv"), t));
}

TEST_CASE("CSV errors") {
    CHECK_THROWS(parse_csv(""));
    CHECK_THROWS(parse_csv("a,b\n1\n"));
    CHECK_THROWS(parse_csv("a\n\"open\n"));
    Table t;
    t.add("a", std::vector<double>{1, 2});
    t.add("a", std::vector<double>{1, 2});
    CHECK_THROWS(to_csv(t));
    Table ragged;
    ragged.add("a", std::vector<double>{1, 2});
    ragged.add("b", std::vector<double>{1});
    CHECK_THROWS(ragged.validate());
}

TEST_CASE("trajectory tables keep the clock and columns") {
    const auto sys = select_limit({0.85, 1.2, 1.15, {}}, {1, 1, 1, 0.2});
    const Trajectory tr = evolve_limit(sys, {}, linspace(0, 5, 11));
    const Table t = trajectory_table(tr);
    CHECK(t.names == std::vector<std::string>{"clock", "time", "R", "V", "C"});
    CHECK(t.text("clock").front() == "slow");
    CHECK(tables_equal(parse_csv(to_csv(t)), t));
}

TEST_CASE("config validation reports field paths") {
    const auto& schema = command_schema("ls-compare");
    json s = default_settings(schema);
    const auto msg = [&](const json& overlay) {
        try {
            json copy = s;
            apply_overlay(schema, copy, overlay);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(msg({{"foo", 1}}).rfind("$.foo: unknown key", 0) == 0);
    CHECK(msg({{"d_values", {100, "x"}}}).rfind("$.d_values[1]", 0) == 0);
    CHECK(msg({{"d_values", {100, 2.5}}}).rfind("$.d_values[1]", 0) == 0);
    CHECK(msg({{"kappa", "high"}}).rfind("$.kappa", 0) == 0);
    CHECK(msg({{"kappa", nullptr}}).rfind("$.kappa: may not be null", 0) == 0);
    CHECK(msg({{"model", "lr"}}).rfind("$.model", 0) == 0);
    CHECK(msg({{"spec_version", 2}}).rfind("$.spec_version", 0) == 0);
    CHECK(msg(json::array()).rfind("$: expected an object", 0) == 0);
    CHECK(msg({{"model", "ls"}, {"mode", "compare"}, {"spec_version", 1}, {"d_values", {1e2, 1e3}}}).empty());
    apply_overlay(schema, s, {{"d_values", {1e2, 1e3}}, {"tau_max", 3}});
    CHECK(s["d_values"] == json({100, 1000}));
    CHECK(s["tau_max"].is_number_float());

    CHECK(parse_flag(*schema.find("d_values"), {"10", "20"}) == json({10, 20}));
    CHECK(parse_flag(*schema.find("tau_max"), {"null"}).is_null());
    CHECK_THROWS_AS(parse_flag(*schema.find("kappa"), {"1", "2"}), ConfigError);
    CHECK_THROWS_AS(parse_flag(*schema.find("kappa"), {"abc"}), ConfigError);

    CHECK(command_for("lr", "mc").name == "lr-mc");
    CHECK(command_for("ls", "spectral-conflict").name == "spectral-conflict");
    CHECK_THROWS_AS(command_for("ls", "nope"), ConfigError);
    CHECK_THROWS_AS(command_schema("nope"), ConfigError);
}

TEST_CASE("every subcommand accepts a seed; stochastic ones require it") {
    CHECK(command_schemas().size() == 11);
    for (const auto& sc : command_schemas()) {
        CHECK(sc.find("seed") != nullptr);
        CHECK(sc.find("out") != nullptr);
        const json s = default_settings(sc);
        if (sc.stochastic)
            CHECK_THROWS_AS(check_settings(sc, s), ConfigError);
        else
            CHECK_NOTHROW(check_settings(sc, s));
    }
    CHECK(command_schema("ls-mc").stochastic);
    CHECK(command_schema("lr-mc").stochastic);
}

TEST_CASE("config hash is stable and ignores the output path") {
    const json a = settings_for("ls-ode", {{"kappa", 0.5}});
    json b = a;
    b["out"] = "/elsewhere";
    CHECK(settings_hash(a) == settings_hash(b));
    CHECK(settings_hash(a).size() == 16);
    CHECK(settings_hash(a) != settings_hash(settings_for("ls-ode", {{"kappa", 0.6}})));
    CHECK(settings_hash(settings_for("ls-ode", {{"kappa", 0.5}})) == settings_hash(a));
    // Key order does not matter; FNV-1a of "{}" is a fixed value.
    CHECK(config_hash(json::parse(R"({"a":1,"b":2})")) == config_hash(json::parse(R"({"b":2,"a":1})")));
    CHECK(config_hash(json::object()) == "08f44b07b5901a25");
}

TEST_CASE("identical configs give identical manifests and bytes") {
    const auto dir = scratch("det");
    json s = settings_for("ls-mc", {{"seed", 5}, {"n_seeds", 4}, {"max_active_updates", 120}, {"record_stride", 40},
                                    {"threads", 1}, {"out", (dir / "a").string()}});
    const json ma = run_experiment(command_schema("ls-mc"), s);
    s["threads"] = 3;
    s["out"] = (dir / "b").string();
    json mb = run_experiment(command_schema("ls-mc"), s);
    CHECK(slurp(dir / "a" / "ensemble.csv") == slurp(dir / "b" / "ensemble.csv"));
    CHECK(ma["config_hash"] != mb["config_hash"]);  // threads is a setting

    s["threads"] = 1;
    s["out"] = (dir / "c").string();
    json mc = run_experiment(command_schema("ls-mc"), s);
    json strip_a = ma, strip_c = mc;
    for (auto* m : {&strip_a, &strip_c}) {
        m->erase("created");
        m->erase("wall_time_s");
        (*m)["config"].erase("out");
    }
    CHECK(strip_a == strip_c);
    CHECK(ma["spec_version"] == 1);
    CHECK(ma["summary"]["diverged"].size() == 4);
    const Table t = read_csv(dir / "a" / "ensemble.csv");
    CHECK(t.names == std::vector<std::string>{"active_update_index", "mean_R", "se_R", "mean_V", "se_V", "mean_C",
                                              "se_C"});
    CHECK(t.real("active_update_index") == std::vector<double>{0, 40, 80, 120});
}

TEST_CASE("emitted tables match the in-memory reports") {
    const auto dir = scratch("emit");
    const json s = settings_for("spectral-conflict", {{"V", 500}, {"d", 64}, {"B", 8.0}, {"beta", 0.99},
                                                       {"out", dir.string()}});
    const json m = run_experiment(command_schema("spectral-conflict"), s);
    CHECK(m["outputs"] == json({"tokens.csv", "summary.json"}));
    const auto rep = spectral_conflict(500, 1.0, 64, 8.0, 0.99);
    CHECK(tables_equal(read_csv(dir / "tokens.csv"), rep.table()));
    CHECK(read_json(dir / "summary.json") == rep.summary());

    for (const std::string cmd : {"ls-ode", "ls-limit", "lr-ode", "lr-heatmap", "stability"}) {
        const auto sub = dir / cmd;
        json cfg = settings_for(cmd, {{"out", sub.string()}});
        if (cmd == "lr-ode") cfg["t_max"] = 200.0;
        const json mm = run_experiment(command_schema(cmd), cfg);
        for (const auto& name : mm["outputs"]) {
            const std::string file = name.get<std::string>();
            if (file.size() > 4 && file.substr(file.size() - 4) == ".csv")
                CHECK(to_csv(read_csv(sub / file)) == slurp(sub / file));
        }
    }
    CHECK(read_csv(dir / "lr-heatmap" / "heatmap.csv").names ==
          std::vector<std::string>{"kappa", "gamma", "region_tag", "floor_value_or_exponent", "T_exponent"});
    CHECK(read_csv(dir / "lr-ode" / "trajectory.csv").names ==
          std::vector<std::string>{"clock", "time", "s", "u", "R_perp", "V_perp", "C_perp", "alpha", "kl"});
    CHECK(read_json(dir / "ls-limit" / "manifest.json")["summary"]["limit_kind"] == "heavy_ball2d");
}

TEST_CASE("convergence report") {
    const ScalingExponents e{0.85, 1.2, 1.15, {}};
    const ScalingConstants c{1, 1, 1, 0.2};
    const auto sys = select_limit(e, c);
    const auto tau = default_limit_grid(sys, 200);
    const Trajectory lim = evolve_limit(sys, {}, tau);

    const auto same = convergence_report({lim, lim}, {1, 2}, lim, {"R", "V", "C"});
    for (const auto& col : same.columns)
        for (double err : col.sup_rel_error) CHECK(err == 0.0);

    std::vector<Trajectory> mains;
    for (std::int64_t d : {100, 1000, 10000}) mains.push_back(main_on_slow_clock(e, c, d, tau));
    const auto rep = convergence_report(mains, {1e2, 1e3, 1e4}, lim, {"R", "V", "C"});
    REQUIRE(rep.columns.size() == 3);
    const auto& R = rep.columns[0].sup_rel_error;
    CHECK(R[1] < R[0]);
    CHECK(R[2] < R[1]);
    CHECK(rep.monotone);
    // The reference comparison computes the same R error.
    const auto ref = compare_main_limit(e, c, {100, 1000, 10000}, tau);
    for (std::size_t i = 0; i < 3; ++i) CHECK(R[i] == doctest::Approx(ref.sup_rel_error[i]).epsilon(1e-12));

    // A below-resonance region has a one-dimensional limit.
    const ScalingExponents eb{0.85, 1.2, 0.325, {}};
    const ScalingConstants cb{0.5, 2.0, 1, 0.2};
    const auto sb = select_limit(eb, cb);
    const auto tb = default_limit_grid(sb, 100);
    const auto lb = evolve_limit(sb, {}, tb);
    const auto rb = convergence_report({main_on_slow_clock(eb, cb, 1000, tb)}, {1e3}, lb, {"R", "V", "C"});
    CHECK(rb.absent == std::vector<std::string>{"V", "C"});
    CHECK(rb.columns.size() == 1);
    CHECK(rb.to_json()["absent_columns"] == json({"V", "C"}));

    auto shifted = lim;
    shifted.times.back() += 1.0;
    CHECK_THROWS(convergence_report({shifted}, {1}, lim, {"R"}));
    CHECK_THROWS(convergence_report({lim}, {1, 2}, lim, {"R"}));
}

TEST_CASE("spectral conflict: degenerate and published inputs") {
    const auto flat = spectral_conflict(1000, 0.0, 4096, 1.0, 0.5);
    CHECK(flat.n_crossings == 0);
    CHECK_FALSE(flat.crossing_rank.has_value());
    for (const auto& r : flat.rows) {
        CHECK(r.region == flat.rows.front().region);
        CHECK(r.p == doctest::Approx(1e-3).epsilon(1e-12));
    }

    const auto llama = spectral_conflict(128256, 1.0, 4096, 4e6, 0.9);
    CHECK(std::fabs(llama.sigma - 1.8) < 0.05);
    CHECK(std::fabs(llama.kappa_max - 1.4) < 0.05);
    CHECK(llama.kappa_max < llama.sigma);
    CHECK(llama.sigma == doctest::Approx(std::log(4e6) / std::log(4096.0)).epsilon(1e-14));
    for (const auto& r : llama.rows) CHECK(r.kappa_eff == 0.0);

    CHECK_THROWS(spectral_conflict(1000, 1.0, 4096, 1.0, 1.0));
    CHECK_THROWS(spectral_conflict(1, 1.0, 4096, 1.0, 0.5));
    CHECK_THROWS(spectral_conflict(10, -1.0, 4096, 1.0, 0.5));
}

TEST_CASE("spectral conflict: B = 1 crossing matches a brute-force scan") {
    const std::int64_t d = 4096, V = 128256;
    // gamma = 1.6 puts the resonance line at kappa = 0.6, inside (kappa_1, kappa_max).
    const double beta = 1.0 - std::pow(static_cast<double>(d), -1.6);
    const auto rep = spectral_conflict(V, 1.0, d, 1.0, beta);
    CHECK(rep.sigma == 0.0);
    REQUIRE(rep.crossing_rank.has_value());
    CHECK(rep.n_crossings == 1);

    long double H = 0;
    for (std::int64_t r = 1; r <= V; ++r) H += 1.0L / r;
    std::int64_t first_below = -1;
    for (std::int64_t r = 1; r <= V && first_below < 0; ++r) {
        const double kappa = std::log(static_cast<double>(r * H)) / std::log(static_cast<double>(d));
        if (!(1.6 > 1.0 + kappa)) first_below = r;
    }
    CHECK(*rep.crossing_rank == first_below);
    CHECK(first_below > 1);
    CHECK(first_below < V);
    CHECK(rep.fraction_above == doctest::Approx(static_cast<double>(first_below - 1) / V));
    CHECK(rep.fraction_above + rep.fraction_below == doctest::Approx(1.0));
}

TEST_CASE("spectral conflict invariants over random inputs") {
    RngStream rng(21, 0);
    for (int trial = 0; trial < 40; ++trial) {
        const auto V = static_cast<std::int64_t>(2 + rng.uniform() * 3000);
        const double zipf = rng.uniform() * 2.5;
        const auto d = static_cast<std::int64_t>(16 + rng.uniform() * 5000);
        const double B = std::exp(rng.uniform() * 10);
        const double beta = rng.uniform() * 0.9999;
        const auto rep = spectral_conflict(V, zipf, d, B, beta);
        CHECK(rep.n_crossings <= 1);
        for (std::size_t i = 1; i < rep.rows.size(); ++i) {
            CHECK(rep.rows[i].kappa_eff >= rep.rows[i - 1].kappa_eff);
            CHECK(rep.rows[i].P_batch <= rep.rows[i - 1].P_batch);
        }
        double total = 0;
        for (const auto& r : rep.rows) total += r.p;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("risk heatmap: per-cell status and the sparse optimum") {
    RiskHeatmapConfig cfg;
    cfg.kappas = {-0.3, 0.2, 1.2};
    cfg.gammas = {0.3};
    cfg.constants = {1, 1, 1, 1};
    const auto cells = ls_risk_heatmap(cfg);
    REQUIRE(cells.size() == 3);
    CHECK(cells[0].status.rfind("error", 0) == 0);
    CHECK(std::isnan(cells[0].log10_risk));
    CHECK(cells[1].status == "ok");
    CHECK(cells[2].status == "ok");
    CHECK(cells[2].eta_opt < cells[2].eta_max);
    const Table t = risk_heatmap_table(cells);
    CHECK(tables_equal(parse_csv(to_csv(t)), t));

    // Dense side is worse by orders of magnitude; kappa = sigma sits on the
    // sparse plateau within a tenth of a decade of the row minimum.
    cfg.kappas = linspace(0.0, 2.4, 13);
    cfg.gammas = {0.2, 0.5};
    const auto grid = ls_risk_heatmap(cfg);
    for (std::size_t g = 0; g < 2; ++g) {
        double best = 1e300, at_sigma = 0, dense = 0;
        for (std::size_t k = 0; k < 13; ++k) {
            const auto& c = grid[g * 13 + k];
            REQUIRE(c.status == "ok");
            best = std::min(best, c.log10_risk);
            if (k == 6) at_sigma = c.log10_risk;
            if (k == 0) dense = c.log10_risk;
        }
        CHECK(at_sigma - best < 0.1);
        CHECK(dense - at_sigma > 2.0);
    }
    CHECK_THROWS(ls_risk_heatmap(RiskHeatmapConfig{}));
}

TEST_CASE("command-line interface") {
    const char* cli = std::getenv("SPM_CLI");
    if (!cli) {
        MESSAGE("SPM_CLI not set; skipping CLI checks");
        return;
    }
    const auto dir = scratch("cli");
    const auto sh = [&](const std::string& args) {
        const std::string cmd = std::string(cli) + " " + args + " > " + (dir / "stdout").string() + " 2> " +
                                (dir / "stderr").string();
        const int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    };
    CHECK(sh("") == 2);
    CHECK(sh("--help") == 0);

    CHECK(sh("stability --kappa 0.85 --sigma 1.2 --gamma 1.15 --d 1000 --eta 0.01 --out " + (dir / "st").string()) == 0);
    const json v = json::parse(slurp(dir / "stdout"));
    CHECK(v["verdict"]["stable"] == true);
    CHECK(v["params"]["eta"] == 0.01);

    CHECK(sh("ls-mc --out " + (dir / "mc").string()) == 2);
    CHECK(slurp(dir / "stderr").find("$.seed") != std::string::npos);

    {
        std::ofstream(dir / "bad.json") << R"({"model": "ls", "mode": "compare", "foo": 1})";
    }
    CHECK(sh("run --config " + (dir / "bad.json").string()) == 2);
    CHECK(slurp(dir / "stderr").find("$.foo") != std::string::npos);
    {
        std::ofstream(dir / "empty.json") << "{}";
    }
    CHECK(sh("run --config " + (dir / "empty.json").string()) == 2);

    // --config overrides flags.
    {
        std::ofstream(dir / "sc.json") << R"({"V": 300, "d": 64, "B": 2})";
    }
    CHECK(sh("spectral-conflict --V 50 --config " + (dir / "sc.json").string() + " --out " + (dir / "sc").string()) == 0);
    CHECK(read_csv(dir / "sc" / "tokens.csv").rows() == 300);

    {
        std::ofstream(dir / "lr.json") << R"({"model": "lr", "mode": "mc", "n_seeds": 2, "max_steps": 20, "record_stride": 10, "d": 20})";
    }
    CHECK(sh("run --seed 4 --config " + (dir / "lr.json").string() + " --out " + (dir / "lr").string()) == 0);
    const json m = read_json(dir / "lr" / "manifest.json");
    CHECK(m["command"] == "lr-mc");
    CHECK(m["config"]["seed"] == 4);
    CHECK(read_csv(dir / "lr" / "ensemble.csv").names.back() == "mean_alpha");
}
