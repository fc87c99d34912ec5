#include "spm/harness/config.hpp"

#include "spm/harness/io.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace spm {

namespace {

using nlohmann::json;

Field real(std::string name, json def, std::string help) { return {std::move(name), FieldType::Real, std::move(def), std::move(help)}; }
Field integer(std::string name, json def, std::string help) { return {std::move(name), FieldType::Int, std::move(def), std::move(help)}; }
Field text(std::string name, json def, std::string help) { return {std::move(name), FieldType::Text, std::move(def), std::move(help)}; }
Field flag(std::string name, bool def, std::string help) { return {std::move(name), FieldType::Bool, def, std::move(help)}; }

void append(std::vector<Field>& to, const std::vector<Field>& from) { to.insert(to.end(), from.begin(), from.end()); }

// LS scaling point; the defaults are the dense-above setting.
std::vector<Field> ls_point(bool with_d) {
    std::vector<Field> f = {real("kappa", 0.85, "sparsity exponent"),
                            real("sigma", 1.2, "batch exponent"),
                            real("gamma", 1.15, "momentum exponent"),
                            real("alpha_eta", nullptr, "learning-rate exponent (derived when unset)"),
                            real("p_star", 1.0, "sparsity constant"),
                            real("B_star", 1.0, "batch constant"),
                            real("eps_star", 1.0, "momentum constant"),
                            real("eta_star", 0.2, "learning-rate constant")};
    if (with_d) f.push_back(integer("d", 1000, "dimension"));
    return f;
}

std::vector<Field> ls_overrides() {
    return {real("p", nullptr, "explicit activation probability"), integer("B", nullptr, "explicit batch size"),
            real("eps", nullptr, "explicit momentum gap 1 - beta"), real("eta", nullptr, "explicit learning rate")};
}

std::vector<Field> ls_initial() {
    return {real("R0", 1.0, "initial R"), real("V0", 0.0, "initial V"), real("C0", 0.0, "initial C")};
}

std::vector<Field> lr_instance() {
    return {real("r", 1.0, "signal norm"),         real("p", 0.01, "rare-class probability"),
            integer("B", 1, "batch size"),         real("eps", 0.1, "momentum gap 1 - beta"),
            real("eta", 0.1, "learning rate"),     integer("d", 100, "dimension"),
            real("s0", nullptr, "initial signal error (default -r)"), real("R0", 0.0, "initial R_perp")};
}

std::vector<Field> lr_point() {
    return {real("kappa", 1.2, "sparsity exponent"), real("sigma", 1.6, "batch exponent"),
            real("gamma", 1.0, "momentum exponent"), real("p_star", 0.5, "sparsity constant"),
            real("B_star", 1.0, "batch constant"),   real("eps_star", 0.5, "momentum constant"),
            real("eta_star", 0.3, "learning-rate constant"), real("r", 0.5, "signal norm")};
}

std::vector<Field> grid(double k0, double k1, double g0, double g1) {
    return {real("kappa_min", k0, "first kappa"),  real("kappa_max", k1, "last kappa"),
            integer("kappa_points", 40, "kappa grid size"), real("gamma_min", g0, "first gamma"),
            real("gamma_max", g1, "last gamma"),  integer("gamma_points", 40, "gamma grid size")};
}

CommandSchema make(std::string name, std::string model, std::string mode, std::string help, bool stochastic,
                   std::vector<Field> fields) {
    CommandSchema s{std::move(name), std::move(model), std::move(mode), std::move(help), stochastic, {}};
    s.fields = {integer("seed", nullptr, "master seed"), text("out", ".", "output directory")};
    append(s.fields, fields);
    return s;
}

std::vector<CommandSchema> build_schemas() {
    std::vector<CommandSchema> all;
    {
        auto f = ls_point(true);
        append(f, ls_overrides());
        append(f, ls_initial());
        append(f, {integer("n_points", 512, "time grid size"), real("t_max", nullptr, "last active update"),
                   text("clock", "active_update", "output clock: active_update or minibatch")});
        all.push_back(make("ls-ode", "ls", "main-ode", "Least-squares main moment ODE", false, f));
    }
    {
        auto f = ls_point(true);
        append(f, ls_overrides());
        append(f, {real("theta_star_norm", 1.0, "target norm"), integer("n_seeds", 16, "ensemble size"),
                   integer("max_active_updates", 2000, "active updates per seed"),
                   integer("record_stride", 50, "recording stride in active updates"),
                   text("mc_mode", "fast-forward", "fast-forward or explicit-steps"),
                   text("sampler", "projected", "projected or per-sample"), integer("threads", 0, "workers"),
                   flag("override_budget", false, "allow very large runs")});
        all.push_back(make("ls-mc", "ls", "mc", "Least-squares Monte Carlo ensemble", true, f));
    }
    {
        auto f = ls_point(false);
        append(f, ls_initial());
        append(f, {integer("n_points", 400, "tau grid size"), real("tau_max", nullptr, "last slow time")});
        all.push_back(make("ls-limit", "ls", "limit-ode", "Least-squares limit ODE of a region", false, f));
    }
    {
        auto f = ls_point(false);
        append(f, ls_initial());
        append(f, {{"d_values", FieldType::IntList, json::array({100, 1000, 10000}), "dimensions to compare"},
                   integer("n_points", 400, "tau grid size"), real("tau_max", nullptr, "last slow time")});
        all.push_back(make("ls-compare", "ls", "compare", "Finite-d main ODE against the limit", false, f));
    }
    {
        auto f = ls_point(true);
        append(f, ls_overrides());
        all.push_back(make("stability", "ls", "stability", "Routh-Hurwitz verdict and eta_max", false, f));
    }
    {
        std::vector<Field> f = {real("sigma", 1.2, "batch exponent"), integer("d", 1000, "dimension")};
        append(f, grid(0.0, 2.4, 0.0, 2.0));
        append(f, {real("p_star", 1.0, "sparsity constant"), real("B_star", 1.0, "batch constant"),
                   real("eps_star", 1.0, "momentum constant"), real("eta_star", 1.0, "learning-rate constant"),
                   real("budget", 10.0, "nonzero per-sample gradients, in units of d"),
                   integer("eta_points", 61, "learning-rate scan size"), integer("threads", 0, "workers")});
        all.push_back(make("phase-map", "ls", "heatmap", "Least-squares risk heatmap over (kappa, gamma)", false, f));
    }
    {
        auto f = lr_instance();
        append(f, {integer("n_points", 201, "time grid size"), real("t_max", 10000.0, "last step"),
                   text("coeff_mode", "tame", "tame or exact"), flag("with_kl", true, "fill the kl column")});
        all.push_back(make("lr-ode", "lr", "main-ode", "Logistic five-variable ODE", false, f));
    }
    {
        auto f = lr_instance();
        append(f, {integer("n_seeds", 16, "ensemble size"), integer("max_steps", 2000, "steps per seed"),
                   integer("record_stride", 50, "recording stride in steps"),
                   text("sampler", "projected", "projected or per-sample"), integer("threads", 0, "workers"),
                   flag("override_budget", false, "allow very large runs")});
        all.push_back(make("lr-mc", "lr", "mc", "Logistic Monte Carlo ensemble", true, f));
    }
    {
        auto f = lr_point();
        append(f, {{"d_values", FieldType::IntList, json::array({100, 1000, 10000}), "dimensions to compare"},
                   real("tau_max", 40.0, "last slow time"), integer("n_points", 201, "tau grid size"),
                   real("s0", 0.3, "initial signal error"), real("R0", 0.3, "initial R_perp")});
        all.push_back(make("lr-compare", "lr", "compare", "Full logistic ODE against the reduced system", false, f));
    }
    {
        std::vector<Field> f = {real("sigma", 1.6, "batch exponent")};
        append(f, grid(0.0, 2.4, 0.0, 2.0));
        append(f, {real("p_star", 0.5, "sparsity constant"), real("B_star", 1.0, "batch constant"),
                   real("eps_star", 0.5, "momentum constant"), real("eta_star", 0.3, "learning-rate constant"),
                   real("r", 0.5, "signal norm")});
        all.push_back(make("lr-heatmap", "lr", "heatmap", "Logistic floor and convergence-time maps", false, f));
    }
    {
        std::vector<Field> f = {integer("V", 128256, "vocabulary size"), real("zipf", 1.0, "Zipf exponent"),
                                integer("d", 4096, "dimension"), real("B", 4e6, "tokens per batch"),
                                real("beta", 0.9, "momentum")};
        all.push_back(make("spectral-conflict", "lr", "spectral-conflict", "Per-token resonance report", false, f));
    }
    return all;
}

std::string type_name(FieldType t) {
    switch (t) {
        case FieldType::Real: return "a number";
        case FieldType::Int: return "an integer";
        case FieldType::Text: return "a string";
        case FieldType::Bool: return "a boolean";
        case FieldType::RealList: return "a list of numbers";
        case FieldType::IntList: return "a list of integers";
    }
    return "?";
}

// Integers may be written as integral reals (1e4).
bool as_int(const json& v, std::int64_t& out) {
    if (v.is_number_integer()) {
        out = v.get<std::int64_t>();
        return true;
    }
    if (v.is_number_float()) {
        const double x = v.get<double>();
        if (std::isfinite(x) && x == std::floor(x) && std::fabs(x) < 9.0e15) {
            out = static_cast<std::int64_t>(x);
            return true;
        }
    }
    return false;
}

json coerce_scalar(FieldType t, const json& v, const std::string& path) {
    const auto fail = [&]() -> json { throw ConfigError(path + ": expected " + type_name(t)); };
    switch (t) {
        case FieldType::Real:
            if (!v.is_number()) return fail();
            return v.get<double>();
        case FieldType::Int: {
            std::int64_t i;
            if (!as_int(v, i)) return fail();
            return i;
        }
        case FieldType::Text:
            if (!v.is_string()) return fail();
            return v;
        case FieldType::Bool:
            if (!v.is_boolean()) return fail();
            return v;
        default: return fail();
    }
}

json coerce(const Field& f, const json& v, const std::string& path) {
    if (v.is_null()) {
        if (f.default_value.is_null()) return v;
        throw ConfigError(path + ": may not be null");
    }
    if (f.type != FieldType::RealList && f.type != FieldType::IntList) return coerce_scalar(f.type, v, path);
    if (!v.is_array()) throw ConfigError(path + ": expected " + type_name(f.type));
    const FieldType elem = f.type == FieldType::RealList ? FieldType::Real : FieldType::Int;
    json out = json::array();
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(coerce_scalar(elem, v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

json parse_token(FieldType t, const std::string& tok, const std::string& where) {
    if (t == FieldType::Text) return tok;
    if (t == FieldType::Bool) {
        if (tok == "true" || tok == "1") return true;
        if (tok == "false" || tok == "0") return false;
        throw ConfigError(where + ": expected true or false, got '" + tok + "'");
    }
    double x = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ConfigError(where + ": expected " + type_name(t) + ", got '" + tok + "'");
    return x;
}

}  // namespace

const Field* CommandSchema::find(const std::string& key) const {
    for (const auto& f : fields)
        if (f.name == key) return &f;
    return nullptr;
}

const std::vector<CommandSchema>& command_schemas() {
    static const std::vector<CommandSchema> all = build_schemas();
    return all;
}

const CommandSchema& command_schema(const std::string& name) {
    for (const auto& s : command_schemas())
        if (s.name == name) return s;
    throw ConfigError("unknown command '" + name + "'");
}

const CommandSchema& command_for(const std::string& model, const std::string& mode) {
    for (const auto& s : command_schemas())
        if (s.mode == mode && (s.model == model || s.mode == "spectral-conflict")) return s;
    throw ConfigError("$: no command for model '" + model + "' and mode '" + mode + "'");
}

json default_settings(const CommandSchema& schema) {
    json s = json::object();
    for (const auto& f : schema.fields) s[f.name] = f.default_value;
    return s;
}

void apply_overlay(const CommandSchema& schema, json& settings, const json& overlay, const std::string& origin) {
    if (!overlay.is_object()) throw ConfigError(origin + ": expected an object");
    for (const auto& [key, value] : overlay.items()) {
        const std::string path = origin + "." + key;
        if (key == "model" || key == "mode") {
            const std::string& want = key == "model" ? schema.model : schema.mode;
            if (!value.is_string()) throw ConfigError(path + ": expected a string");
            const bool any_model = key == "model" && schema.mode == "spectral-conflict";
            if (value.get<std::string>() != want && !any_model)
                throw ConfigError(path + ": '" + value.get<std::string>() + "' does not match command " + schema.name);
            continue;
        }
        if (key == "spec_version") {
            if (value != 1) throw ConfigError(path + ": unsupported version");
            continue;
        }
        const Field* f = schema.find(key);
        if (!f) throw ConfigError(path + ": unknown key");
        settings[key] = coerce(*f, value, path);
    }
}

json parse_flag(const Field& field, const std::vector<std::string>& tokens) {
    const std::string where = "--" + field.name;
    const bool list = field.type == FieldType::RealList || field.type == FieldType::IntList;
    if (!list && tokens.size() != 1) throw ConfigError(where + ": expected one value");
    if (tokens.size() == 1 && tokens[0] == "null") return coerce(field, nullptr, where);
    json raw;
    if (list) {
        raw = json::array();
        const FieldType elem = field.type == FieldType::RealList ? FieldType::Real : FieldType::Int;
        for (const auto& t : tokens) raw.push_back(parse_token(elem, t, where));
    } else {
        raw = parse_token(field.type, tokens[0], where);
    }
    return coerce(field, raw, where);
}

void check_settings(const CommandSchema& schema, const json& settings) {
    if (schema.stochastic && settings.at("seed").is_null())
        throw ConfigError("$.seed: required for " + schema.name + " (pass --seed)");
    if (!settings.at("seed").is_null() && settings.at("seed").get<std::int64_t>() < 0)
        throw ConfigError("$.seed: must be nonnegative");
}

std::string settings_hash(const json& settings) {
    json s = settings;
    s.erase("out");
    return config_hash(s);
}

}  // namespace spm
