#include "spm/harness/config.hpp"
#include "spm/harness/io.hpp"
#include "spm/harness/run.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

namespace {

using nlohmann::json;

struct Invocation {
    std::string config_path;
    std::map<std::string, std::vector<std::string>> values;
};

void add_fields(CLI::App* sub, const spm::CommandSchema& schema, Invocation& inv) {
    sub->add_option("--config", inv.config_path, "JSON settings file; its keys override flags")
        ->check(CLI::ExistingFile);
    for (const auto& f : schema.fields) {
        auto* opt = sub->add_option("--" + f.name, inv.values[f.name], f.help);
        const bool list = f.type == spm::FieldType::RealList || f.type == spm::FieldType::IntList;
        if (list)
            opt->expected(1, CLI::detail::expected_max_vector_size);
        else
            opt->expected(1);
    }
}

json settings_from(const spm::CommandSchema& schema, const Invocation& inv) {
    json s = spm::default_settings(schema);
    json flags = json::object();
    for (const auto& [name, tokens] : inv.values)
        if (!tokens.empty()) flags[name] = spm::parse_flag(*schema.find(name), tokens);
    spm::apply_overlay(schema, s, flags, "$");
    if (!inv.config_path.empty()) spm::apply_overlay(schema, s, spm::read_json(inv.config_path), "$");
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-gradient momentum dynamics: moment ODEs, limits, Monte Carlo, and reports"};
    app.name("spm");
    app.require_subcommand(1);

    const auto& schemas = spm::command_schemas();
    std::vector<Invocation> invocations(schemas.size());
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < schemas.size(); ++i) {
        subs.push_back(app.add_subcommand(schemas[i].name, schemas[i].help));
        add_fields(subs.back(), schemas[i], invocations[i]);
    }

    // Generic entry: the config file names its model and mode.
    std::string run_config, run_out;
    std::int64_t run_seed = -1;
    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("--config", run_config, "JSON config with model and mode")->required()->check(CLI::ExistingFile);
    run->add_option("--out", run_out, "output directory");
    run->add_option("--seed", run_seed, "master seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const spm::CommandSchema* schema = nullptr;
        json settings;
        if (run->parsed()) {
            const json file = spm::read_json(run_config);
            if (!file.is_object() || !file.contains("model") || !file.contains("mode"))
                throw spm::ConfigError("$: a config needs \"model\" and \"mode\"");
            schema = &spm::command_for(file.at("model").get<std::string>(), file.at("mode").get<std::string>());
            settings = spm::default_settings(*schema);
            json flags = json::object();
            if (!run_out.empty()) flags["out"] = run_out;
            if (run_seed >= 0) flags["seed"] = run_seed;
            spm::apply_overlay(*schema, settings, flags, "$");
            spm::apply_overlay(*schema, settings, file, "$");
        } else {
            for (std::size_t i = 0; i < subs.size(); ++i)
                if (subs[i]->parsed()) {
                    schema = &schemas[i];
                    settings = settings_from(schemas[i], invocations[i]);
                }
        }
        const json manifest = spm::run_experiment(*schema, settings);
        if (schema->name == "stability")
            std::cout << manifest.at("summary").dump(2) << '\n';
        else
            std::cout << manifest.dump(2) << '\n';
        return 0;
    } catch (const spm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
