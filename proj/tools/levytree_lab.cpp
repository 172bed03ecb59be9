#include "levytree/lab.hpp"
#include "levytree/version.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace lab = levytree::lab;

namespace {

int load(const std::string& path, const std::vector<std::string>& overrides, lab::LabConfig& cfg)
{
    try {
        cfg = lab::load_config(path);
        lab::apply_overrides(cfg, overrides);
        lab::validate_config(cfg);
    } catch (const lab::ConfigError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"levytree-lab: configuration-driven Levy tree experiments"};
    app.set_version_flag("--version", std::string(levytree::kVersion));
    app.require_subcommand(1);

    std::string config;
    std::vector<std::string> overrides;

    auto* run = app.add_subcommand("run", "run the experiment a config names");
    run->add_option("config", config, "configuration file")->required();
    run->add_option("overrides", overrides, "key=value overrides");

    auto* validate = app.add_subcommand("validate", "check a config against the schema");
    validate->add_option("config", config, "configuration file")->required();
    validate->add_option("overrides", overrides, "key=value overrides");

    auto* list = app.add_subcommand("list-experiments", "print the registered experiments");
    bool keys = false;
    list->add_flag("--keys", keys, "also print every configuration key");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*list) {
        for (const auto& e : lab::experiments())
            std::cout << e.name << (e.stochastic ? "  [seeded]  " : "  ") << e.summary << "\n";
        if (keys) {
            std::cout << "\n";
            for (const auto& k : lab::schema())
                std::cout << k.key << " = " << (k.fallback.empty() ? "(none)" : k.fallback) << "  ; " << k.help
                          << "\n";
        }
        return 0;
    }

    lab::LabConfig cfg;
    if (int code = load(config, overrides, cfg)) return code;

    if (*validate) {
        std::cout << "ok: " << cfg.experiment() << "\n";
        return 0;
    }

    auto rr = lab::run_experiment(cfg);
    if (rr.status == 2) {
        std::cerr << "schema error: " << rr.error << "\n";
        return 2;
    }
    if (rr.status != 0) {
        std::cerr << "run failed: " << rr.error << "\n";
        if (!rr.dir.empty()) std::cerr << "partial artifacts in " << rr.dir.string() << "\n";
        return 1;
    }
    std::cout << lab::dump_json(rr.summary["results"]);
    std::cout << "artifacts: " << rr.dir.string() << " (" << rr.files.size() << " files + manifest.json)\n";
    return 0;
}
