// Command line front end: `shc <command> [--config PATH] [overrides...]`.

#include "shc/harness/bench.hpp"
#include "shc/harness/config.hpp"
#include "shc/harness/experiments.hpp"
#include "shc/harness/verify.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <optional>

namespace {

using namespace shc::harness;

struct Overrides {
    std::string config;
    std::optional<std::string> seed, out, c, threshold, gains, controller, scheme;

    KeyValues as_key_values() const {
        KeyValues kv;
        const std::pair<const char*, const std::optional<std::string>*> flags[] = {
            {"seed", &seed},           {"out", &out},       {"c", &c},           {"threshold", &threshold},
            {"gains", &gains},         {"controller", &controller}, {"scheme", &scheme}};
        for (const auto& [key, value] : flags)
            if (*value) kv[key] = **value;
        return kv;
    }
};

ExperimentConfig resolve(const Overrides& o) {
    ExperimentConfig cfg;
    if (!o.config.empty()) shc::harness::apply(cfg, read_key_values(o.config));
    shc::harness::apply(cfg, o.as_key_values());
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Subspace-constrained hidden-state control experiments"};
    app.require_subcommand(1);

    Overrides o;
    const std::map<std::string, std::pair<std::string, std::function<int(const ExperimentConfig&)>>> commands{
        {"gen", {"Generate a clean trajectory ensemble", cmd_gen}},
        {"fit", {"Fit P/I/D embedding bases", cmd_fit}},
        {"schedule", {"Compute the lambda/alpha schedule and gains", cmd_schedule}},
        {"simulate", {"Simulate one controlled trajectory", cmd_simulate}},
        {"compare", {"Compare controllers and schemes on the synthetic task", cmd_compare}},
        {"verify", {"Run the property suite and write a report", cmd_verify}},
        {"bench", {"Time base, controlled and PMP forward passes", cmd_bench}},
    };

    std::string chosen;
    for (const auto& [name, entry] : commands) {
        auto* sub = app.add_subcommand(name, entry.first);
        sub->add_option("--config", o.config, "key=value configuration file");
        sub->add_option("--seed", o.seed, "Root seed");
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--c", o.c, "Control regularization");
        sub->add_option("--threshold", o.threshold, "Energy threshold for basis truncation");
        sub->add_option("--gains", o.gains, "PID gains as P,I,D");
        sub->add_option("--controller", o.controller, "Controller list (none,analytic,riccati,pmp,practical)");
        sub->add_option("--scheme", o.scheme, "Scheme list (P,PI,PD,PID)");
        sub->callback([&chosen, n = name] { chosen = n; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfigError;
    }

    try {
        const auto cfg = resolve(o);
        return commands.at(chosen).second(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCheckFailed;
    }
}
