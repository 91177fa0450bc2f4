#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "simgan/xcli/commands.hpp"

using namespace simgan;
using namespace simgan::xcli;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<double> reward_weight;
    std::vector<std::string> overrides;
    bool quiet = false;
};

void add_common(CLI::App* sub, Options& o)
{
    sub->add_option("-c,--config", o.config, "experiment config (JSON)");
    sub->add_option("--seed", o.seed, "set every section seed");
    sub->add_option("-o,--out", o.out, "output directory (overrides output_dir)");
    sub->add_option("--reward-weight", o.reward_weight, "shorthand for gan.reward_weight=<value>");
    sub->add_flag("-q,--quiet", o.quiet, "no progress output");
    sub->add_option("overrides", o.overrides, "dotted overrides, e.g. gan.epochs=5");
}

ExperimentConfig resolve(const Options& o)
{
    std::vector<std::string> ov = o.overrides;
    if (!o.out.empty()) {
        ov.push_back("output_dir=" + nlohmann::json(o.out).dump());
    }
    if (o.reward_weight) {
        ov.push_back("gan.reward_weight=" + nlohmann::json(*o.reward_weight).dump());
    }
    ExperimentConfig c = load_config(o.config.empty() ? std::nullopt : std::optional<fs::path>(o.config), ov);
    if (o.seed) {
        set_all_seeds(c, *o.seed);
    }
    c.validate();
    return c;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"simgan: similarity-rewarded GAN experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SIMGAN_VERSION);
    Options o;

    struct Cmd {
        const char* name;
        const char* help;
        std::function<void(const ExperimentConfig&)> run;
    };
    const std::vector<Cmd> cmds = {
        {"synth", "generate the synthetic slide corpus and its patches", [](const auto& c) { cmd_synth(c); }},
        {"pairs", "build SIM / DISSIM_A / DISSIM_B pair manifests", [](const auto& c) { cmd_pairs(c); }},
        {"train-snn", "train the two-stage similarity network", [](const auto& c) { cmd_train_snn(c); }},
        {"train-gan", "train the reward-augmented GAN", [](const auto& c) { cmd_train_gan(c); }},
        {"eval", "FID, KID, PPL, precision/recall and t-SNE export", [](const auto& c) { cmd_eval(c); }},
        {"downstream", "synthetic- vs real-trained classifier comparison", [](const auto& c) { cmd_downstream(c); }},
        {"serve", "similarity search and run-monitoring HTTP API", [](const auto& c) { cmd_serve(c); }},
        {"all", "synth, pairs, train-snn, train-gan, eval and downstream in order",
         [](const auto& c) {
             cmd_synth(c);
             cmd_pairs(c);
             cmd_train_snn(c);
             cmd_train_gan(c);
             cmd_eval(c);
             cmd_downstream(c);
         }},
        {"config", "print the resolved config", [](const auto& c) { std::cout << c.to_json().dump(2) << "\n"; }},
    };
    const Cmd* chosen = nullptr;
    for (const auto& cmd : cmds) {
        auto* sub = app.add_subcommand(cmd.name, cmd.help);
        add_common(sub, o);
        sub->callback([&chosen, &cmd] { chosen = &cmd; });
    }
    bool schema = false;
    app.add_subcommand("schema", "print the config JSON schema")->callback([&schema] { schema = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (schema) {
        std::cout << config_schema().dump(2) << "\n";
        return 0;
    }
    log::quiet() = o.quiet;
    try {
        chosen->run(resolve(o));
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "simgan %s: %s\n", chosen->name, e.what());
        return exit_code_for(std::current_exception());
    }
}
