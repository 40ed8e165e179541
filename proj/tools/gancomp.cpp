#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mgc/errors.hpp"
#include "mgc/pipeline.hpp"

namespace {

constexpr const char* kSubcommands[] = {"gen-data",  "pretrain", "train-encoder", "build-index",
                                        "prune",     "finalize", "finetune",      "eval",
                                        "report",    "ablate"};

const char* describe(const std::string& name) {
    if (name == "gen-data") return "Generate the paired synthetic dataset";
    if (name == "pretrain") return "Adversarially pretrain the full generator/discriminator";
    if (name == "train-encoder") return "Train the contrastive feature encoder";
    if (name == "build-index") return "Build the manifold neighborhood index";
    if (name == "prune") return "Run the cooperative pruning loop";
    if (name == "finalize") return "Harden the agents' decisions and extract sub-networks";
    if (name == "finetune") return "Finetune the extracted pair with distillation";
    if (name == "eval") return "Evaluate teacher and pruned generators";
    if (name == "report") return "Emit curves, tables, and neighborhood grids";
    return "Run the full ablation ladder";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Manifold-guided GAN channel pruning pipeline"};
    app.require_subcommand(1);

    mgc::pipeline::CommandSpec spec;
    std::string run_dir, config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;

    for (const char* name : kSubcommands) {
        CLI::App* sub = app.add_subcommand(name, describe(name));
        sub->add_option("--run-dir", run_dir, "Run directory (stage artifacts live here)")
            ->required();
        sub->add_option("--config", config_path, "Config file (defaults to the run snapshot)");
        sub->add_option("--set", spec.overrides, "Override: section.key=value (repeatable)");
        sub->add_option("--seed", seed, "Master seed, fans out to every stage seed")
            ->each([&seed_set](const std::string&) { seed_set = true; });
    }

    CLI11_PARSE(app, argc, argv);

    spec.subcommand = app.get_subcommands().front()->get_name();
    spec.run_dir = run_dir;
    if (!config_path.empty()) spec.config_path = config_path;
    if (seed_set) spec.seed = seed;

    try {
        mgc::pipeline::run(spec);
    } catch (const mgc::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const mgc::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const mgc::DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
