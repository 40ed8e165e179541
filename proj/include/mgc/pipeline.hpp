#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mgc/config.hpp"
#include "mgc/evalreport.hpp"

namespace mgc::pipeline {

// Parsed command line for one invocation.
struct CommandSpec {
    std::string subcommand;
    std::filesystem::path run_dir;
    std::optional<std::filesystem::path> config_path;
    std::vector<std::string> overrides;  // section.key=value
    std::optional<std::uint64_t> seed;   // master seed, fans out per stage
};

// Holds run_dir/run.lock for the process lifetime; a second holder fails.
struct RunLock {
    explicit RunLock(const std::filesystem::path& run_dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

    std::filesystem::path file;
};

// Stage directories are append-only: each run creates run_dir/<stage>/vNNN.
std::filesystem::path new_stage_dir(const std::filesystem::path& run_dir,
                                    const std::string& stage);
// Highest existing version, or DataError naming the prerequisite subcommand.
std::filesystem::path latest_stage_dir(const std::filesystem::path& run_dir,
                                       const std::string& stage,
                                       const std::string& prerequisite);

// Config file (if any) + --set overrides + master seed fan-out, validated.
config::RunConfig load_effective_config(const CommandSpec& spec);
void apply_master_seed(config::RunConfig& cfg, std::uint64_t seed);

// Table 2 ladder: toggle sets per ablation variant, "full" first.
std::vector<std::pair<std::string, config::RunConfig::Ablation>> ablation_ladder();

// Executes one subcommand; throws on failure (the CLI maps exceptions to
// single-line errors and exit codes).
void run(const CommandSpec& spec);

}  // namespace mgc::pipeline
