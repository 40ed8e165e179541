#pragma once

#include <vector>

#include "mgc/agents.hpp"
#include "mgc/config.hpp"
#include "mgc/manifold.hpp"
#include "mgc/objectives.hpp"

namespace mgc::pruneloop {

struct PruneResult {
    agents::AgentState agent_g, agent_d;
    std::vector<objectives::LossBundle> history;
};

// Alternating agent training with frozen G/D weights: one D-agent phase then
// one G-agent phase per step, batch size 1. Throws ConfigError before the
// loop when p * t_total is below the at-least-one minimum, DivergenceError
// on non-finite losses.
PruneResult prune(const models::GeneratorNet& gen, const models::DiscriminatorNet& disc,
                  const manifold::NeighborhoodIndex& index, const datagen::Dataset& train,
                  const config::RunConfig& cfg);

struct FinalizeResult {
    models::GeneratorNet gen;
    models::DiscriminatorNet disc;
    archspec::ArchitectureVector v_g, v_d;
    io::json report;  // MACs, compression ratio, per-layer survival
};

// Noise-free hard decisions, physical extraction, and the accounting report.
FinalizeResult finalize(const agents::AgentState& agent_g, const agents::AgentState& agent_d,
                        const models::GeneratorNet& gen, const models::DiscriminatorNet& disc,
                        const config::RunConfig& cfg);

struct FinetuneHistory {
    std::vector<float> g_loss, d_loss, l1, kd;
};

// GAN finetuning of the extracted pair with optional feature distillation
// against the frozen teacher. Adaptors train jointly; architectures stay
// fixed. Mutates gen and disc in place.
FinetuneHistory finetune(models::GeneratorNet& gen, models::DiscriminatorNet& disc,
                         const models::GeneratorNet& teacher, const datagen::DatasetBundle& ds,
                         const config::RunConfig& cfg);

// Feature tap names used for distillation, per generator style.
std::vector<std::string> kd_tap_names(models::Style style, int depth);

std::string history_to_csv(const std::vector<objectives::LossBundle>& history);
std::vector<objectives::LossBundle> history_from_csv(const std::string& csv);

}  // namespace mgc::pruneloop
