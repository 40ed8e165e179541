#pragma once

#include <filesystem>
#include <vector>

#include "mgc/archspec.hpp"
#include "mgc/nn.hpp"

namespace mgc::agents {

// Recurrent pruning controller: a GRU unrolled once per prunable layer over
// frozen random input codes, with a weight-normalized dense head per layer.
// The naive variant replaces all of that with one free logit per channel
// (the ablation baseline parameterization).
struct AgentState {
    archspec::Owner owner = archspec::Owner::generator;
    bool naive = false;
    int input_dim = 128;
    int hidden_dim = 256;
    std::vector<int> head_widths;  // C_l per prunable layer, spec order
    nn::GruCell cell;
    std::vector<nn::WNLinear> heads;
    std::vector<Tensor> input_codes;  // L x [1, input_dim], frozen
    ag::Var naive_logits;             // [num_bits] when naive
    Tensor last_embedding;            // [1, hidden_dim]
    std::uint64_t seed = 0;
    std::uint64_t spec_checksum = 0;

    int num_bits() const;
    std::vector<ag::Var> params() const;
};

std::uint64_t spec_checksum(const archspec::PrunableSpec& spec);

AgentState make_agent(const archspec::PrunableSpec& spec, archspec::Owner owner,
                      std::uint64_t seed, bool naive = false);

// Unrolls the controller. Gradients reach the peer embedding only when
// treat_peer_constant is false. Returns (o: [num_bits] logits, h: [1,256]).
std::pair<ag::Var, ag::Var> agent_forward(const AgentState& agent, const ag::Var& peer_embedding,
                                          bool treat_peer_constant);

ag::Var zero_embedding(int hidden_dim = 256);

struct GumbelDraw {
    Tensor g;  // [n] Gumbel(0,1) samples
    float tau = 1.0f;
};

GumbelDraw draw_gumbel(int n, float tau, Rng& rng);
GumbelDraw zero_draw(int n, float tau);

// v_soft = sigmoid(-(o+g)/tau); v = round(v_soft) with 0.5 -> 1, backward
// straight-through. Returns (v, v_soft).
std::pair<ag::Var, ag::Var> gumbel_sigmoid_ste(const ag::Var& o, const GumbelDraw& draw);

// Double-precision scalar reference path for the same map.
double gumbel_sigmoid_soft(double o, double g, double tau);

// Agent-output ordering -> spec bit ordering (identity by construction,
// validated on lengths).
archspec::ArchitectureVector map_architecture(const std::vector<std::uint8_t>& v,
                                              const archspec::PrunableSpec& spec,
                                              archspec::Owner owner);

// Differentiable per-layer mask views of the gate vector (slices of v).
models::MaskMap mask_map_from_gates(const archspec::PrunableSpec& spec, const ag::Var& v);

// Noise-free rounding of the trained agent's logits, then the at-least-one
// guard of archspec::harden.
archspec::ArchitectureVector hard_decision(const AgentState& agent, const ag::Var& peer_embedding,
                                           const archspec::PrunableSpec& spec, float tau);

void save_agent(const AgentState& agent, const std::filesystem::path& path);
AgentState load_agent(const std::filesystem::path& path);

}  // namespace mgc::agents
