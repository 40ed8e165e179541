#include "mgc/agents.hpp"

#include <cmath>
#include <numeric>

#include "mgc/errors.hpp"
#include "mgc/io.hpp"

namespace mgc::agents {

using namespace ag;

int AgentState::num_bits() const {
    return std::accumulate(head_widths.begin(), head_widths.end(), 0);
}

std::vector<Var> AgentState::params() const {
    if (naive) return {naive_logits};
    std::vector<Var> ps = cell.params();
    for (const auto& h : heads)
        for (const auto& p : h.params()) ps.push_back(p);
    return ps;
}

std::uint64_t spec_checksum(const archspec::PrunableSpec& spec) {
    const std::string s = archspec::spec_dump(spec).dump();
    return io::fnv1a(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

AgentState make_agent(const archspec::PrunableSpec& spec, archspec::Owner owner,
                      std::uint64_t seed, bool naive) {
    AgentState a;
    a.owner = owner;
    a.naive = naive;
    a.seed = seed;
    a.spec_checksum = spec_checksum(spec);
    for (const auto& l : spec.layers)
        if (l.prunable) a.head_widths.push_back(l.out_ch);
    if (a.head_widths.empty()) throw ContractViolation("spec has no prunable layers");
    a.last_embedding = Tensor({1, a.hidden_dim});

    Rng rng(seed);
    if (naive) {
        a.naive_logits = nn::param_const({spec.num_bits}, 0.0f);
        return a;
    }
    a.cell = nn::GruCell::init(rng, a.input_dim, a.hidden_dim);
    for (int c : a.head_widths) a.heads.push_back(nn::WNLinear::init(rng, a.hidden_dim, c));
    Rng code_rng = rng.fork(1);  // dedicated stream for the frozen codes
    for (std::size_t l = 0; l < a.head_widths.size(); ++l) {
        Tensor code({1, a.input_dim});
        for (auto& v : code.data) v = static_cast<float>(code_rng.normal());
        a.input_codes.push_back(std::move(code));
    }
    return a;
}

Var zero_embedding(int hidden_dim) { return constant(Tensor({1, hidden_dim})); }

std::pair<Var, Var> agent_forward(const AgentState& agent, const Var& peer_embedding,
                                  bool treat_peer_constant) {
    if (agent.naive) {
        Var flat = reshape(agent.naive_logits, {agent.num_bits()});
        return {flat, zero_embedding(agent.hidden_dim)};
    }
    if (peer_embedding->val.numel() != agent.hidden_dim)
        throw ContractViolation("peer embedding dimension mismatch");
    if (!peer_embedding->val.all_finite())
        throw ContractViolation("non-finite peer embedding");
    Var h = reshape(peer_embedding, {1, agent.hidden_dim});
    if (treat_peer_constant) h = detach(h);
    std::vector<Var> outs;
    for (std::size_t l = 0; l < agent.heads.size(); ++l) {
        h = agent.cell.forward(constant(agent.input_codes[l]), h);
        Var o_l = agent.heads[l].forward(relu(h));
        outs.push_back(reshape(o_l, {agent.head_widths[l]}));
    }
    return {concat1d(outs), h};
}

GumbelDraw draw_gumbel(int n, float tau, Rng& rng) {
    if (tau <= 0.0f) throw ConfigError("gumbel temperature must be positive");
    GumbelDraw d;
    d.tau = tau;
    d.g = Tensor({n});
    for (auto& v : d.g.data) v = static_cast<float>(rng.gumbel());
    return d;
}

GumbelDraw zero_draw(int n, float tau) {
    if (tau <= 0.0f) throw ConfigError("gumbel temperature must be positive");
    GumbelDraw d;
    d.tau = tau;
    d.g = Tensor({n});
    return d;
}

std::pair<Var, Var> gumbel_sigmoid_ste(const Var& o, const GumbelDraw& draw) {
    if (o->val.numel() != draw.g.numel())
        throw ContractViolation("gumbel draw length mismatch");
    Var shifted = add(o, constant(draw.g));
    Var v_soft = vsigmoid(axpb(shifted, -1.0f / draw.tau, 0.0f));
    return {ste_round(v_soft), v_soft};
}

double gumbel_sigmoid_soft(double o, double g, double tau) {
    return 1.0 / (1.0 + std::exp((o + g) / tau));
}

archspec::ArchitectureVector map_architecture(const std::vector<std::uint8_t>& v,
                                              const archspec::PrunableSpec& spec,
                                              archspec::Owner owner) {
    if (static_cast<int>(v.size()) != spec.num_bits)
        throw ContractViolation("architecture vector length mismatch");
    // Agent heads are generated in spec layer order, so the global bit
    // ordering already coincides with the spec's.
    archspec::ArchitectureVector av;
    av.owner = owner;
    av.bits = v;
    return av;
}

models::MaskMap mask_map_from_gates(const archspec::PrunableSpec& spec, const Var& v) {
    if (static_cast<int>(v->val.numel()) != spec.num_bits)
        throw ContractViolation("gate vector length mismatch");
    models::MaskMap m;
    for (const auto& l : spec.layers)
        if (l.prunable) m[l.layer_id] = slice1d(v, l.offset, l.out_ch);
    return m;
}

archspec::ArchitectureVector hard_decision(const AgentState& agent, const Var& peer_embedding,
                                           const archspec::PrunableSpec& spec, float tau) {
    auto [o, h] = agent_forward(agent, peer_embedding, true);
    std::vector<double> soft(static_cast<std::size_t>(o->val.numel()));
    for (std::int64_t i = 0; i < o->val.numel(); ++i)
        soft[static_cast<std::size_t>(i)] = gumbel_sigmoid_soft(o->val.at(i), 0.0, tau);
    return archspec::harden(spec, soft, agent.owner);
}

void save_agent(const AgentState& agent, const std::filesystem::path& path) {
    io::Archive a;
    a.meta = {{"owner", archspec::to_string(agent.owner)},
              {"naive", agent.naive},
              {"seed", agent.seed},
              {"spec_checksum", agent.spec_checksum},
              {"head_widths", agent.head_widths},
              {"input_dim", agent.input_dim},
              {"hidden_dim", agent.hidden_dim}};
    a.tensors.emplace_back("last_embedding", agent.last_embedding);
    if (agent.naive) {
        a.tensors.emplace_back("naive_logits", agent.naive_logits->val);
    } else {
        const nn::WNLinear* gates[6] = {&agent.cell.ir, &agent.cell.iz, &agent.cell.in_,
                                        &agent.cell.hr, &agent.cell.hz, &agent.cell.hn};
        const char* names[6] = {"ir", "iz", "in", "hr", "hz", "hn"};
        for (int i = 0; i < 6; ++i) {
            a.tensors.emplace_back(std::string("cell.") + names[i] + ".v", gates[i]->v->val);
            a.tensors.emplace_back(std::string("cell.") + names[i] + ".g", gates[i]->g->val);
            a.tensors.emplace_back(std::string("cell.") + names[i] + ".b", gates[i]->b->val);
        }
        for (std::size_t l = 0; l < agent.heads.size(); ++l) {
            const std::string p = "head" + std::to_string(l);
            a.tensors.emplace_back(p + ".v", agent.heads[l].v->val);
            a.tensors.emplace_back(p + ".g", agent.heads[l].g->val);
            a.tensors.emplace_back(p + ".b", agent.heads[l].b->val);
            a.tensors.emplace_back("code" + std::to_string(l), agent.input_codes[l]);
        }
    }
    io::save_archive(path, a);
}

AgentState load_agent(const std::filesystem::path& path) {
    io::Archive a = io::load_archive(path);
    AgentState s;
    s.owner = a.meta["owner"] == "generator" ? archspec::Owner::generator
                                             : archspec::Owner::discriminator;
    s.naive = a.meta["naive"];
    s.seed = a.meta["seed"];
    s.spec_checksum = a.meta["spec_checksum"];
    s.head_widths = a.meta["head_widths"].get<std::vector<int>>();
    s.input_dim = a.meta["input_dim"];
    s.hidden_dim = a.meta["hidden_dim"];
    s.last_embedding = a.get("last_embedding");
    if (s.naive) {
        s.naive_logits = leaf(a.get("naive_logits"), true);
        return s;
    }
    Rng dummy(0);
    s.cell = nn::GruCell::init(dummy, s.input_dim, s.hidden_dim);
    nn::WNLinear* gates[6] = {&s.cell.ir, &s.cell.iz, &s.cell.in_,
                              &s.cell.hr, &s.cell.hz, &s.cell.hn};
    const char* names[6] = {"ir", "iz", "in", "hr", "hz", "hn"};
    for (int i = 0; i < 6; ++i) {
        gates[i]->v = leaf(a.get(std::string("cell.") + names[i] + ".v"), true);
        gates[i]->g = leaf(a.get(std::string("cell.") + names[i] + ".g"), true);
        gates[i]->b = leaf(a.get(std::string("cell.") + names[i] + ".b"), true);
    }
    for (std::size_t l = 0; l < s.head_widths.size(); ++l) {
        const std::string p = "head" + std::to_string(l);
        nn::WNLinear h;
        h.v = leaf(a.get(p + ".v"), true);
        h.g = leaf(a.get(p + ".g"), true);
        h.b = leaf(a.get(p + ".b"), true);
        s.heads.push_back(std::move(h));
        s.input_codes.push_back(a.get("code" + std::to_string(l)));
    }
    return s;
}

}  // namespace mgc::agents
