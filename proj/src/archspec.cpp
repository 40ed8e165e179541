#include "mgc/archspec.hpp"

#include <algorithm>
#include <cmath>

#include "mgc/errors.hpp"

namespace mgc::archspec {

using models::Block;
using models::BlockCfg;
using models::ConvNet;

std::string to_string(Owner o) { return o == Owner::generator ? "generator" : "discriminator"; }

int ArchitectureVector::active() const {
    int n = 0;
    for (auto b : bits) n += b != 0;
    return n;
}

std::vector<double> ArchitectureVector::as_doubles() const {
    std::vector<double> d(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) d[i] = bits[i] ? 1.0 : 0.0;
    return d;
}

const LayerInfo& PrunableSpec::layer(const std::string& id) const {
    for (const auto& l : layers)
        if (l.layer_id == id) return l;
    throw ContractViolation("spec has no layer " + id);
}

std::pair<int, int> PrunableSpec::bit_range(const std::string& id) const {
    const auto& l = layer(id);
    if (!l.prunable) throw ContractViolation("layer " + id + " is not prunable");
    return {l.offset, l.offset + l.out_ch};
}

namespace {

// Per-layer MAC coefficient: output spatial area times kernel area. Total
// layer cost is coef * active_in * active_out, multilinear in the mask bits.
double layer_coef(const LayerInfo& l) {
    return static_cast<double>(l.hout) * l.wout * l.k * l.k;
}

// Channel-count term of one input source: either a constant (non-gated
// layer or the network input) or the sum of the gating layer's bits.
struct ChanTerm {
    double constant = 0.0;
    int offset = -1;  // bit range start when gated
    int len = 0;
};

ChanTerm source_term(const PrunableSpec& spec, const std::string& src) {
    ChanTerm t;
    if (src == "@input") {
        t.constant = spec.input_ch;
        return t;
    }
    const auto& l = spec.layer(src);
    const std::string gate = l.prunable ? l.layer_id : l.tied;
    if (gate.empty()) {
        t.constant = l.out_ch;
    } else {
        auto [b, e] = spec.bit_range(gate);
        t.offset = b;
        t.len = e - b;
    }
    return t;
}

double eval_term(const ChanTerm& t, std::span<const double> v) {
    if (t.offset < 0) return t.constant;
    double s = 0.0;
    for (int i = 0; i < t.len; ++i) s += v[static_cast<std::size_t>(t.offset + i)];
    return s;
}

ag::Var eval_term_var(const ChanTerm& t, const ag::Var& v) {
    if (t.offset < 0) return ag::scalar(static_cast<float>(t.constant));
    return ag::sum(ag::slice1d(v, t.offset, t.len));
}

bool layer_is_fixed(const PrunableSpec& spec, const LayerInfo& l) {
    if (l.prunable || !l.tied.empty()) return false;
    for (const auto& src : l.inputs) {
        ChanTerm t = source_term(spec, src);
        if (t.offset >= 0) return false;
    }
    return true;
}

}  // namespace

PrunableSpec build_spec(const ConvNet& net, int input_hw) {
    PrunableSpec spec;
    spec.input_ch = net.in_ch;

    // Spatial walk over the plan.
    std::map<std::string, std::pair<int, int>> spatial;
    spatial["@input"] = {input_hw, input_hw};
    for (const auto& b : net.blocks) {
        auto hw = spatial.at(b.cfg.inputs[0]);
        for (const auto& src : b.cfg.inputs)
            if (spatial.at(src) != hw)
                throw ContractViolation("spatial mismatch at " + b.cfg.name);
        if (b.cfg.upsample) {
            hw.first *= 2;
            hw.second *= 2;
        }
        const int hout = (hw.first + 2 * b.cfg.pad - b.cfg.k) / b.cfg.stride + 1;
        const int wout = (hw.second + 2 * b.cfg.pad - b.cfg.k) / b.cfg.stride + 1;
        if (hout <= 0 || wout <= 0)
            throw ContractViolation("degenerate spatial size at " + b.cfg.name);
        spatial[b.cfg.name] = {hout, wout};

        LayerInfo l;
        l.layer_id = b.cfg.name;
        l.out_ch = b.cfg.out_ch;
        l.k = b.cfg.k;
        l.hout = hout;
        l.wout = wout;
        l.prunable = b.cfg.prunable;
        l.tied = b.cfg.tied_mask;
        l.inputs = b.cfg.inputs;
        if (l.prunable) {
            l.offset = spec.num_bits;
            spec.num_bits += l.out_ch;
        }
        spec.layers.push_back(l);
    }

    for (auto& l : spec.layers)
        for (const auto& other : net.blocks) {
            bool consumes = false;
            for (const auto& src : other.cfg.inputs) consumes |= src == l.layer_id;
            consumes |= other.cfg.residual_from == l.layer_id;
            if (consumes) l.consumers.push_back(other.cfg.name);
        }

    for (const auto& l : spec.layers) {
        if (!l.prunable) continue;
        for (int c = 0; c < l.out_ch; ++c) {
            PrunableUnit u;
            u.layer_id = l.layer_id;
            u.channel_index = c;
            u.kernel_hw = {l.k, l.k};
            u.out_spatial = {l.hout, l.wout};
            u.consumers = l.consumers;
            spec.units.push_back(u);
        }
    }

    std::vector<double> ones(static_cast<std::size_t>(spec.num_bits), 1.0);
    for (const auto& l : spec.layers) {
        if (layer_is_fixed(spec, l)) {
            double in = 0.0;
            for (const auto& src : l.inputs) in += eval_term(source_term(spec, src), ones);
            spec.fixed_macs += layer_coef(l) * in * l.out_ch;
        }
    }
    spec.t_total = macs_all_on(spec) - spec.fixed_macs;
    return spec;
}

PrunableSpec build_spec(const models::GeneratorNet& g) { return build_spec(g.net, g.image_size); }

PrunableSpec build_spec(const models::DiscriminatorNet& d, int image_size) {
    return build_spec(d.net, image_size);
}

double macs_of(const PrunableSpec& spec, std::span<const double> v) {
    if (static_cast<int>(v.size()) != spec.num_bits)
        throw ContractViolation("mask length does not match spec");
    double total = 0.0;
    for (const auto& l : spec.layers) {
        double in = 0.0;
        for (const auto& src : l.inputs) in += eval_term(source_term(spec, src), v);
        const std::string gate = l.prunable ? l.layer_id : l.tied;
        double out = l.out_ch;
        if (!gate.empty()) {
            ChanTerm t;
            auto [b, e] = spec.bit_range(gate);
            t.offset = b;
            t.len = e - b;
            out = eval_term(t, v);
        }
        total += layer_coef(l) * in * out;
    }
    return total;
}

ag::Var macs_of_var(const PrunableSpec& spec, const ag::Var& v) {
    if (static_cast<int>(v->val.numel()) != spec.num_bits)
        throw ContractViolation("mask length does not match spec");
    std::vector<ag::Var> terms;
    for (const auto& l : spec.layers) {
        if (layer_is_fixed(spec, l)) continue;
        ag::Var in;
        double in_const = 0.0;
        for (const auto& src : l.inputs) {
            ChanTerm t = source_term(spec, src);
            if (t.offset < 0) {
                in_const += t.constant;
            } else {
                ag::Var s = eval_term_var(t, v);
                in = in ? ag::add(in, s) : s;
            }
        }
        if (in_const > 0.0)
            in = in ? ag::axpb(in, 1.0f, static_cast<float>(in_const))
                    : ag::scalar(static_cast<float>(in_const));
        const std::string gate = l.prunable ? l.layer_id : l.tied;
        ag::Var term;
        if (gate.empty()) {
            term = ag::axpb(in, static_cast<float>(layer_coef(l) * l.out_ch), 0.0f);
        } else {
            ChanTerm t;
            auto [b, e] = spec.bit_range(gate);
            t.offset = b;
            t.len = e - b;
            term = ag::axpb(ag::mul(in, eval_term_var(t, v)),
                            static_cast<float>(layer_coef(l)), 0.0f);
        }
        terms.push_back(term);
    }
    ag::Var total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) total = ag::add(total, terms[i]);
    return total;
}

double macs_all_on(const PrunableSpec& spec) {
    std::vector<double> ones(static_cast<std::size_t>(spec.num_bits), 1.0);
    return macs_of(spec, ones);
}

double macs_min(const PrunableSpec& spec) {
    std::vector<double> v(static_cast<std::size_t>(spec.num_bits), 0.0);
    for (const auto& l : spec.layers)
        if (l.prunable) v[static_cast<std::size_t>(l.offset)] = 1.0;
    return macs_of(spec, v) - spec.fixed_macs;
}

ArchitectureVector harden(const PrunableSpec& spec, std::span<const double> v_soft, Owner owner) {
    if (static_cast<int>(v_soft.size()) != spec.num_bits)
        throw ContractViolation("soft vector length does not match spec");
    ArchitectureVector av;
    av.owner = owner;
    av.bits.resize(v_soft.size());
    for (std::size_t i = 0; i < v_soft.size(); ++i)
        av.bits[i] = v_soft[i] >= 0.5 ? 1 : 0;
    for (const auto& l : spec.layers) {
        if (!l.prunable) continue;
        bool any = false;
        for (int c = 0; c < l.out_ch; ++c) any |= av.bits[static_cast<std::size_t>(l.offset + c)] != 0;
        if (any) continue;
        int best = 0;
        for (int c = 1; c < l.out_ch; ++c)
            if (v_soft[static_cast<std::size_t>(l.offset + c)] >
                v_soft[static_cast<std::size_t>(l.offset + best)])
                best = c;
        av.bits[static_cast<std::size_t>(l.offset + best)] = 1;
    }
    return av;
}

models::MaskMap mask_map(const PrunableSpec& spec, const ArchitectureVector& v) {
    if (v.size() != spec.num_bits) throw ContractViolation("architecture vector length mismatch");
    models::MaskMap m;
    for (const auto& l : spec.layers) {
        if (!l.prunable) continue;
        Tensor t({l.out_ch});
        for (int c = 0; c < l.out_ch; ++c)
            t.at(c) = v.bits[static_cast<std::size_t>(l.offset + c)] ? 1.0f : 0.0f;
        m[l.layer_id] = ag::constant(std::move(t));
    }
    return m;
}

namespace {
std::vector<int> keep_list(const PrunableSpec& spec, const ArchitectureVector& v,
                           const LayerInfo& l) {
    const std::string gate = l.prunable ? l.layer_id : l.tied;
    std::vector<int> keep;
    if (gate.empty()) {
        keep.resize(static_cast<std::size_t>(l.out_ch));
        for (int c = 0; c < l.out_ch; ++c) keep[static_cast<std::size_t>(c)] = c;
    } else {
        auto [b, e] = spec.bit_range(gate);
        if (e - b != l.out_ch) throw ContractViolation("tied width mismatch at " + l.layer_id);
        for (int c = 0; c < l.out_ch; ++c)
            if (v.bits[static_cast<std::size_t>(b + c)]) keep.push_back(c);
    }
    if (keep.empty()) throw ContractViolation("layer " + l.layer_id + " fully pruned");
    return keep;
}
}  // namespace

ConvNet extract_subnetwork(const ConvNet& net, const PrunableSpec& spec,
                           const ArchitectureVector& v) {
    if (v.size() != spec.num_bits) throw ContractViolation("architecture vector length mismatch");
    std::map<std::string, std::vector<int>> keeps;
    for (const auto& l : spec.layers) keeps[l.layer_id] = keep_list(spec, v, l);

    ConvNet out;
    out.in_ch = net.in_ch;
    for (const auto& b : net.blocks) {
        const auto& keep_out = keeps.at(b.cfg.name);

        // Input keep indices: per-source keep lists shifted by channel offset.
        std::vector<int> keep_in;
        int off = 0;
        for (const auto& src : b.cfg.inputs) {
            if (src == "@input") {
                for (int c = 0; c < net.in_ch; ++c) keep_in.push_back(off + c);
                off += net.in_ch;
            } else {
                for (int c : keeps.at(src)) keep_in.push_back(off + c);
                off += net.block(src).cfg.out_ch;
            }
        }

        Block nb;
        nb.cfg = b.cfg;
        nb.cfg.out_ch = static_cast<int>(keep_out.size());
        nb.in_ch = static_cast<int>(keep_in.size());

        const int k = b.cfg.k;
        Tensor w({nb.cfg.out_ch, nb.in_ch, k, k});
        for (std::size_t oi = 0; oi < keep_out.size(); ++oi)
            for (std::size_t ii = 0; ii < keep_in.size(); ++ii)
                for (int p = 0; p < k * k; ++p)
                    w.at((static_cast<std::int64_t>(oi) * nb.in_ch + static_cast<std::int64_t>(ii)) * k * k + p) =
                        b.w->val.at((static_cast<std::int64_t>(keep_out[oi]) * b.in_ch +
                                     keep_in[ii]) * k * k + p);
        nb.w = ag::leaf(std::move(w), true);

        auto slice_vec = [&](const Tensor& src) {
            Tensor t({nb.cfg.out_ch});
            for (std::size_t oi = 0; oi < keep_out.size(); ++oi)
                t.at(static_cast<std::int64_t>(oi)) = src.at(keep_out[oi]);
            return t;
        };
        nb.b = ag::leaf(slice_vec(b.b->val), true);
        if (b.gamma) {
            nb.gamma = ag::leaf(slice_vec(b.gamma->val), true);
            nb.beta = ag::leaf(slice_vec(b.beta->val), true);
            nb.run_mean = slice_vec(b.run_mean);
            nb.run_var = slice_vec(b.run_var);
        }
        out.blocks.push_back(std::move(nb));
    }
    return out;
}

models::GeneratorNet extract_subnetwork(const models::GeneratorNet& g,
                                        const ArchitectureVector& v) {
    models::GeneratorNet out = g;
    out.net = extract_subnetwork(g.net, build_spec(g), v);
    return out;
}

models::DiscriminatorNet extract_subnetwork(const models::DiscriminatorNet& d, int image_size,
                                            const ArchitectureVector& v) {
    models::DiscriminatorNet out = d;
    out.net = extract_subnetwork(d.net, build_spec(d, image_size), v);
    return out;
}

io::json spec_dump(const PrunableSpec& spec) {
    io::json j;
    j["num_bits"] = spec.num_bits;
    j["input_ch"] = spec.input_ch;
    j["fixed_macs"] = spec.fixed_macs;
    j["t_total"] = spec.t_total;
    std::vector<double> ones(static_cast<std::size_t>(spec.num_bits), 1.0);
    j["layers"] = io::json::array();
    for (const auto& l : spec.layers) {
        double in = 0.0;
        for (const auto& src : l.inputs) in += eval_term(source_term(spec, src), ones);
        j["layers"].push_back({{"layer_id", l.layer_id},
                               {"out_ch", l.out_ch},
                               {"k", l.k},
                               {"hout", l.hout},
                               {"wout", l.wout},
                               {"prunable", l.prunable},
                               {"offset", l.offset},
                               {"tied", l.tied},
                               {"inputs", l.inputs},
                               {"consumers", l.consumers},
                               {"macs_all_on", layer_coef(l) * in * l.out_ch}});
    }
    return j;
}

}  // namespace mgc::archspec
