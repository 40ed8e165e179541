#pragma once

#include <span>
#include <string>
#include <vector>

#include "mgc/models.hpp"

namespace mgc::archspec {

enum class Owner { generator, discriminator };
std::string to_string(Owner o);

// Binary mask over a model's prunable channel groups.
struct ArchitectureVector {
    std::vector<std::uint8_t> bits;
    Owner owner = Owner::generator;

    int size() const { return static_cast<int>(bits.size()); }
    int active() const;
    std::vector<double> as_doubles() const;
};

struct PrunableUnit {
    std::string layer_id;
    int channel_index = 0;
    std::pair<int, int> kernel_hw{3, 3};
    std::pair<int, int> out_spatial{0, 0};
    std::vector<std::string> consumers;
};

// Per-conv-layer cost entry. `offset` indexes the global bit space for
// prunable layers (-1 otherwise); `tied` names the layer whose mask also
// gates this layer's output.
struct LayerInfo {
    std::string layer_id;
    int out_ch = 0;
    int k = 3;
    int hout = 0, wout = 0;
    bool prunable = false;
    int offset = -1;
    std::string tied;
    std::vector<std::string> inputs;  // "@input" or layer ids
    std::vector<std::string> consumers;
};

struct PrunableSpec {
    std::vector<LayerInfo> layers;
    std::vector<PrunableUnit> units;
    int num_bits = 0;
    int input_ch = 0;
    double fixed_macs = 0.0;
    double t_total = 0.0;

    const LayerInfo& layer(const std::string& id) const;
    // [offset, offset+out_ch) of a prunable layer.
    std::pair<int, int> bit_range(const std::string& id) const;
    int size() const { return num_bits; }
};

// Enumerates prunable units of a plan-driven net. First and last convs are
// excluded by construction of the plans (prunable flags on the blocks).
PrunableSpec build_spec(const models::ConvNet& net, int input_hw);
PrunableSpec build_spec(const models::GeneratorNet& g);
PrunableSpec build_spec(const models::DiscriminatorNet& d, int image_size);

// Exact full-network MACs, multilinear in (possibly soft) mask entries.
double macs_of(const PrunableSpec& spec, std::span<const double> v);
// Mask-dependent part only, T(v) = macs_of(v) - fixed_macs, as a graph node.
ag::Var macs_of_var(const PrunableSpec& spec, const ag::Var& v);
double macs_all_on(const PrunableSpec& spec);
// Minimum T(v) reachable under the per-layer at-least-one guard.
double macs_min(const PrunableSpec& spec);

// Round (ties at 0.5 go to 1), then reactivate the largest soft entry of any
// all-zero layer.
ArchitectureVector harden(const PrunableSpec& spec, std::span<const double> v_soft, Owner owner);

models::MaskMap mask_map(const PrunableSpec& spec, const ArchitectureVector& v);

// Physically removes pruned channels; output equals the masked original.
models::ConvNet extract_subnetwork(const models::ConvNet& net, const PrunableSpec& spec,
                                   const ArchitectureVector& v);
models::GeneratorNet extract_subnetwork(const models::GeneratorNet& g,
                                        const ArchitectureVector& v);
models::DiscriminatorNet extract_subnetwork(const models::DiscriminatorNet& d, int image_size,
                                            const ArchitectureVector& v);

// JSON layer table (channel counts, kernel, spatial sizes, MAC subtotals).
io::json spec_dump(const PrunableSpec& spec);

}  // namespace mgc::archspec
