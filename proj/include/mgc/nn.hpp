#pragma once

#include <string>
#include <vector>

#include "mgc/autograd.hpp"
#include "mgc/rng.hpp"

namespace mgc::nn {

using ag::Var;

// Trainable leaf initializers.
Var param_normal(Rng& rng, std::vector<int> shape, float stddev);
Var param_uniform(Rng& rng, std::vector<int> shape, float bound);
Var param_const(std::vector<int> shape, float value);

// Kaiming-style fan-in init for conv weights [co, ci, k, k].
Var conv_init(Rng& rng, int co, int ci, int k);

// Inverted dropout mask (entries 0 or 1/(1-rate)).
Tensor dropout_mask(const std::vector<int>& shape, float rate, Rng& rng);

struct Adam {
    struct Cfg {
        float lr = 1e-3f;
        float beta1 = 0.9f;
        float beta2 = 0.999f;
        float eps = 1e-8f;
        float weight_decay = 0.0f;
    };

    Adam(std::vector<Var> params, Cfg cfg);
    void step();
    void zero_grad();

    Cfg cfg;
    std::vector<Var> params;

private:
    struct Slot {
        std::vector<float> m, v;
    };
    std::vector<Slot> slots_;
    long t_ = 0;
};

// Dense layer with weight normalization (per output row).
struct WNLinear {
    Var v, g, b;  // v: [out, in], g/b: [out]

    static WNLinear init(Rng& rng, int in, int out);
    Var forward(const Var& x) const;  // x: [B, in]
    std::vector<Var> params() const { return {v, g, b}; }
};

// GRU cell, input->hidden, all six weight matrices weight-normalized.
struct GruCell {
    int in, hid;
    WNLinear ir, iz, in_, hr, hz, hn;  // gate projections

    static GruCell init(Rng& rng, int in, int hid);
    Var forward(const Var& x, const Var& h) const;  // x: [1,in], h: [1,hid] -> [1,hid]
    std::vector<Var> params() const;
};

}  // namespace mgc::nn
