#include "mgc/nn.hpp"

#include <cmath>

namespace mgc::nn {

using namespace ag;

Var param_normal(Rng& rng, std::vector<int> shape, float stddev) {
    Tensor t(shape);
    for (auto& v : t.data) v = static_cast<float>(rng.normal()) * stddev;
    return leaf(std::move(t), true);
}

Var param_uniform(Rng& rng, std::vector<int> shape, float bound) {
    Tensor t(shape);
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
    return leaf(std::move(t), true);
}

Var param_const(std::vector<int> shape, float value) {
    return leaf(Tensor::full(std::move(shape), value), true);
}

Var conv_init(Rng& rng, int co, int ci, int k) {
    const float std = std::sqrt(2.0f / static_cast<float>(ci * k * k));
    return param_normal(rng, {co, ci, k, k}, std);
}

Tensor dropout_mask(const std::vector<int>& shape, float rate, Rng& rng) {
    Tensor m(shape);
    const float scale = 1.0f / (1.0f - rate);
    for (auto& v : m.data) v = rng.uniform() < rate ? 0.0f : scale;
    return m;
}

Adam::Adam(std::vector<Var> params_, Cfg cfg_) : cfg(cfg_), params(std::move(params_)) {
    slots_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        slots_[i].m.assign(params[i]->val.data.size(), 0.0f);
        slots_[i].v.assign(params[i]->val.data.size(), 0.0f);
    }
}

void Adam::step() {
    ++t_;
    const float bc1 = 1.0f - std::pow(cfg.beta1, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(cfg.beta2, static_cast<float>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        if (p.grad.data.empty()) continue;
        auto& s = slots_[i];
        for (std::size_t j = 0; j < p.val.data.size(); ++j) {
            float g = p.grad.data[j] + cfg.weight_decay * p.val.data[j];
            s.m[j] = cfg.beta1 * s.m[j] + (1.0f - cfg.beta1) * g;
            s.v[j] = cfg.beta2 * s.v[j] + (1.0f - cfg.beta2) * g * g;
            const float mhat = s.m[j] / bc1;
            const float vhat = s.v[j] / bc2;
            p.val.data[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params)
        if (!p->grad.data.empty()) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0f);
}

WNLinear WNLinear::init(Rng& rng, int in, int out) {
    WNLinear l;
    const float bound = 1.0f / std::sqrt(static_cast<float>(in));
    l.v = param_uniform(rng, {out, in}, bound);
    // g initialized to the row norms so the initial effective weight equals v.
    Tensor g({out});
    for (int r = 0; r < out; ++r) {
        double s = 0.0;
        for (int c = 0; c < in; ++c) {
            float w = l.v->val.at(static_cast<std::int64_t>(r) * in + c);
            s += static_cast<double>(w) * w;
        }
        g.at(r) = static_cast<float>(std::sqrt(s));
    }
    l.g = leaf(std::move(g), true);
    l.b = param_const({out}, 0.0f);
    return l;
}

Var WNLinear::forward(const Var& x) const {
    return linear(x, row_weight_norm(v, g), b);
}

GruCell GruCell::init(Rng& rng, int in, int hid) {
    GruCell c;
    c.in = in;
    c.hid = hid;
    c.ir = WNLinear::init(rng, in, hid);
    c.iz = WNLinear::init(rng, in, hid);
    c.in_ = WNLinear::init(rng, in, hid);
    c.hr = WNLinear::init(rng, hid, hid);
    c.hz = WNLinear::init(rng, hid, hid);
    c.hn = WNLinear::init(rng, hid, hid);
    return c;
}

Var GruCell::forward(const Var& x, const Var& h) const {
    Var r = vsigmoid(add(ir.forward(x), hr.forward(h)));
    Var z = vsigmoid(add(iz.forward(x), hz.forward(h)));
    Var n = vtanh(add(in_.forward(x), mul(r, hn.forward(h))));
    // h' = (1-z)*n + z*h
    return add(mul(axpb(z, -1.0f, 1.0f), n), mul(z, h));
}

std::vector<Var> GruCell::params() const {
    std::vector<Var> ps;
    for (const auto* l : {&ir, &iz, &in_, &hr, &hz, &hn})
        for (const auto& p : l->params()) ps.push_back(p);
    return ps;
}

}  // namespace mgc::nn
