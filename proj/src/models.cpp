#include "mgc/models.hpp"

#include <cmath>
#include <iostream>

#include "mgc/errors.hpp"
#include "mgc/objectives.hpp"

namespace mgc::models {

using namespace ag;

Style style_from_string(const std::string& s) {
    if (s == "unet") return Style::unet;
    if (s == "resnet") return Style::resnet;
    throw ConfigError("unknown generator style: " + s);
}

std::string to_string(Style s) { return s == Style::unet ? "unet" : "resnet"; }

namespace {
std::string to_string(NormKind n) {
    switch (n) {
        case NormKind::none: return "none";
        case NormKind::batch: return "batch";
        default: return "instance";
    }
}
NormKind norm_from_string(const std::string& s) {
    if (s == "none") return NormKind::none;
    if (s == "batch") return NormKind::batch;
    if (s == "instance") return NormKind::instance;
    throw DataError("bad norm kind: " + s);
}
std::string to_string(ActKind a) {
    switch (a) {
        case ActKind::none: return "none";
        case ActKind::relu: return "relu";
        case ActKind::lrelu: return "lrelu";
        default: return "tanh";
    }
}
ActKind act_from_string(const std::string& s) {
    if (s == "none") return ActKind::none;
    if (s == "relu") return ActKind::relu;
    if (s == "lrelu") return ActKind::lrelu;
    if (s == "tanh") return ActKind::tanh_out;
    throw DataError("bad act kind: " + s);
}
}  // namespace

const Block& ConvNet::block(const std::string& name) const {
    for (const auto& b : blocks)
        if (b.cfg.name == name) return b;
    throw ContractViolation("no such block: " + name);
}

bool ConvNet::has_block(const std::string& name) const {
    for (const auto& b : blocks)
        if (b.cfg.name == name) return true;
    return false;
}

std::vector<Var> ConvNet::params() const {
    std::vector<Var> ps;
    for (const auto& [n, p] : named_params()) ps.push_back(p);
    return ps;
}

std::vector<std::pair<std::string, Var>> ConvNet::named_params() const {
    std::vector<std::pair<std::string, Var>> ps;
    for (const auto& b : blocks) {
        ps.emplace_back(b.cfg.name + ".w", b.w);
        ps.emplace_back(b.cfg.name + ".b", b.b);
        if (b.gamma) {
            ps.emplace_back(b.cfg.name + ".gamma", b.gamma);
            ps.emplace_back(b.cfg.name + ".beta", b.beta);
        }
    }
    return ps;
}

void ConvNet::set_requires_grad(bool on) {
    for (auto& b : blocks) {
        b.w->requires_grad = on;
        b.b->requires_grad = on;
        if (b.gamma) {
            b.gamma->requires_grad = on;
            b.beta->requires_grad = on;
        }
    }
}

ConvNet build_net(const std::vector<BlockCfg>& plan, int in_ch, Rng& rng) {
    ConvNet net;
    net.in_ch = in_ch;
    for (const auto& cfg : plan) {
        Block b;
        b.cfg = cfg;
        b.in_ch = 0;
        for (const auto& src : cfg.inputs) {
            if (src == "@input") {
                b.in_ch += in_ch;
            } else {
                bool found = false;
                for (const auto& prev : net.blocks)
                    if (prev.cfg.name == src) {
                        b.in_ch += prev.cfg.out_ch;
                        found = true;
                    }
                if (!found) throw ContractViolation("plan references unknown block: " + src);
            }
        }
        b.w = nn::conv_init(rng, cfg.out_ch, b.in_ch, cfg.k);
        b.b = nn::param_const({cfg.out_ch}, 0.0f);
        if (cfg.norm != NormKind::none) {
            b.gamma = nn::param_const({cfg.out_ch}, 1.0f);
            b.beta = nn::param_const({cfg.out_ch}, 0.0f);
            b.run_mean = Tensor({cfg.out_ch});
            b.run_var = Tensor::full({cfg.out_ch}, 1.0f);
        }
        net.blocks.push_back(std::move(b));
    }
    return net;
}

Var ConvNet::forward(const Var& x, const MaskMap* masks, bool training, bool dropout_on,
                     float dropout_rate, Rng* drop_rng,
                     std::map<std::string, Var>* taps) const {
    if (!x->val.all_finite()) throw ContractViolation("non-finite network input");
    if (x->val.shape.size() != 4 || x->val.dim(1) != in_ch)
        throw ContractViolation("input channel mismatch");
    std::map<std::string, Var> acts;
    acts["@input"] = x;
    Var out;
    for (const auto& b : blocks) {
        Var h;
        if (b.cfg.inputs.size() == 1) {
            h = acts.at(b.cfg.inputs[0]);
        } else {
            std::vector<Var> srcs;
            for (const auto& s : b.cfg.inputs) srcs.push_back(acts.at(s));
            h = concat_ch(srcs);
        }
        if (b.cfg.upsample) h = upsample2x(h);
        h = conv2d(h, b.w, b.b, b.cfg.stride, b.cfg.pad);
        if (b.cfg.norm == NormKind::instance) {
            h = norm2d_train(h, b.gamma, b.beta, 1e-5f, true, nullptr, nullptr, 0.1f);
        } else if (b.cfg.norm == NormKind::batch) {
            if (training) {
                // Running stats are training-state buffers, not graph values.
                auto* rm = const_cast<Tensor*>(&b.run_mean);
                auto* rv = const_cast<Tensor*>(&b.run_var);
                h = norm2d_train(h, b.gamma, b.beta, 1e-5f, false, rm, rv, 0.1f);
            } else {
                h = norm2d_eval(h, b.gamma, b.beta, b.run_mean, b.run_var, 1e-5f);
            }
        }
        if (!b.cfg.residual_from.empty()) h = add(h, acts.at(b.cfg.residual_from));
        switch (b.cfg.act) {
            case ActKind::relu: h = relu(h); break;
            case ActKind::lrelu: h = leaky_relu(h, 0.2f); break;
            case ActKind::tanh_out: h = vtanh(h); break;
            case ActKind::none: break;
        }
        if (b.cfg.dropout && dropout_on && dropout_rate > 0.0f) {
            if (!drop_rng) throw ContractViolation("dropout enabled without an rng stream");
            h = mul_const(h, nn::dropout_mask(h->val.shape, dropout_rate, *drop_rng));
        }
        const std::string mask_name = b.cfg.prunable ? b.cfg.name : b.cfg.tied_mask;
        if (masks && !mask_name.empty()) {
            auto it = masks->find(mask_name);
            if (it != masks->end()) {
                if (it->second->val.numel() != b.cfg.out_ch)
                    throw ContractViolation("mask length mismatch on " + b.cfg.name);
                h = scale_channels(h, it->second);
            }
        }
        if (taps) (*taps)[b.cfg.name] = h;
        acts[b.cfg.name] = h;
        out = h;
    }
    return out;
}

namespace {

std::vector<BlockCfg> unet_plan(int base, int depth, std::vector<int>* widths_out = nullptr) {
    std::vector<int> w(static_cast<std::size_t>(depth));
    for (int i = 0; i < depth; ++i) w[static_cast<std::size_t>(i)] = base << std::min(i, 2);
    if (widths_out) *widths_out = w;
    std::vector<BlockCfg> plan;
    for (int i = 0; i < depth; ++i) {
        BlockCfg c;
        c.name = "enc" + std::to_string(i);
        c.inputs = {i == 0 ? std::string("@input") : "enc" + std::to_string(i - 1)};
        c.out_ch = w[static_cast<std::size_t>(i)];
        c.stride = 2;
        c.norm = i == 0 ? NormKind::none : NormKind::batch;
        c.act = ActKind::lrelu;
        c.prunable = i > 0;
        plan.push_back(c);
    }
    for (int i = depth - 1; i >= 0; --i) {
        BlockCfg c;
        c.name = "dec" + std::to_string(i);
        if (i == depth - 1)
            c.inputs = {"enc" + std::to_string(i)};
        else
            c.inputs = {"dec" + std::to_string(i + 1), "enc" + std::to_string(i)};
        c.out_ch = i > 0 ? w[static_cast<std::size_t>(i - 1)] : base;
        c.upsample = true;
        c.norm = NormKind::batch;
        c.act = ActKind::relu;
        c.dropout = i > 0;
        c.prunable = true;
        plan.push_back(c);
    }
    BlockCfg head;
    head.name = "head";
    head.inputs = {"dec0"};
    head.out_ch = 3;
    head.act = ActKind::tanh_out;
    plan.push_back(head);
    return plan;
}

std::vector<BlockCfg> resnet_plan(int base, int nblocks) {
    std::vector<BlockCfg> plan;
    BlockCfg stem;
    stem.name = "stem";
    stem.inputs = {"@input"};
    stem.out_ch = base;
    stem.norm = NormKind::instance;
    plan.push_back(stem);

    BlockCfg d1;
    d1.name = "down1";
    d1.inputs = {"stem"};
    d1.out_ch = 2 * base;
    d1.stride = 2;
    d1.norm = NormKind::instance;
    d1.prunable = true;
    plan.push_back(d1);

    BlockCfg d2;
    d2.name = "down2";
    d2.inputs = {"down1"};
    d2.out_ch = 4 * base;
    d2.stride = 2;
    d2.norm = NormKind::instance;
    d2.prunable = true;
    plan.push_back(d2);

    std::string prev = "down2";
    for (int i = 0; i < nblocks; ++i) {
        BlockCfg a;
        a.name = "res" + std::to_string(i) + "a";
        a.inputs = {prev};
        a.out_ch = 4 * base;
        a.norm = NormKind::instance;
        a.dropout = true;
        a.prunable = true;
        plan.push_back(a);
        BlockCfg b;
        b.name = "res" + std::to_string(i) + "b";
        b.inputs = {a.name};
        b.out_ch = 4 * base;
        b.norm = NormKind::instance;
        b.act = ActKind::none;
        b.residual_from = prev;
        b.tied_mask = "down2";  // keeps the residual addition well-shaped after extraction
        plan.push_back(b);
        prev = b.name;
    }

    BlockCfg u1;
    u1.name = "up1";
    u1.inputs = {prev};
    u1.out_ch = 2 * base;
    u1.upsample = true;
    u1.norm = NormKind::instance;
    u1.prunable = true;
    plan.push_back(u1);

    BlockCfg u2;
    u2.name = "up2";
    u2.inputs = {"up1"};
    u2.out_ch = base;
    u2.upsample = true;
    u2.norm = NormKind::instance;
    u2.prunable = true;
    plan.push_back(u2);

    BlockCfg head;
    head.name = "head";
    head.inputs = {"up2"};
    head.out_ch = 3;
    head.act = ActKind::tanh_out;
    plan.push_back(head);
    return plan;
}

std::vector<BlockCfg> disc_plan(int base, int depth) {
    std::vector<BlockCfg> plan;
    for (int i = 0; i < depth; ++i) {
        BlockCfg c;
        c.name = "d" + std::to_string(i);
        c.inputs = {i == 0 ? std::string("@input") : "d" + std::to_string(i - 1)};
        c.out_ch = base << std::min(i, 2);
        c.stride = 2;
        c.norm = i == 0 ? NormKind::none : NormKind::instance;
        c.act = ActKind::lrelu;
        c.prunable = i > 0;
        plan.push_back(c);
    }
    BlockCfg head;
    head.name = "head";
    head.inputs = {"d" + std::to_string(depth - 1)};
    head.out_ch = 1;
    head.act = ActKind::none;
    plan.push_back(head);
    return plan;
}

std::vector<BlockCfg> encoder_plan(int base) {
    std::vector<BlockCfg> plan;
    const int widths[4] = {base, 2 * base, 4 * base, 4 * base};
    for (int i = 0; i < 4; ++i) {
        BlockCfg c;
        c.name = "e" + std::to_string(i);
        c.inputs = {i == 0 ? std::string("@input") : "e" + std::to_string(i - 1)};
        c.out_ch = widths[i];
        c.stride = 2;
        c.act = ActKind::relu;
        plan.push_back(c);
    }
    return plan;
}

}  // namespace

GeneratorNet build_generator(Style style, int base_width, int depth, float dropout_rate,
                             int image_size, Rng& rng) {
    GeneratorNet g;
    g.style = style;
    g.base_width = base_width;
    g.depth = depth;
    g.dropout_rate = dropout_rate;
    g.image_size = image_size;
    auto plan = style == Style::unet ? unet_plan(base_width, depth) : resnet_plan(base_width, depth);
    g.net = build_net(plan, 3, rng);
    return g;
}

DiscriminatorNet build_discriminator(int base_width, int depth, int /*image_size*/, Rng& rng) {
    DiscriminatorNet d;
    d.base_width = base_width;
    d.depth = depth;
    d.net = build_net(disc_plan(base_width, depth), 6, rng);
    return d;
}

EncoderNet build_encoder(int embedding_dim, int image_size, Rng& rng) {
    EncoderNet e;
    e.embedding_dim = embedding_dim;
    e.image_size = image_size;
    e.trunk = build_net(encoder_plan(16), 3, rng);
    const int sp = image_size / 16;
    const int feat = 64 * sp * sp;
    e.head_w = nn::param_uniform(rng, {embedding_dim, feat}, 1.0f / std::sqrt(static_cast<float>(feat)));
    e.head_b = nn::param_const({embedding_dim}, 0.0f);
    return e;
}

std::vector<Var> EncoderNet::params() const {
    auto ps = trunk.params();
    ps.push_back(head_w);
    ps.push_back(head_b);
    return ps;
}

Var generator_forward(const GeneratorNet& g, const Var& x, const MaskMap* masks, bool dropout_on,
                      Rng* drop_rng, bool training, std::map<std::string, Var>* taps) {
    return g.net.forward(x, masks, training, dropout_on, g.dropout_rate, drop_rng, taps);
}

Var discriminator_forward(const DiscriminatorNet& d, const Var& x, const Var& y,
                          const MaskMap* masks, bool training) {
    if (!x->val.same_shape(y->val)) throw ContractViolation("discriminator inputs must match");
    return d.net.forward(concat_ch({x, y}), masks, training, false, 0.0f, nullptr);
}

Var encoder_embed(const EncoderNet& e, const Var& y) {
    if (!y->val.all_finite()) throw ContractViolation("non-finite encoder input");
    Var h = e.trunk.forward(y, nullptr, false, false, 0.0f, nullptr);
    const int n = h->val.dim(0);
    h = reshape(h, {n, static_cast<int>(h->val.numel() / n)});
    return linear(h, e.head_w, e.head_b);
}

Tensor to_gan_range(const Tensor& img01) {
    Tensor t = img01;
    for (auto& v : t.data) v = 2.0f * v - 1.0f;
    return t;
}

Tensor from_gan_range(const Tensor& imgpm1) {
    Tensor t = imgpm1;
    for (auto& v : t.data) v = std::clamp(0.5f * (v + 1.0f), 0.0f, 1.0f);
    return t;
}

Tensor stack_images(const std::vector<const Tensor*>& imgs) {
    if (imgs.empty()) throw ContractViolation("stack_images: empty batch");
    const auto& s = imgs[0]->shape;
    Tensor out({static_cast<int>(imgs.size()), s[0], s[1], s[2]});
    std::int64_t off = 0;
    for (const auto* im : imgs) {
        if (im->shape != s) throw ContractViolation("stack_images: shape mismatch");
        std::copy(im->data.begin(), im->data.end(), out.data.begin() + off);
        off += im->numel();
    }
    return out;
}

PretrainHistory pretrain_gan(const datagen::DatasetBundle& ds, GeneratorNet& gen,
                             DiscriminatorNet& disc, const PretrainConfig& cfg) {
    if (ds.train.size() == 0) throw ConfigError("pretrain requires a non-empty train split");
    Rng rng(cfg.seed);
    Rng drop_rng = rng.fork(101);
    nn::Adam opt_g(gen.net.params(), {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2});
    nn::Adam opt_d(disc.net.params(), {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2});
    const auto flavor = cfg.hinge ? objectives::GanFlavor::hinge : objectives::GanFlavor::lsgan;

    PretrainHistory hist;
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<const Tensor*> xs, ys;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& s = ds.train.samples[rng.below(static_cast<std::uint64_t>(ds.train.size()))];
            xs.push_back(&s.source);
            ys.push_back(&s.target);
        }
        Var x = constant(to_gan_range(stack_images(xs)));
        Var y = constant(to_gan_range(stack_images(ys)));

        Var fake = generator_forward(gen, x, nullptr, true, &drop_rng, true);

        opt_d.zero_grad();
        Var real_score = discriminator_forward(disc, x, y, nullptr, true);
        Var fake_score_d = discriminator_forward(disc, x, detach(fake), nullptr, true);
        auto [d_term, g_unused] = objectives::gan_losses({real_score}, fake_score_d, flavor);
        backward(d_term);
        opt_d.step();

        opt_g.zero_grad();
        Var fake_score_g = discriminator_forward(disc, x, fake, nullptr, true);
        auto [d_unused, g_term] = objectives::gan_losses({real_score}, fake_score_g, flavor);
        Var l1 = mean(vabs(sub(fake, y)));
        Var g_loss = add(g_term, axpb(l1, cfg.l1_weight, 0.0f));
        backward(g_loss);
        opt_g.step();

        const float dl = d_term->val.at(0), gl = g_loss->val.at(0), l1v = l1->val.at(0);
        if (!std::isfinite(dl) || !std::isfinite(gl))
            throw DivergenceError("pretrain loss non-finite at step " + std::to_string(step));
        hist.d_loss.push_back(dl);
        hist.g_loss.push_back(gl);
        hist.l1.push_back(l1v);
    }

    if (ds.val.size() > 0) {
        const float v = eval_l1(gen, ds.val);
        if (v > cfg.val_l1_warn)
            std::cerr << "[pretrain] warning: val L1 " << v << " above threshold "
                      << cfg.val_l1_warn << "\n";
    }
    return hist;
}

float eval_l1(const GeneratorNet& gen, const datagen::Dataset& split) {
    double total = 0.0;
    for (const auto& s : split.samples) {
        Var x = constant(to_gan_range(stack_images({&s.source})));
        Var y = constant(to_gan_range(stack_images({&s.target})));
        Var fake = generator_forward(gen, x, nullptr, false, nullptr, false);
        total += mean(vabs(sub(fake, y)))->val.at(0);
    }
    return static_cast<float>(total / std::max(1, split.size()));
}

namespace {
Tensor augment(const Tensor& img, Rng& rng) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int dx = static_cast<int>(rng.below(7)) - 3;
    const int dy = static_cast<int>(rng.below(7)) - 3;
    const bool flip = rng.uniform() < 0.5;
    const float bright = static_cast<float>(rng.uniform(0.8, 1.2));
    float jitter[3];
    for (auto& j : jitter) j = static_cast<float>(rng.uniform(0.9, 1.1));
    Tensor out(img.shape);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int sx = std::clamp(x + dx, 0, w - 1);
                if (flip) sx = w - 1 - sx;
                const int sy = std::clamp(y + dy, 0, h - 1);
                float v = img.at((static_cast<std::int64_t>(ch) * h + sy) * w + sx);
                v *= bright * jitter[ch];
                out.at((static_cast<std::int64_t>(ch) * h + y) * w + x) =
                    std::clamp(v, 0.0f, 1.0f);
            }
    return out;
}
}  // namespace

void train_encoder(const datagen::DatasetBundle& ds, EncoderNet& enc,
                   const EncoderTrainConfig& cfg) {
    if (ds.train.size() == 0) throw ConfigError("train_encoder requires target images");
    Rng rng(cfg.seed);
    nn::Adam opt(enc.params(), {.lr = cfg.lr});
    const float inv_tau = 1.0f / cfg.temperature;

    for (int step = 0; step < cfg.steps; ++step) {
        // Two augmented views per sampled image; NT-Xent over the 2B batch.
        const int bp = cfg.batch_pairs;
        std::vector<Tensor> views;
        views.reserve(static_cast<std::size_t>(2 * bp));
        for (int i = 0; i < bp; ++i) {
            const auto& s = ds.train.samples[rng.below(static_cast<std::uint64_t>(ds.train.size()))];
            views.push_back(augment(s.target, rng));
            views.push_back(augment(s.target, rng));
        }
        std::vector<const Tensor*> ptrs;
        for (const auto& v : views) ptrs.push_back(&v);
        Var emb = encoder_embed(enc, constant(stack_images(ptrs)));
        const int n = 2 * bp, d = enc.embedding_dim;
        Var flat = reshape(emb, {n * d});
        std::vector<Var> rows, norms;
        for (int i = 0; i < n; ++i) {
            rows.push_back(slice1d(flat, i * d, d));
            norms.push_back(vsqrt(axpb(dot(rows.back(), rows.back()), 1.0f, 1e-8f)));
        }
        Var loss = scalar(0.0f);
        for (int i = 0; i < n; ++i) {
            const int pos = i ^ 1;
            std::vector<Var> logits;
            Var pos_logit;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                Var sim = div(dot(rows[i], rows[j]), mul(norms[i], norms[j]));
                Var lg = axpb(sim, inv_tau, 0.0f);
                logits.push_back(lg);
                if (j == pos) pos_logit = lg;
            }
            Var denom = vlog(sum(vexp(concat1d(logits))));
            loss = add(loss, sub(denom, pos_logit));
        }
        loss = axpb(loss, 1.0f / static_cast<float>(n), 0.0f);
        if (!std::isfinite(loss->val.at(0)))
            throw DivergenceError("encoder loss non-finite at step " + std::to_string(step));
        opt.zero_grad();
        backward(loss);
        opt.step();
    }

    // Collapse guard on a training subset.
    const int probe = std::min(32, ds.train.size());
    std::vector<const Tensor*> ptrs;
    for (int i = 0; i < probe; ++i) ptrs.push_back(&ds.train.samples[static_cast<std::size_t>(i)].target);
    Var emb = encoder_embed(enc, constant(stack_images(ptrs)));
    double m = 0.0, m2 = 0.0;
    for (float v : emb->val.data) {
        m += v;
        m2 += static_cast<double>(v) * v;
    }
    const double nelem = static_cast<double>(emb->val.numel());
    const double var = m2 / nelem - (m / nelem) * (m / nelem);
    if (var < 1e-6) throw DivergenceError("encoder embeddings collapsed (variance < 1e-6)");
}

namespace {
io::json cfg_to_json(const BlockCfg& c) {
    return {{"name", c.name},       {"inputs", c.inputs},
            {"out_ch", c.out_ch},   {"k", c.k},
            {"stride", c.stride},   {"pad", c.pad},
            {"upsample", c.upsample},
            {"norm", to_string(c.norm)},
            {"act", to_string(c.act)},
            {"dropout", c.dropout}, {"prunable", c.prunable},
            {"tied_mask", c.tied_mask},
            {"residual_from", c.residual_from}};
}
BlockCfg cfg_from_json(const io::json& j) {
    BlockCfg c;
    c.name = j["name"];
    c.inputs = j["inputs"].get<std::vector<std::string>>();
    c.out_ch = j["out_ch"];
    c.k = j["k"];
    c.stride = j["stride"];
    c.pad = j["pad"];
    c.upsample = j["upsample"];
    c.norm = norm_from_string(j["norm"]);
    c.act = act_from_string(j["act"]);
    c.dropout = j["dropout"];
    c.prunable = j["prunable"];
    c.tied_mask = j["tied_mask"];
    c.residual_from = j["residual_from"];
    return c;
}
}  // namespace

void save_convnet(const ConvNet& net, io::json extra_meta, const std::filesystem::path& path) {
    io::Archive a;
    a.meta = std::move(extra_meta);
    a.meta["in_ch"] = net.in_ch;
    a.meta["plan"] = io::json::array();
    for (const auto& b : net.blocks) a.meta["plan"].push_back(cfg_to_json(b.cfg));
    for (const auto& b : net.blocks) {
        a.tensors.emplace_back(b.cfg.name + ".w", b.w->val);
        a.tensors.emplace_back(b.cfg.name + ".b", b.b->val);
        if (b.gamma) {
            a.tensors.emplace_back(b.cfg.name + ".gamma", b.gamma->val);
            a.tensors.emplace_back(b.cfg.name + ".beta", b.beta->val);
            a.tensors.emplace_back(b.cfg.name + ".rm", b.run_mean);
            a.tensors.emplace_back(b.cfg.name + ".rv", b.run_var);
        }
    }
    save_archive(path, a);
}

ConvNet load_convnet(const std::filesystem::path& path, io::json* meta_out) {
    io::Archive a = io::load_archive(path);
    std::vector<BlockCfg> plan;
    for (const auto& j : a.meta["plan"]) plan.push_back(cfg_from_json(j));
    Rng dummy(0);
    ConvNet net = build_net(plan, a.meta["in_ch"], dummy);
    for (auto& b : net.blocks) {
        b.w = ag::leaf(a.get(b.cfg.name + ".w"), true);
        b.b = ag::leaf(a.get(b.cfg.name + ".b"), true);
        if (b.gamma) {
            b.gamma = ag::leaf(a.get(b.cfg.name + ".gamma"), true);
            b.beta = ag::leaf(a.get(b.cfg.name + ".beta"), true);
            b.run_mean = a.get(b.cfg.name + ".rm");
            b.run_var = a.get(b.cfg.name + ".rv");
        }
    }
    if (meta_out) *meta_out = a.meta;
    return net;
}

void save_generator(const GeneratorNet& g, const std::filesystem::path& path) {
    io::json meta = {{"kind", "generator"},
                     {"style", to_string(g.style)},
                     {"base_width", g.base_width},
                     {"depth", g.depth},
                     {"dropout_rate", g.dropout_rate},
                     {"image_size", g.image_size}};
    save_convnet(g.net, meta, path);
}

GeneratorNet load_generator(const std::filesystem::path& path) {
    io::json meta;
    ConvNet net = load_convnet(path, &meta);
    GeneratorNet g;
    g.style = style_from_string(meta["style"]);
    g.base_width = meta["base_width"];
    g.depth = meta["depth"];
    g.dropout_rate = meta["dropout_rate"];
    g.image_size = meta["image_size"];
    g.net = std::move(net);
    return g;
}

void save_discriminator(const DiscriminatorNet& d, const std::filesystem::path& path) {
    io::json meta = {{"kind", "discriminator"}, {"base_width", d.base_width}, {"depth", d.depth}};
    save_convnet(d.net, meta, path);
}

DiscriminatorNet load_discriminator(const std::filesystem::path& path) {
    io::json meta;
    ConvNet net = load_convnet(path, &meta);
    DiscriminatorNet d;
    d.base_width = meta["base_width"];
    d.depth = meta["depth"];
    d.net = std::move(net);
    return d;
}

void save_encoder(const EncoderNet& e, const std::filesystem::path& path) {
    io::Archive a;
    a.meta = {{"kind", "encoder"},
              {"embedding_dim", e.embedding_dim},
              {"image_size", e.image_size},
              {"in_ch", e.trunk.in_ch},
              {"plan", io::json::array()}};
    for (const auto& b : e.trunk.blocks) a.meta["plan"].push_back(cfg_to_json(b.cfg));
    for (const auto& b : e.trunk.blocks) {
        a.tensors.emplace_back(b.cfg.name + ".w", b.w->val);
        a.tensors.emplace_back(b.cfg.name + ".b", b.b->val);
    }
    a.tensors.emplace_back("head.w", e.head_w->val);
    a.tensors.emplace_back("head.b", e.head_b->val);
    save_archive(path, a);
}

EncoderNet load_encoder(const std::filesystem::path& path) {
    io::Archive a = io::load_archive(path);
    EncoderNet e;
    e.embedding_dim = a.meta["embedding_dim"];
    e.image_size = a.meta["image_size"];
    std::vector<BlockCfg> plan;
    for (const auto& j : a.meta["plan"]) plan.push_back(cfg_from_json(j));
    Rng dummy(0);
    e.trunk = build_net(plan, a.meta["in_ch"], dummy);
    for (auto& b : e.trunk.blocks) {
        b.w = ag::leaf(a.get(b.cfg.name + ".w"), true);
        b.b = ag::leaf(a.get(b.cfg.name + ".b"), true);
    }
    e.head_w = ag::leaf(a.get("head.w"), true);
    e.head_b = ag::leaf(a.get("head.b"), true);
    return e;
}

std::uint64_t weights_checksum(const ConvNet& net) {
    std::vector<std::pair<std::string, Tensor>> ts;
    for (const auto& [n, p] : net.named_params()) ts.emplace_back(n, p->val);
    return io::tensor_checksum(ts);
}

}  // namespace mgc::models
