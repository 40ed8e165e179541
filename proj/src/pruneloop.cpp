#include "mgc/pruneloop.hpp"

#include <cmath>
#include <sstream>

#include "mgc/errors.hpp"

namespace mgc::pruneloop {

using namespace ag;
using agents::AgentState;
using models::MaskMap;
using objectives::GanFlavor;
using objectives::LossBundle;

namespace {

std::vector<const Tensor*> real_set(const datagen::Dataset& train,
                                    const manifold::NeighborhoodIndex& index, int center_id,
                                    const config::RunConfig& cfg) {
    std::vector<const Tensor*> reals;
    if (cfg.ablation.manifold_real_set) {
        if (cfg.index.include_center) reals.push_back(&train.by_id(center_id).target);
        for (const auto& n : index.of(center_id)) reals.push_back(&train.by_id(n.id).target);
        if (reals.empty()) throw DataError("empty neighborhood for sample " +
                                           std::to_string(center_id));
    } else {
        reals.push_back(&train.by_id(center_id).target);
    }
    return reals;
}

float hard_mean(const Var& v) {
    double s = 0.0;
    for (float x : v->val.data) s += x;
    return static_cast<float>(s / static_cast<double>(v->val.numel()));
}

std::vector<double> hard_bits(const Var& v) {
    std::vector<double> out(static_cast<std::size_t>(v->val.numel()));
    for (std::int64_t i = 0; i < v->val.numel(); ++i) out[static_cast<std::size_t>(i)] = v->val.at(i);
    return out;
}

}  // namespace

PruneResult prune(const models::GeneratorNet& gen, const models::DiscriminatorNet& disc,
                  const manifold::NeighborhoodIndex& index, const datagen::Dataset& train,
                  const config::RunConfig& cfg) {
    config::validate(cfg);
    if (train.size() == 0) throw ConfigError("prune requires a non-empty train split");
    const auto spec_g = archspec::build_spec(gen);
    const auto spec_d = archspec::build_spec(disc, gen.image_size);
    const double budget = cfg.prune.p * spec_g.t_total;
    if (budget < archspec::macs_min(spec_g))
        throw ConfigError("budget p*t_total is below the at-least-one minimum of the generator");
    if (cfg.ablation.manifold_real_set && index.k != cfg.index.k)
        throw ConfigError("index k does not match config");

    // Frozen base pair: the agents are the only trainable parameters.
    models::GeneratorNet g = gen;
    models::DiscriminatorNet d = disc;
    g.net.set_requires_grad(false);
    d.net.set_requires_grad(false);

    PruneResult out;
    out.agent_g = agents::make_agent(spec_g, archspec::Owner::generator, cfg.prune.seed + 1,
                                     !cfg.ablation.use_agents);
    out.agent_d = agents::make_agent(spec_d, archspec::Owner::discriminator, cfg.prune.seed + 2,
                                     !cfg.ablation.use_agents);

    nn::Adam::Cfg ocfg{.lr = cfg.prune.lr,
                       .beta1 = cfg.prune.beta1,
                       .beta2 = cfg.prune.beta2,
                       .weight_decay = cfg.prune.weight_decay};
    nn::Adam opt_g(out.agent_g.params(), ocfg);
    nn::Adam opt_d(out.agent_d.params(), ocfg);

    Rng root(cfg.prune.seed);
    Rng sample_rng = root.fork(1);
    Rng gumbel_rng = root.fork(2);
    Rng drop_rng = root.fork(3);

    const auto flavor = objectives::flavor_from_string(cfg.prune.flavor);
    const bool dropout_on = gen.dropout_rate > 0.0f;

    for (int step = 0; step < cfg.prune.steps; ++step) {
        const auto& sample =
            train.samples[sample_rng.below(static_cast<std::uint64_t>(train.size()))];
        Var x = constant(models::to_gan_range(models::stack_images({&sample.source})));
        auto reals = real_set(train, index, sample.id, cfg);

        LossBundle bundle;
        bundle.step = step;

        Var v_d_hard;  // gates chosen by the D phase, reused constant in the G phase
        if (cfg.ablation.prune_d) {
            Var peer = cfg.ablation.exchange_feedback
                           ? constant(out.agent_g.last_embedding)
                           : agents::zero_embedding(out.agent_d.hidden_dim);
            auto [o_d, h_d] = agents::agent_forward(out.agent_d, peer, true);
            auto draw_d = agents::draw_gumbel(spec_d.num_bits, cfg.prune.tau, gumbel_rng);
            Var v_d = agents::gumbel_sigmoid_ste(o_d, draw_d).first;
            auto masks_d = agents::mask_map_from_gates(spec_d, v_d);

            // The fake sample must not leak gradient into the G agent here.
            Var peer_g = cfg.ablation.exchange_feedback
                             ? constant(out.agent_d.last_embedding)
                             : agents::zero_embedding(out.agent_g.hidden_dim);
            Var o_g = agents::agent_forward(out.agent_g, peer_g, true).first;
            auto draw_g = agents::draw_gumbel(spec_g.num_bits, cfg.prune.tau, gumbel_rng);
            Var v_g_d = agents::gumbel_sigmoid_ste(o_g, draw_g).first;
            auto masks_g = agents::mask_map_from_gates(spec_g, detach(v_g_d));
            Var fake = models::generator_forward(g, x, &masks_g, dropout_on, &drop_rng, false);

            std::vector<Var> real_scores;
            for (const auto* y : reals)
                real_scores.push_back(models::discriminator_forward(
                    d, x, constant(models::to_gan_range(models::stack_images({y}))), &masks_d));
            Var fake_score = models::discriminator_forward(d, x, detach(fake), &masks_d);
            auto terms = objectives::gan_losses(real_scores, fake_score, flavor);
            Var loss_d = add(terms.d_term,
                             axpb(objectives::sparsity_loss(v_d), cfg.prune.lambda2, 0.0f));

            opt_d.zero_grad();
            backward(loss_d);
            opt_d.step();
            out.agent_d.last_embedding = h_d->val;

            bundle.loss_d = loss_d->val.at(0);
            bundle.sparsity = hard_mean(v_d);
            bundle.active_vd = bundle.sparsity;
            v_d_hard = detach(v_d);
        } else {
            bundle.sparsity = 1.0f;
            bundle.active_vd = 1.0f;
            v_d_hard = constant(Tensor::full({spec_d.num_bits}, 1.0f));
        }

        {
            Var peer = cfg.ablation.exchange_feedback
                           ? constant(out.agent_d.last_embedding)
                           : agents::zero_embedding(out.agent_g.hidden_dim);
            auto [o_g, h_g] = agents::agent_forward(out.agent_g, peer, true);
            auto draw = agents::draw_gumbel(spec_g.num_bits, cfg.prune.tau, gumbel_rng);
            Var v_g = agents::gumbel_sigmoid_ste(o_g, draw).first;
            auto masks_g = agents::mask_map_from_gates(spec_g, v_g);
            auto masks_d = agents::mask_map_from_gates(spec_d, v_d_hard);

            Var fake = models::generator_forward(g, x, &masks_g, dropout_on, &drop_rng, false);
            Var fake_score = models::discriminator_forward(d, x, fake, &masks_d);
            // The real scores only matter for the D side; g_term depends on
            // the fake alone, so a single real map keeps this phase cheap.
            auto terms = objectives::gan_losses(
                {models::discriminator_forward(
                    d, x, constant(models::to_gan_range(models::stack_images({reals[0]}))),
                    &masks_d)},
                fake_score, flavor);
            Var resource = objectives::resource_loss(spec_g, v_g, cfg.prune.p);
            Var loss_g = add(terms.g_term, axpb(resource, cfg.prune.lambda1, 0.0f));

            opt_g.zero_grad();
            backward(loss_g);
            opt_g.step();
            out.agent_g.last_embedding = h_g->val;

            bundle.loss_g = loss_g->val.at(0);
            bundle.resource = resource->val.at(0);
            bundle.t_vg = archspec::macs_of(spec_g, hard_bits(v_g)) - spec_g.fixed_macs;
        }

        if (!std::isfinite(bundle.loss_g) || !std::isfinite(bundle.loss_d) ||
            !std::isfinite(bundle.resource))
            throw DivergenceError("non-finite pruning loss at step " + std::to_string(step));
        out.history.push_back(bundle);
    }
    g.net.set_requires_grad(true);
    d.net.set_requires_grad(true);
    return out;
}

FinalizeResult finalize(const AgentState& agent_g, const AgentState& agent_d,
                        const models::GeneratorNet& gen, const models::DiscriminatorNet& disc,
                        const config::RunConfig& cfg) {
    const auto spec_g = archspec::build_spec(gen);
    const auto spec_d = archspec::build_spec(disc, gen.image_size);

    FinalizeResult out;
    Var peer_for_g = cfg.ablation.exchange_feedback ? constant(agent_d.last_embedding)
                                                    : agents::zero_embedding(agent_g.hidden_dim);
    out.v_g = agents::hard_decision(agent_g, peer_for_g, spec_g, cfg.prune.tau);
    if (cfg.ablation.prune_d) {
        Var peer_for_d = cfg.ablation.exchange_feedback
                             ? constant(agent_g.last_embedding)
                             : agents::zero_embedding(agent_d.hidden_dim);
        out.v_d = agents::hard_decision(agent_d, peer_for_d, spec_d, cfg.prune.tau);
    } else {
        out.v_d.owner = archspec::Owner::discriminator;
        out.v_d.bits.assign(static_cast<std::size_t>(spec_d.num_bits), 1);
    }

    out.gen = archspec::extract_subnetwork(gen, out.v_g);
    out.disc = archspec::extract_subnetwork(disc, gen.image_size, out.v_d);

    auto describe = [](const archspec::PrunableSpec& spec, const archspec::ArchitectureVector& v,
                       double budget) {
        const double full = spec.t_total + spec.fixed_macs;
        const double pruned = archspec::macs_of(spec, v.as_doubles());
        io::json layers = io::json::object();
        for (const auto& l : spec.layers) {
            if (!l.prunable) continue;
            int alive = 0;
            for (int c = 0; c < l.out_ch; ++c)
                alive += v.bits[static_cast<std::size_t>(l.offset + c)];
            layers[l.layer_id] = {{"kept", alive}, {"total", l.out_ch}};
        }
        std::string bits;
        for (auto b : v.bits) bits.push_back(b ? '1' : '0');
        io::json j = {{"macs_full", full},
                      {"macs_pruned", pruned},
                      {"prunable_macs_pruned", pruned - spec.fixed_macs},
                      {"t_total", spec.t_total},
                      {"fixed_macs", spec.fixed_macs},
                      {"compression_ratio", 1.0 - pruned / full},
                      {"active_bits", v.active()},
                      {"num_bits", v.size()},
                      {"bits", bits},
                      {"survival", layers}};
        if (budget > 0.0) j["budget"] = budget;
        return j;
    };
    out.report = {{"generator", describe(spec_g, out.v_g, cfg.prune.p * spec_g.t_total)},
                  {"discriminator", describe(spec_d, out.v_d, 0.0)}};
    return out;
}

std::vector<std::string> kd_tap_names(models::Style style, int depth) {
    if (style == models::Style::resnet) return {"up1", "up2"};
    if (depth >= 2)
        return {"dec" + std::to_string(depth - 1), "dec" + std::to_string(depth - 2)};
    return {"dec0"};
}

FinetuneHistory finetune(models::GeneratorNet& gen, models::DiscriminatorNet& disc,
                         const models::GeneratorNet& teacher, const datagen::DatasetBundle& ds,
                         const config::RunConfig& cfg) {
    config::validate(cfg);
    if (ds.train.size() == 0) throw ConfigError("finetune requires a non-empty train split");
    gen.net.set_requires_grad(true);
    disc.net.set_requires_grad(true);

    const auto taps = kd_tap_names(gen.style, gen.depth);
    objectives::FeatureAdaptors adaptors;
    if (cfg.ablation.use_kd) {
        std::vector<int> sc, tc;
        for (const auto& name : taps) {
            sc.push_back(gen.net.block(name).cfg.out_ch);
            tc.push_back(teacher.net.block(name).cfg.out_ch);
        }
        adaptors = objectives::make_adaptors(sc, tc);
    }

    auto g_params = gen.net.params();
    for (const auto& p : adaptors.params()) g_params.push_back(p);
    nn::Adam opt_g(g_params, {.lr = cfg.finetune.lr, .beta1 = cfg.finetune.beta1});
    nn::Adam opt_d(disc.net.params(), {.lr = cfg.finetune.lr, .beta1 = cfg.finetune.beta1});

    Rng rng(cfg.finetune.seed);
    const auto flavor = objectives::flavor_from_string(cfg.prune.flavor);
    FinetuneHistory hist;

    for (int step = 0; step < cfg.finetune.steps; ++step) {
        std::vector<const Tensor*> xs, ys;
        for (int b = 0; b < cfg.finetune.batch; ++b) {
            const auto& s = ds.train.samples[rng.below(static_cast<std::uint64_t>(ds.train.size()))];
            xs.push_back(&s.source);
            ys.push_back(&s.target);
        }
        Var x = constant(models::to_gan_range(models::stack_images(xs)));
        Var y = constant(models::to_gan_range(models::stack_images(ys)));

        std::map<std::string, Var> student_taps;
        Var fake = models::generator_forward(gen, x, nullptr, false, nullptr, true, &student_taps);

        opt_d.zero_grad();
        Var real_score = models::discriminator_forward(disc, x, y, nullptr, true);
        Var fake_score_d = models::discriminator_forward(disc, x, detach(fake), nullptr, true);
        auto d_terms = objectives::gan_losses({real_score}, fake_score_d, flavor);
        backward(d_terms.d_term);
        opt_d.step();

        opt_g.zero_grad();
        Var fake_score_g = models::discriminator_forward(disc, x, fake, nullptr, true);
        auto g_terms = objectives::gan_losses({real_score}, fake_score_g, flavor);
        Var l1 = mean(vabs(sub(fake, y)));
        Var loss_g = add(g_terms.g_term, axpb(l1, cfg.finetune.l1_weight, 0.0f));
        float kd_val = 0.0f;
        if (cfg.ablation.use_kd) {
            std::map<std::string, Var> teacher_taps;
            models::generator_forward(teacher, x, nullptr, false, nullptr, false, &teacher_taps);
            std::vector<Var> sf, tf;
            for (const auto& name : taps) {
                sf.push_back(student_taps.at(name));
                tf.push_back(detach(teacher_taps.at(name)));
            }
            Var kd = objectives::distillation_losses(sf, tf, adaptors, cfg.finetune.lambda_content,
                                                     cfg.finetune.lambda_texture);
            kd_val = kd->val.at(0);
            loss_g = add(loss_g, kd);
        }
        backward(loss_g);
        opt_g.step();

        const float gl = loss_g->val.at(0), dl = d_terms.d_term->val.at(0);
        if (!std::isfinite(gl) || !std::isfinite(dl))
            throw DivergenceError("non-finite finetune loss at step " + std::to_string(step));
        hist.g_loss.push_back(gl);
        hist.d_loss.push_back(dl);
        hist.l1.push_back(l1->val.at(0));
        hist.kd.push_back(kd_val);
    }
    return hist;
}

std::string history_to_csv(const std::vector<LossBundle>& history) {
    std::ostringstream os;
    os << objectives::history_csv_header() << "\n";
    for (const auto& b : history) os << objectives::history_csv_row(b) << "\n";
    return os.str();
}

std::vector<LossBundle> history_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line != objectives::history_csv_header())
        throw DataError("unrecognized history csv header");
    std::vector<LossBundle> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) throw DataError("malformed history row: " + line);
        LossBundle b;
        b.step = std::stoi(cells[0]);
        b.loss_g = std::stof(cells[1]);
        b.loss_d = std::stof(cells[2]);
        b.resource = std::stof(cells[3]);
        b.sparsity = std::stof(cells[4]);
        b.t_vg = std::stod(cells[5]);
        b.active_vd = std::stof(cells[6]);
        out.push_back(b);
    }
    return out;
}

}  // namespace mgc::pruneloop
