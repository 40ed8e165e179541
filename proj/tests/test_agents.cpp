#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mgc/agents.hpp"
#include "mgc/errors.hpp"

using namespace mgc;
using namespace mgc::agents;

namespace {

archspec::PrunableSpec toy_spec(Rng& rng) {
    models::BlockCfg a;
    a.name = "a";
    a.inputs = {"@input"};
    a.out_ch = 4;
    a.stride = 2;
    a.prunable = true;
    models::BlockCfg b = a;
    b.name = "b";
    b.inputs = {"a"};
    b.out_ch = 6;
    models::BlockCfg head;
    head.name = "head";
    head.inputs = {"b"};
    head.out_ch = 3;
    head.act = models::ActKind::tanh_out;
    auto net = models::build_net({a, b, head}, 3, rng);
    return archspec::build_spec(net, 32);
}

}  // namespace

TEST_CASE("agent forward: shapes, determinism, and peer detachment") {
    Rng rng(1);
    auto spec = toy_spec(rng);
    auto agent = make_agent(spec, archspec::Owner::generator, 7);
    REQUIRE(agent.num_bits() == spec.num_bits);
    REQUIRE(agent.head_widths == std::vector<int>{4, 6});

    auto peer = ag::leaf(Tensor({1, 256}), true);
    for (auto& v : peer->val.data) v = 0.01f;

    auto [o1, h1] = agent_forward(agent, peer, true);
    auto [o2, h2] = agent_forward(agent, peer, true);
    CHECK(o1->val.numel() == spec.num_bits);
    CHECK(h1->val.shape == std::vector<int>{1, 256});
    CHECK(o1->val.data == o2->val.data);
    CHECK(h1->val.data == h2->val.data);

    // Detached peer: gradient is exactly zero.
    ag::backward(ag::sum(o1));
    for (float g : peer->grad.data) CHECK(g == 0.0f);

    // Live peer: gradient is nonzero for generic weights.
    auto peer2 = ag::leaf(peer->val, true);
    auto [o3, h3] = agent_forward(agent, peer2, false);
    ag::backward(ag::sum(o3));
    float total = 0.0f;
    for (float g : peer2->grad.data) total += std::fabs(g);
    CHECK(total > 0.0f);

    auto bad = ag::constant(Tensor({1, 128}));
    CHECK_THROWS_AS(agent_forward(agent, bad, true), ContractViolation);
}

TEST_CASE("naive agent exposes one free logit per bit") {
    Rng rng(2);
    auto spec = toy_spec(rng);
    auto agent = make_agent(spec, archspec::Owner::generator, 7, true);
    auto [o, h] = agent_forward(agent, zero_embedding(), true);
    CHECK(o->val.numel() == spec.num_bits);
    for (float v : o->val.data) CHECK(v == 0.0f);
    CHECK(agent.params().size() == 1);
    for (float v : h->val.data) CHECK(v == 0.0f);
}

TEST_CASE("gumbel-sigmoid canonical values and tie rule") {
    Tensor ot({3});
    ot.at(0) = -2.0f;
    ot.at(1) = 2.0f;
    ot.at(2) = 0.0f;
    auto o = ag::constant(ot);
    auto [v, v_soft] = gumbel_sigmoid_ste(o, zero_draw(3, 1.0f));
    CHECK(v_soft->val.at(0) == doctest::Approx(0.8807970779778823).epsilon(1e-6));
    CHECK(v_soft->val.at(1) == doctest::Approx(0.11920292202211755).epsilon(1e-6));
    CHECK(v_soft->val.at(2) == doctest::Approx(0.5));
    CHECK(v->val.at(0) == 1.0f);
    CHECK(v->val.at(1) == 0.0f);
    CHECK(v->val.at(2) == 1.0f);  // round(0.5) -> 1

    CHECK_THROWS_AS(zero_draw(3, 0.0f), ConfigError);
    CHECK_THROWS_AS(gumbel_sigmoid_ste(o, zero_draw(2, 1.0f)), ContractViolation);
}

TEST_CASE("straight-through gradient matches finite differences within 1e-4") {
    Rng rng(3);
    double max_rel = 0.0;
    for (float tau : {0.5f, 1.0f, 2.0f}) {
        for (int trial = 0; trial < 400; ++trial) {
            const double ov = rng.uniform(-4.0, 4.0);
            const double gv = rng.gumbel();
            Tensor t({1});
            t.at(0) = static_cast<float>(ov);
            auto o = ag::leaf(t, true);
            GumbelDraw d = zero_draw(1, tau);
            d.g.at(0) = static_cast<float>(gv);
            auto [v, v_soft] = gumbel_sigmoid_ste(o, d);
            ag::backward(v);  // STE: grad through the rounded gate

            // Analytic closed form -(1/tau) * s * (1 - s) against central
            // finite differences, both in double precision.
            const double s = gumbel_sigmoid_soft(ov, gv, tau);
            const double analytic = -(1.0 / tau) * s * (1.0 - s);
            const double h = 1e-5;
            const double fd = (gumbel_sigmoid_soft(ov + h, gv, tau) -
                               gumbel_sigmoid_soft(ov - h, gv, tau)) /
                              (2 * h);
            if (std::fabs(fd) < 1e-9) continue;
            max_rel = std::max(max_rel, std::fabs(analytic - fd) / std::fabs(fd));

            // The tape's straight-through gradient tracks the same value up to
            // float32 noise.
            CHECK(o->grad.at(0) == doctest::Approx(analytic).epsilon(5e-3));
        }
    }
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("gate behavior: monotone in logits and step-like at small tau") {
    // Decreasing a logit never flips its gate from 1 to 0.
    for (double o = -5.0; o <= 5.0; o += 0.25) {
        const double lo = gumbel_sigmoid_soft(o, 0.0, 1.0);
        const double hi = gumbel_sigmoid_soft(o - 0.5, 0.0, 1.0);
        CHECK(hi >= lo);
    }
    // tau -> 0 approaches step(-o).
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const double o = rng.uniform(-3.0, 3.0);
        if (std::fabs(o) <= 0.1) continue;
        const double s = gumbel_sigmoid_soft(o, 0.0, 1e-3);
        CHECK(std::fabs(s - (o < 0 ? 1.0 : 0.0)) < 1e-6);
    }
}

TEST_CASE("gumbel draws are finite and seeded") {
    Rng r1(5), r2(5);
    auto a = draw_gumbel(64, 1.0f, r1);
    auto b = draw_gumbel(64, 1.0f, r2);
    CHECK(a.g.data == b.g.data);
    CHECK(a.g.all_finite());
}

TEST_CASE("map_architecture and differentiable mask views") {
    Rng rng(6);
    auto spec = toy_spec(rng);
    std::vector<std::uint8_t> bits = {1, 0, 1, 1, 0, 1, 1, 0, 0, 1};
    auto av = map_architecture(bits, spec, archspec::Owner::generator);
    CHECK(av.bits == bits);
    CHECK_THROWS_AS(map_architecture({1, 0}, spec, archspec::Owner::generator),
                    ContractViolation);

    Tensor gt({spec.num_bits});
    for (int i = 0; i < spec.num_bits; ++i) gt.at(i) = static_cast<float>(i) * 0.1f;
    auto gates = ag::leaf(gt, true);
    auto m = mask_map_from_gates(spec, gates);
    REQUIRE(m.count("a") == 1);
    REQUIRE(m.count("b") == 1);
    CHECK(m["a"]->val.numel() == 4);
    CHECK(m["b"]->val.numel() == 6);
    CHECK(m["b"]->val.at(0) == doctest::Approx(0.4f));
    // Slices stay on the tape: gradients flow back to the gate vector.
    ag::backward(ag::sum(m["b"]));
    CHECK(gates->grad.at(5) == 1.0f);
    CHECK(gates->grad.at(0) == 0.0f);
}

TEST_CASE("hard decisions are noise-free, deterministic, and guarded") {
    Rng rng(7);
    auto spec = toy_spec(rng);
    auto agent = make_agent(spec, archspec::Owner::generator, 8, true);

    std::fill(agent.naive_logits->val.data.begin(), agent.naive_logits->val.data.end(), -10.0f);
    auto all_on = hard_decision(agent, zero_embedding(), spec, 1.0f);
    CHECK(all_on.active() == spec.num_bits);

    std::fill(agent.naive_logits->val.data.begin(), agent.naive_logits->val.data.end(), 10.0f);
    auto survivors = hard_decision(agent, zero_embedding(), spec, 1.0f);
    CHECK(survivors.active() == 2);  // one per prunable layer via the clamp

    auto again = hard_decision(agent, zero_embedding(), spec, 1.0f);
    CHECK(again.bits == survivors.bits);
}

TEST_CASE("agent checkpoints round trip") {
    Rng rng(9);
    auto spec = toy_spec(rng);
    auto dir = std::filesystem::temp_directory_path() / "mgc_test_agents";
    std::filesystem::create_directories(dir);

    auto agent = make_agent(spec, archspec::Owner::discriminator, 21);
    agent.last_embedding.at(3) = 0.5f;
    save_agent(agent, dir / "agent.mgct");
    auto loaded = load_agent(dir / "agent.mgct");
    CHECK(loaded.owner == archspec::Owner::discriminator);
    CHECK(loaded.seed == 21);
    CHECK(loaded.spec_checksum == spec_checksum(spec));
    CHECK(loaded.last_embedding.data == agent.last_embedding.data);

    auto peer = ag::constant(Tensor({1, 256}));
    auto [o1, h1] = agent_forward(agent, peer, true);
    auto [o2, h2] = agent_forward(loaded, peer, true);
    CHECK(o1->val.data == o2->val.data);
    CHECK(h1->val.data == h2->val.data);

    auto naive = make_agent(spec, archspec::Owner::generator, 22, true);
    naive.naive_logits->val.at(0) = 1.5f;
    save_agent(naive, dir / "naive.mgct");
    auto nl = load_agent(dir / "naive.mgct");
    CHECK(nl.naive);
    CHECK(nl.naive_logits->val.at(0) == 1.5f);
    std::filesystem::remove_all(dir);
}
