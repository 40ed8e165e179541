#include <doctest.h>

#include <cmath>
#include <map>

#include "mgc/archspec.hpp"
#include "mgc/errors.hpp"

using namespace mgc;
using namespace mgc::archspec;
using models::BlockCfg;

namespace {

// Independent layer-walk MAC counter: replays the plan with plain channel
// counts and spatial arithmetic, no PrunableSpec involvement.
double walk_macs(const models::ConvNet& net, int input_hw) {
    std::map<std::string, std::pair<int, std::pair<int, int>>> out;  // ch, (h, w)
    out["@input"] = {net.in_ch, {input_hw, input_hw}};
    double total = 0.0;
    for (const auto& b : net.blocks) {
        int ci = 0;
        auto hw = out.at(b.cfg.inputs[0]).second;
        for (const auto& src : b.cfg.inputs) ci += out.at(src).first;
        if (b.cfg.upsample) {
            hw.first *= 2;
            hw.second *= 2;
        }
        const int ho = (hw.first + 2 * b.cfg.pad - b.cfg.k) / b.cfg.stride + 1;
        const int wo = (hw.second + 2 * b.cfg.pad - b.cfg.k) / b.cfg.stride + 1;
        total += static_cast<double>(ci) * b.cfg.out_ch * b.cfg.k * b.cfg.k * ho * wo;
        out[b.cfg.name] = {b.cfg.out_ch, {ho, wo}};
    }
    return total;
}

models::ConvNet single_conv_net(Rng& rng) {
    BlockCfg c;
    c.name = "only";
    c.inputs = {"@input"};
    c.out_ch = 8;
    c.stride = 2;
    c.prunable = true;
    return models::build_net({c}, 4, rng);
}

ArchitectureVector random_hard(const PrunableSpec& spec, Rng& rng, Owner owner) {
    std::vector<double> soft(static_cast<std::size_t>(spec.num_bits));
    for (auto& v : soft) v = rng.uniform();
    return harden(spec, soft, owner);
}

}  // namespace

TEST_CASE("macs_of(all-ones) matches an independent layer walk on all architectures") {
    Rng rng(1);
    auto gu = models::build_generator(models::Style::unet, 16, 3, 0.5f, 32, rng);
    auto gr = models::build_generator(models::Style::resnet, 16, 3, 0.5f, 32, rng);
    auto d = models::build_discriminator(16, 3, 32, rng);

    for (auto* net : {&gu.net, &gr.net}) {
        auto spec = build_spec(*net, 32);
        std::vector<double> ones(static_cast<std::size_t>(spec.num_bits), 1.0);
        CHECK(macs_of(spec, ones) == walk_macs(*net, 32));
        CHECK(spec.t_total == macs_of(spec, ones) - spec.fixed_macs);
        CHECK(static_cast<int>(spec.units.size()) == spec.num_bits);
    }
    auto sd = build_spec(d, 32);
    std::vector<double> ones(static_cast<std::size_t>(sd.num_bits), 1.0);
    CHECK(macs_of(sd, ones) == walk_macs(d.net, 32));
}

TEST_CASE("single 3x3 conv: 4 in, 8 out, 16x16 output = 73728 MACs") {
    Rng rng(2);
    auto net = single_conv_net(rng);
    auto spec = build_spec(net, 32);
    REQUIRE(spec.num_bits == 8);
    std::vector<double> ones(8, 1.0);
    CHECK(macs_of(spec, ones) == 73728.0);
    CHECK(spec.fixed_macs == 0.0);

    std::vector<double> zeros(8, 0.0);
    CHECK(macs_of(spec, zeros) == 0.0);

    std::vector<double> wrong(7, 1.0);
    CHECK_THROWS_AS(macs_of(spec, wrong), ContractViolation);
}

TEST_CASE("all-zeros mask leaves only fixed_macs") {
    Rng rng(3);
    auto g = models::build_generator(models::Style::unet, 16, 3, 0.5f, 32, rng);
    auto spec = build_spec(g);
    std::vector<double> zeros(static_cast<std::size_t>(spec.num_bits), 0.0);
    CHECK(macs_of(spec, zeros) == spec.fixed_macs);
    CHECK(spec.fixed_macs > 0.0);  // the unet stem conv is not prunable
}

TEST_CASE("macs_of is multilinear: gradients equal finite-difference slopes exactly") {
    Rng rng(4);
    auto g = models::build_generator(models::Style::resnet, 8, 2, 0.5f, 32, rng);
    auto spec = build_spec(g);
    std::vector<double> v(static_cast<std::size_t>(spec.num_bits));
    for (auto& x : v) x = rng.uniform();

    Tensor vt({spec.num_bits});
    for (int i = 0; i < spec.num_bits; ++i) vt.at(i) = static_cast<float>(v[static_cast<std::size_t>(i)]);
    auto var = ag::leaf(vt, true);
    auto t = macs_of_var(spec, var);
    ag::backward(t);
    CHECK(t->val.at(0) ==
          doctest::Approx(macs_of(spec, v) - spec.fixed_macs).epsilon(1e-5));

    for (int i = 0; i < spec.num_bits; i += 7) {
        auto hi = v, lo = v;
        hi[static_cast<std::size_t>(i)] = 1.0;
        lo[static_cast<std::size_t>(i)] = 0.0;
        const double slope = macs_of(spec, hi) - macs_of(spec, lo);
        CHECK(var->grad.at(i) == doctest::Approx(slope).epsilon(1e-4));
    }
}

TEST_CASE("monotonicity: flipping a bit on never decreases MACs") {
    Rng rng(5);
    auto d = models::build_discriminator(8, 3, 32, rng);
    auto spec = build_spec(d, 32);
    std::vector<double> v(static_cast<std::size_t>(spec.num_bits));
    for (auto& x : v) x = rng.uniform() < 0.5 ? 0.0 : 1.0;
    const double base = macs_of(spec, v);
    for (int i = 0; i < spec.num_bits; ++i) {
        if (v[static_cast<std::size_t>(i)] == 1.0) continue;
        auto w = v;
        w[static_cast<std::size_t>(i)] = 1.0;
        CHECK(macs_of(spec, w) >= base);
    }
}

TEST_CASE("harden rounds with ties to one and enforces at-least-one per layer") {
    Rng rng(6);
    BlockCfg c;
    c.name = "a";
    c.inputs = {"@input"};
    c.out_ch = 3;
    c.prunable = true;
    BlockCfg c2 = c;
    c2.name = "b";
    c2.inputs = {"a"};
    c2.out_ch = 2;
    auto net = models::build_net({c, c2}, 3, rng);
    auto spec = build_spec(net, 32);
    REQUIRE(spec.num_bits == 5);

    auto v = harden(spec, std::vector<double>{0.2, 0.7, 0.5, 0.1, 0.2}, Owner::generator);
    CHECK(v.bits == std::vector<std::uint8_t>{0, 1, 1, 0, 1});  // layer b clamped to its best entry
    CHECK(v.active() == 3);

    auto binary = harden(spec, std::vector<double>{1, 0, 1, 1, 0}, Owner::generator);
    CHECK(binary.bits == std::vector<std::uint8_t>{1, 0, 1, 1, 0});
}

TEST_CASE("masked and extracted networks agree on probe inputs") {
    Rng rng(7);
    Rng mask_rng(8);
    auto gu = models::build_generator(models::Style::unet, 8, 3, 0.5f, 32, rng);
    auto gr = models::build_generator(models::Style::resnet, 8, 2, 0.5f, 32, rng);
    auto d = models::build_discriminator(8, 3, 32, rng);

    Tensor xt({2, 3, 32, 32});
    for (auto& v : xt.data) v = static_cast<float>(mask_rng.uniform(-1.0, 1.0));
    auto x = ag::constant(xt);

    for (auto* g : {&gu, &gr}) {
        auto spec = build_spec(*g);
        for (int trial = 0; trial < 4; ++trial) {
            auto v = random_hard(spec, mask_rng, Owner::generator);
            auto masks = mask_map(spec, v);
            auto ref = models::generator_forward(*g, x, &masks, false, nullptr, false);
            auto sub = extract_subnetwork(*g, v);
            auto got = models::generator_forward(sub, x, nullptr, false, nullptr, false);
            REQUIRE(got->val.same_shape(ref->val));
            float maxdiff = 0.0f;
            for (std::int64_t i = 0; i < ref->val.numel(); ++i)
                maxdiff = std::max(maxdiff, std::fabs(got->val.at(i) - ref->val.at(i)));
            CHECK(maxdiff < 1e-5f);

            // MACs of the extracted net equal macs_of under the mask.
            auto sub_spec = build_spec(sub);
            CHECK(macs_all_on(sub_spec) ==
                  doctest::Approx(macs_of(spec, v.as_doubles())).epsilon(1e-9));
        }
    }

    auto sd = build_spec(d, 32);
    auto vd = random_hard(sd, mask_rng, Owner::discriminator);
    auto dm = mask_map(sd, vd);
    auto ref = models::discriminator_forward(d, x, x, &dm);
    auto sub = extract_subnetwork(d, 32, vd);
    auto got = models::discriminator_forward(sub, x, x, nullptr);
    for (std::int64_t i = 0; i < ref->val.numel(); ++i)
        CHECK(std::fabs(got->val.at(i) - ref->val.at(i)) < 1e-5f);
}

TEST_CASE("extraction with all-ones is the identity and extraction is idempotent") {
    Rng rng(9);
    auto g = models::build_generator(models::Style::unet, 8, 3, 0.5f, 32, rng);
    auto spec = build_spec(g);

    ArchitectureVector ones;
    ones.owner = Owner::generator;
    ones.bits.assign(static_cast<std::size_t>(spec.num_bits), 1);
    auto same = extract_subnetwork(g, ones);
    CHECK(models::weights_checksum(same.net) == models::weights_checksum(g.net));

    Rng mask_rng(10);
    auto v = random_hard(spec, mask_rng, Owner::generator);
    auto sub = extract_subnetwork(g, v);
    auto sub_spec = build_spec(sub);
    ArchitectureVector sub_ones;
    sub_ones.owner = Owner::generator;
    sub_ones.bits.assign(static_cast<std::size_t>(sub_spec.num_bits), 1);
    auto twice = extract_subnetwork(sub, sub_ones);
    CHECK(models::weights_checksum(twice.net) == models::weights_checksum(sub.net));
}

TEST_CASE("spec dump carries the layer table") {
    Rng rng(11);
    auto g = models::build_generator(models::Style::unet, 8, 3, 0.5f, 32, rng);
    auto spec = build_spec(g);
    auto j = spec_dump(spec);
    CHECK(j["num_bits"] == spec.num_bits);
    CHECK(j["layers"].size() == spec.layers.size());
    double sum = 0.0;
    for (const auto& l : j["layers"]) sum += l["macs_all_on"].get<double>();
    CHECK(sum == doctest::Approx(spec.t_total + spec.fixed_macs).epsilon(1e-9));
}
