#include <doctest.h>

#include <cmath>

#include "mgc/errors.hpp"
#include "mgc/objectives.hpp"

using namespace mgc;
using namespace mgc::objectives;
using ag::Var;

namespace {

Var patch_map(float value) { return ag::constant(Tensor::full({1, 1, 4, 4}, value)); }

archspec::PrunableSpec two_layer_spec(Rng& rng) {
    models::BlockCfg a;
    a.name = "a";
    a.inputs = {"@input"};
    a.out_ch = 8;
    a.stride = 2;
    a.prunable = true;
    models::BlockCfg head;
    head.name = "head";
    head.inputs = {"a"};
    head.out_ch = 3;
    auto net = models::build_net({a, head}, 3, rng);
    return archspec::build_spec(net, 32);
}

}  // namespace

TEST_CASE("gan loss canonical values") {
    auto d0 = gan_losses({patch_map(1.0f)}, patch_map(-1.0f), GanFlavor::hinge);
    CHECK(d0.d_term->val.at(0) == doctest::Approx(0.0f));
    auto g0 = gan_losses({patch_map(1.0f)}, patch_map(0.0f), GanFlavor::hinge);
    CHECK(g0.g_term->val.at(0) == doctest::Approx(0.0f));
    auto h1 = gan_losses({patch_map(0.0f)}, patch_map(0.5f), GanFlavor::hinge);
    CHECK(h1.d_term->val.at(0) == doctest::Approx(2.5f));  // max(0,1-0) + max(0,1+0.5)
    CHECK(h1.g_term->val.at(0) == doctest::Approx(-0.5f));

    auto ls = gan_losses({patch_map(1.0f)}, patch_map(0.0f), GanFlavor::lsgan);
    CHECK(ls.d_term->val.at(0) == doctest::Approx(0.0f));
    CHECK(ls.g_term->val.at(0) == doctest::Approx(1.0f));

    CHECK_THROWS_AS(gan_losses({}, patch_map(0.0f), GanFlavor::hinge), ContractViolation);
}

TEST_CASE("multiple real maps are averaged") {
    Rng rng(1);
    auto mk = [&]() {
        Tensor t({1, 1, 4, 4});
        for (auto& v : t.data) v = static_cast<float>(rng.normal());
        return ag::constant(t);
    };
    auto r = mk();
    auto f = mk();
    auto one = gan_losses({r}, f, GanFlavor::hinge);
    auto three = gan_losses({r, r, r}, f, GanFlavor::hinge);
    CHECK(three.d_term->val.at(0) == doctest::Approx(one.d_term->val.at(0)).epsilon(1e-6));

    auto r2 = mk();
    auto mixed = gan_losses({r, r2}, f, GanFlavor::lsgan);
    auto a = gan_losses({r}, f, GanFlavor::lsgan);
    auto b = gan_losses({r2}, f, GanFlavor::lsgan);
    CHECK(mixed.d_term->val.at(0) ==
          doctest::Approx(0.5f * (a.d_term->val.at(0) + b.d_term->val.at(0))).epsilon(1e-6));

    // Hinge with one real map is permutation-exchangeable over patches.
    Tensor perm = r->val;
    std::swap(perm.at(0), perm.at(7));
    std::swap(perm.at(3), perm.at(12));
    auto permuted = gan_losses({ag::constant(perm)}, f, GanFlavor::hinge);
    CHECK(permuted.d_term->val.at(0) == doctest::Approx(one.d_term->val.at(0)).epsilon(1e-6));
}

TEST_CASE("resource loss matches the closed form of the budget clamp") {
    Rng rng(2);
    auto spec = two_layer_spec(rng);
    // T(v) is linear in the 8 gate bits here: each contributes t_total / 8.
    auto make_v = [&](double frac) {
        std::vector<double> v(8, frac);
        return v;
    };

    CHECK(resource_loss_value(spec, make_v(0.5), 0.5) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(resource_loss_value(spec, make_v(0.25), 0.5) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(resource_loss_value(spec, make_v(1.0), 0.5) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-6));
    CHECK_THROWS_AS(resource_loss_value(spec, make_v(1.0), 0.0), ConfigError);
    CHECK_THROWS_AS(resource_loss_value(spec, make_v(1.0), 1.5), ConfigError);

    // Graph version agrees and has exactly-zero gradient below budget.
    Tensor vt({8});
    for (auto& x : vt.data) x = 0.25f;
    auto v = ag::leaf(vt, true);
    auto r = resource_loss(spec, v, 0.5);
    CHECK(r->val.at(0) == doctest::Approx(0.0f));
    ag::backward(r);
    for (float g : v->grad.data) CHECK(g == 0.0f);

    Tensor vt2 = Tensor::full({8}, 1.0f);
    auto v2 = ag::leaf(vt2, true);
    auto r2 = resource_loss(spec, v2, 0.5);
    CHECK(r2->val.at(0) == doctest::Approx(std::log(2.0)).epsilon(1e-5));
    ag::backward(r2);
    float gsum = 0.0f;
    for (float g : v2->grad.data) gsum += std::fabs(g);
    CHECK(gsum > 0.0f);
}

TEST_CASE("resource loss is monotone above budget") {
    Rng rng(3);
    auto spec = two_layer_spec(rng);
    double prev = -1.0;
    for (double frac = 0.55; frac <= 1.0; frac += 0.05) {
        std::vector<double> v(8, frac);
        const double r = resource_loss_value(spec, v, 0.5);
        CHECK(r >= prev);
        prev = r;
    }
}

TEST_CASE("sparsity loss canonical values and constant gradient") {
    auto val = [](std::vector<float> xs) {
        Tensor t({static_cast<int>(xs.size())});
        for (std::size_t i = 0; i < xs.size(); ++i) t.at(static_cast<std::int64_t>(i)) = xs[i];
        return sparsity_loss(ag::constant(t))->val.at(0);
    };
    CHECK(val({1, 1, 1, 1, 1, 1, 1, 1}) == 1.0f);
    CHECK(val({0, 0, 0, 0, 0, 0, 0, 0}) == 0.0f);
    CHECK(val({1, 1, 1, 1, 0, 0, 0, 0}) == 0.5f);

    Tensor t({8});
    for (int i = 0; i < 8; ++i) t.at(i) = 0.1f * static_cast<float>(i);
    auto v = ag::leaf(t, true);
    ag::backward(sparsity_loss(v));
    for (float g : v->grad.data) CHECK(g == doctest::Approx(1.0f / 8.0f).epsilon(1e-6));

    CHECK_THROWS_AS(sparsity_loss(ag::constant(Tensor({0}))), ContractViolation);
}

TEST_CASE("the discriminator agent objective penalizes density, pinning the Eq. 2 sign") {
    // The D-agent minimizes d_term + lambda2 * sparsity; a denser v_D must
    // produce a strictly larger objective when the GAN term is held fixed.
    auto d = gan_losses({patch_map(1.0f)}, patch_map(-1.0f), GanFlavor::hinge).d_term;
    auto dense = ag::add(d, ag::axpb(sparsity_loss(ag::constant(Tensor::full({8}, 1.0f))), 0.1f, 0.0f));
    auto sparse = ag::add(d, ag::axpb(sparsity_loss(ag::constant(Tensor::full({8}, 0.25f))), 0.1f, 0.0f));
    CHECK(dense->val.at(0) > sparse->val.at(0));
}

TEST_CASE("distillation loss endpoints") {
    Rng rng(4);
    Tensor ft({1, 2, 4, 4});
    for (auto& v : ft.data) v = static_cast<float>(rng.normal());
    auto f = ag::constant(ft);

    FeatureAdaptors identity;
    Tensor w({2, 2, 1, 1});
    w.at(0) = 1.0f;
    w.at(3) = 1.0f;
    identity.w.push_back(ag::leaf(w, true));
    identity.b.push_back(ag::leaf(Tensor({2}), true));

    CHECK(distillation_losses({f}, {f}, identity, 50.0f, 10000.0f)->val.at(0) ==
          doctest::Approx(0.0f).epsilon(1e-4));
    CHECK(distillation_losses({f}, {f}, identity, 0.0f, 0.0f)->val.at(0) == 0.0f);

    Tensor other = ft;
    other.at(0) += 1.0f;
    CHECK(distillation_losses({ag::constant(other)}, {f}, identity, 50.0f, 0.0f)->val.at(0) ==
          doctest::Approx(50.0f).epsilon(1e-4));

    Tensor small({1, 2, 2, 2});
    CHECK_THROWS_AS(distillation_losses({ag::constant(small)}, {f}, identity, 1.0f, 1.0f),
                    ContractViolation);
}

TEST_CASE("distillation matches a hand-computed 1x2x2 gram case") {
    // Teacher features [1,2,3,4], student [0,1,1,2], C=1, H=W=2.
    // Content: sum of squared diffs = 1+1+4+4 = 10.
    // Grams (normalized by C*H*W = 4): teacher 30/4 = 7.5, student 6/4 = 1.5,
    // Frobenius norm of the difference = 6.
    Tensor tt({1, 1, 2, 2});
    tt.at(0) = 1;
    tt.at(1) = 2;
    tt.at(2) = 3;
    tt.at(3) = 4;
    Tensor st({1, 1, 2, 2});
    st.at(0) = 0;
    st.at(1) = 1;
    st.at(2) = 1;
    st.at(3) = 2;
    FeatureAdaptors identity;
    Tensor w({1, 1, 1, 1});
    w.at(0) = 1.0f;
    identity.w.push_back(ag::constant(w));
    identity.b.push_back(ag::constant(Tensor({1})));

    auto loss = distillation_losses({ag::constant(st)}, {ag::constant(tt)}, identity, 50.0f,
                                    10000.0f);
    CHECK(loss->val.at(0) == doctest::Approx(50.0f * 10.0f + 10000.0f * 6.0f).epsilon(1e-5));
}

TEST_CASE("history csv formatting") {
    LossBundle b;
    b.step = 3;
    b.loss_g = 1.5f;
    b.loss_d = -0.25f;
    b.resource = 0.125f;
    b.sparsity = 0.5f;
    b.t_vg = 1024.0;
    b.active_vd = 0.75f;
    CHECK(history_csv_header() == "step,loss_G,loss_D,resource,sparsity,T_vG,active_vD");
    CHECK(history_csv_row(b) == "3,1.5,-0.25,0.125,0.5,1024,0.75");
}
