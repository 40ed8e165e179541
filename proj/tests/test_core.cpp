#include <doctest.h>

#include <cmath>
#include <functional>

#include "mgc/autograd.hpp"
#include "mgc/kernels.hpp"
#include "mgc/nn.hpp"
#include "mgc/rng.hpp"

using namespace mgc;
using namespace mgc::ag;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float scale = 1.0f) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng.normal()) * scale;
    return t;
}

// Central finite differences on a scalar-valued graph builder.
// Checks d(loss)/d(inputs[i]) against autograd for every input element.
void gradcheck(const std::vector<Tensor>& inputs,
               const std::function<Var(const std::vector<Var>&)>& build, float h = 1e-2f,
               float tol = 2e-2f) {
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(leaf(t, true));
    Var loss = build(vars);
    REQUIRE(loss->val.numel() == 1);
    backward(loss);

    for (std::size_t vi = 0; vi < vars.size(); ++vi) {
        for (std::int64_t i = 0; i < inputs[vi].numel(); ++i) {
            auto eval = [&](float delta) {
                std::vector<Var> vs;
                for (std::size_t k = 0; k < inputs.size(); ++k) {
                    Tensor t = inputs[k];
                    if (k == vi) t.at(i) += delta;
                    vs.push_back(leaf(t, false));
                }
                return build(vs)->val.at(0);
            };
            const float fd = (eval(h) - eval(-h)) / (2.0f * h);
            const float an = vars[vi]->grad.data.empty() ? 0.0f : vars[vi]->grad.at(i);
            const float denom = std::max({1.0f, std::fabs(fd), std::fabs(an)});
            CHECK(std::fabs(fd - an) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("elementwise and reduction gradients") {
    Rng rng(42);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 3}, rng);
    for (auto& v : b.data) v += (v >= 0 ? 2.0f : -2.0f);  // keep away from zero for div

    gradcheck({a, b}, [](const std::vector<Var>& v) { return sum(mul(v[0], v[1])); });
    gradcheck({a, b}, [](const std::vector<Var>& v) { return mean(div(v[0], v[1])); });
    gradcheck({a, b}, [](const std::vector<Var>& v) { return dot(v[0], v[1]); });
    gradcheck({a}, [](const std::vector<Var>& v) { return sum(vtanh(v[0])); });
    gradcheck({a}, [](const std::vector<Var>& v) { return sum(vsigmoid(v[0])); });
    gradcheck({a}, [](const std::vector<Var>& v) { return sum(square(v[0])); });
    gradcheck({a}, [](const std::vector<Var>& v) { return sum(leaky_relu(v[0], 0.2f)); });
    gradcheck({a}, [](const std::vector<Var>& v) { return mean(vexp(axpb(v[0], 0.5f, 0.1f))); });
}

TEST_CASE("structural op gradients") {
    Rng rng(7);
    Tensor a = random_tensor({6}, rng);
    Tensor b = random_tensor({4}, rng);
    gradcheck({a, b}, [](const std::vector<Var>& v) {
        return sum(square(concat1d({slice1d(v[0], 1, 3), v[1]})));
    });
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    gradcheck({x}, [](const std::vector<Var>& v) { return sum(square(upsample2x(v[0]))); });
    Tensor m({2}, {0.7f, -0.3f});
    gradcheck({x, m}, [](const std::vector<Var>& v) {
        return sum(square(scale_channels(v[0], v[1])));
    });
    Tensor y = random_tensor({1, 3, 4, 4}, rng);
    gradcheck({x, y}, [](const std::vector<Var>& v) {
        return sum(square(concat_ch({v[0], v[1]})));
    });
    gradcheck({x}, [](const std::vector<Var>& v) { return sum(square(gram(v[0]))); });
}

TEST_CASE("conv2d gradient") {
    Rng rng(3);
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng, 0.5f);
    Tensor b = random_tensor({4}, rng, 0.1f);
    gradcheck({x, w, b}, [](const std::vector<Var>& v) {
        return mean(square(conv2d(v[0], v[1], v[2], 2, 1)));
    });
}

TEST_CASE("linear and weight norm gradients") {
    Rng rng(11);
    Tensor x = random_tensor({2, 5}, rng);
    Tensor w = random_tensor({3, 5}, rng);
    Tensor b = random_tensor({3}, rng);
    gradcheck({x, w, b}, [](const std::vector<Var>& v) {
        return mean(square(linear(v[0], v[1], v[2])));
    });
    Tensor g({3}, {1.2f, 0.8f, 1.5f});
    gradcheck({x, w, g, b}, [](const std::vector<Var>& v) {
        return mean(square(linear(v[0], row_weight_norm(v[1], v[2]), v[3])));
    });
}

TEST_CASE("normalization gradients") {
    Rng rng(13);
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    Tensor gamma = random_tensor({3}, rng, 0.3f);
    for (auto& v : gamma.data) v += 1.0f;
    Tensor beta = random_tensor({3}, rng, 0.3f);
    for (bool inst : {false, true}) {
        gradcheck({x, gamma, beta}, [inst](const std::vector<Var>& v) {
            return mean(square(
                norm2d_train(v[0], v[1], v[2], 1e-5f, inst, nullptr, nullptr, 0.1f)));
        });
    }
    Tensor rm({3}, {0.1f, -0.2f, 0.05f});
    Tensor rv({3}, {0.9f, 1.2f, 1.1f});
    gradcheck({x, gamma, beta}, [&](const std::vector<Var>& v) {
        return mean(square(norm2d_eval(v[0], v[1], v[2], rm, rv, 1e-5f)));
    });
}

TEST_CASE("ste_round forward and straight-through backward") {
    Var x = leaf(Tensor({4}, {0.2f, 0.5f, 0.74f, -0.3f}), true);
    Var y = ste_round(x);
    CHECK(y->val.at(0) == 0.0f);
    CHECK(y->val.at(1) == 1.0f);  // half rounds up
    CHECK(y->val.at(2) == 1.0f);
    CHECK(y->val.at(3) == 0.0f);
    backward(sum(mul(y, constant(Tensor({4}, {1.0f, 2.0f, 3.0f, 4.0f})))));
    CHECK(x->grad.at(0) == 1.0f);
    CHECK(x->grad.at(1) == 2.0f);
    CHECK(x->grad.at(2) == 3.0f);
    CHECK(x->grad.at(3) == 4.0f);
}

TEST_CASE("detach blocks gradient flow") {
    Var x = leaf(Tensor({2}, {1.0f, 2.0f}), true);
    Var loss = sum(mul(detach(x), x));
    backward(loss);
    // d/dx of const*x, not 2x
    CHECK(x->grad.at(0) == doctest::Approx(1.0f));
    CHECK(x->grad.at(1) == doctest::Approx(2.0f));
}

TEST_CASE("gru cell gradient flows to all parameters") {
    Rng rng(5);
    auto cell = nn::GruCell::init(rng, 4, 6);
    Var x = leaf(random_tensor({1, 4}, rng), false);
    Var h = leaf(random_tensor({1, 6}, rng), false);
    Var out = cell.forward(x, h);
    backward(mean(square(out)));
    int with_grad = 0;
    for (const auto& p : cell.params())
        if (!p->grad.data.empty()) ++with_grad;
    CHECK(with_grad == static_cast<int>(cell.params().size()));
}

TEST_CASE("adam minimizes a quadratic") {
    Var w = leaf(Tensor({2}, {5.0f, -3.0f}), true);
    nn::Adam opt({w}, {.lr = 0.1f});
    for (int i = 0; i < 300; ++i) {
        opt.zero_grad();
        backward(sum(square(w)));
        opt.step();
    }
    CHECK(std::fabs(w->val.at(0)) < 1e-2f);
    CHECK(std::fabs(w->val.at(1)) < 1e-2f);
}

TEST_CASE("parallel conv kernels match serial reference bit-for-bit") {
    Rng rng(99);
    kernels::ConvShape s{2, 5, 9, 9, 7, 3, 2, 1};
    Tensor x = random_tensor({s.n, s.ci, s.h, s.w}, rng);
    Tensor w = random_tensor({s.co, s.ci, s.k, s.k}, rng);
    Tensor b = random_tensor({s.co}, rng);
    Tensor dy = random_tensor({s.n, s.co, s.hout(), s.wout()}, rng);

    Tensor y1({s.n, s.co, s.hout(), s.wout()}), y2 = y1;
    kernels::conv2d_forward_serial(x.data.data(), w.data.data(), b.data.data(), y1.data.data(), s);
    kernels::set_parallel(true);
    kernels::conv2d_forward(x.data.data(), w.data.data(), b.data.data(), y2.data.data(), s);
    CHECK(y1.data == y2.data);

    Tensor dx1(x.shape), dx2(x.shape);
    kernels::conv2d_backward_input_serial(dy.data.data(), w.data.data(), dx1.data.data(), s);
    kernels::conv2d_backward_input(dy.data.data(), w.data.data(), dx2.data.data(), s);
    CHECK(dx1.data == dx2.data);

    Tensor dw1(w.shape), dw2(w.shape), db1(b.shape), db2(b.shape);
    kernels::conv2d_backward_weights_serial(dy.data.data(), x.data.data(), dw1.data.data(),
                                            db1.data.data(), s);
    kernels::conv2d_backward_weights(dy.data.data(), x.data.data(), dw2.data.data(),
                                     db2.data.data(), s);
    CHECK(dw1.data == dw2.data);
    CHECK(db1.data == db2.data);
}

TEST_CASE("rng determinism and gumbel finiteness") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng g(7);
    for (int i = 0; i < 1000; ++i) CHECK(std::isfinite(g.gumbel()));
}
