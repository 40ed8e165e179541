#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mgc/errors.hpp"
#include "mgc/evalreport.hpp"

using namespace mgc;
using namespace mgc::evalreport;

namespace {

FrechetStats gaussian1d(double mean, double var) {
    FrechetStats s;
    s.dim = 1;
    s.n = 2;
    s.mean = {mean};
    s.cov = {var};
    return s;
}

manifold::EmbeddingSet embedding_set(int n, int dim, std::uint64_t seed) {
    manifold::EmbeddingSet e;
    e.dim = dim;
    e.source = "test";
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        e.ids.push_back(i);
        for (int j = 0; j < dim; ++j) e.vectors.push_back(rng.normal());
    }
    return e;
}

// Independent matrix square root oracle: Denman-Beavers iteration.
std::vector<double> db_sqrtm(std::vector<double> m, int dim) {
    std::vector<double> y = m, z(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) z[static_cast<std::size_t>(i) * dim + i] = 1.0;
    auto inv = [dim](const std::vector<double>& a) {
        // Gauss-Jordan, fine at test sizes.
        std::vector<double> aug(static_cast<std::size_t>(dim) * 2 * dim, 0.0);
        for (int r = 0; r < dim; ++r) {
            for (int c = 0; c < dim; ++c)
                aug[static_cast<std::size_t>(r) * 2 * dim + c] =
                    a[static_cast<std::size_t>(r) * dim + c];
            aug[static_cast<std::size_t>(r) * 2 * dim + dim + r] = 1.0;
        }
        for (int col = 0; col < dim; ++col) {
            int piv = col;
            for (int r = col + 1; r < dim; ++r)
                if (std::fabs(aug[static_cast<std::size_t>(r) * 2 * dim + col]) >
                    std::fabs(aug[static_cast<std::size_t>(piv) * 2 * dim + col]))
                    piv = r;
            for (int c = 0; c < 2 * dim; ++c)
                std::swap(aug[static_cast<std::size_t>(col) * 2 * dim + c],
                          aug[static_cast<std::size_t>(piv) * 2 * dim + c]);
            const double p = aug[static_cast<std::size_t>(col) * 2 * dim + col];
            for (int c = 0; c < 2 * dim; ++c) aug[static_cast<std::size_t>(col) * 2 * dim + c] /= p;
            for (int r = 0; r < dim; ++r) {
                if (r == col) continue;
                const double f = aug[static_cast<std::size_t>(r) * 2 * dim + col];
                for (int c = 0; c < 2 * dim; ++c)
                    aug[static_cast<std::size_t>(r) * 2 * dim + c] -=
                        f * aug[static_cast<std::size_t>(col) * 2 * dim + c];
            }
        }
        std::vector<double> out(static_cast<std::size_t>(dim) * dim);
        for (int r = 0; r < dim; ++r)
            for (int c = 0; c < dim; ++c)
                out[static_cast<std::size_t>(r) * dim + c] =
                    aug[static_cast<std::size_t>(r) * 2 * dim + dim + c];
        return out;
    };
    auto matmul = [dim](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> out(static_cast<std::size_t>(dim) * dim, 0.0);
        for (int r = 0; r < dim; ++r)
            for (int k = 0; k < dim; ++k)
                for (int c = 0; c < dim; ++c)
                    out[static_cast<std::size_t>(r) * dim + c] +=
                        a[static_cast<std::size_t>(r) * dim + k] *
                        b[static_cast<std::size_t>(k) * dim + c];
        return out;
    };
    for (int it = 0; it < 60; ++it) {
        auto yi = inv(y), zi = inv(z);
        std::vector<double> yn(y.size()), zn(z.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            yn[i] = 0.5 * (y[i] + zi[i]);
            zn[i] = 0.5 * (z[i] + yi[i]);
        }
        y = std::move(yn);
        z = std::move(zn);
    }
    (void)matmul;
    return y;
}

std::vector<double> random_spd(int dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> a(static_cast<std::size_t>(dim) * dim);
    for (auto& x : a) x = rng.normal();
    std::vector<double> spd(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) {
            for (int k = 0; k < dim; ++k)
                spd[static_cast<std::size_t>(r) * dim + c] +=
                    a[static_cast<std::size_t>(r) * dim + k] *
                    a[static_cast<std::size_t>(c) * dim + k];
            if (r == c) spd[static_cast<std::size_t>(r) * dim + c] += 0.5;
        }
    return spd;
}

}  // namespace

TEST_CASE("frechet distance: 1-D closed form") {
    // Two unit-variance Gaussians one mean apart: d = 1^2 + 1 + 1 - 2 = 1.
    CHECK(frechet_distance(gaussian1d(0.0, 1.0), gaussian1d(1.0, 1.0)) ==
          doctest::Approx(1.0).epsilon(1e-12));
    // Same mean, variances 1 and 4: d = 1 + 4 - 2*2 = 1.
    CHECK(frechet_distance(gaussian1d(0.5, 1.0), gaussian1d(0.5, 4.0)) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(frechet_distance(gaussian1d(2.0, 3.0), gaussian1d(2.0, 3.0)) ==
          doctest::Approx(0.0));
}

TEST_CASE("frechet distance: symmetry and identity on fitted clouds") {
    auto ea = embedding_set(40, 6, 1);
    auto eb = embedding_set(40, 6, 2);
    auto sa = feature_stats(ea), sb = feature_stats(eb);
    const double ab = frechet_distance(sa, sb);
    CHECK(ab > 0.0);
    CHECK(ab == doctest::Approx(frechet_distance(sb, sa)).epsilon(1e-9));
    CHECK(frechet_distance(sa, sa) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("frechet distance: invariant under a common rotation") {
    const int d = 4;
    auto ea = embedding_set(60, d, 3);
    auto eb = embedding_set(60, d, 4);
    const double before = frechet_distance(feature_stats(ea), feature_stats(eb));

    // Orthogonal matrix from Gram-Schmidt on random vectors.
    Rng rng(5);
    std::vector<std::vector<double>> q;
    while (static_cast<int>(q.size()) < d) {
        std::vector<double> v(d);
        for (auto& x : v) x = rng.normal();
        for (const auto& u : q) {
            double dot = 0.0;
            for (int i = 0; i < d; ++i) dot += v[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(i)];
            for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i)] -= dot * u[static_cast<std::size_t>(i)];
        }
        double n2 = 0.0;
        for (double x : v) n2 += x * x;
        if (n2 < 1e-8) continue;
        for (auto& x : v) x /= std::sqrt(n2);
        q.push_back(std::move(v));
    }
    auto rotate = [&](manifold::EmbeddingSet e) {
        for (int i = 0; i < e.size(); ++i) {
            std::vector<double> out(d, 0.0);
            auto row = e.row(i);
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c)
                    out[static_cast<std::size_t>(r)] += q[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] * row[c];
            for (int c = 0; c < d; ++c) e.vectors[static_cast<std::size_t>(i) * d + c] = out[static_cast<std::size_t>(c)];
        }
        return e;
    };
    const double after = frechet_distance(feature_stats(rotate(ea)), feature_stats(rotate(eb)));
    CHECK(after == doctest::Approx(before).epsilon(1e-8));
}

TEST_CASE("sym_sqrtm matches a Denman-Beavers oracle") {
    for (int dim : {2, 5}) {
        auto spd = random_spd(dim, 7 + static_cast<std::uint64_t>(dim));
        auto ours = sym_sqrtm(spd, dim);
        auto oracle = db_sqrtm(spd, dim);
        for (std::size_t i = 0; i < ours.size(); ++i)
            CHECK(ours[i] == doctest::Approx(oracle[i]).epsilon(1e-8));
    }
}

TEST_CASE("feature_stats: hand-computed moments and the n >= 2 guard") {
    manifold::EmbeddingSet e;
    e.dim = 2;
    e.ids = {0, 1, 2};
    e.vectors = {1.0, 2.0, 3.0, 4.0, 5.0, 9.0};
    auto s = feature_stats(e);
    CHECK(s.mean[0] == doctest::Approx(3.0));
    CHECK(s.mean[1] == doctest::Approx(5.0));
    // Unbiased: var_x = (4+0+4)/2 = 4, var_y = (9+1+16)/2 = 13, cov = (6+0+8)/2 = 7.
    CHECK(s.cov[0] == doctest::Approx(4.0));
    CHECK(s.cov[3] == doctest::Approx(13.0));
    CHECK(s.cov[1] == doctest::Approx(7.0));
    CHECK(s.cov[1] == s.cov[2]);

    e.ids = {0};
    e.vectors = {1.0, 2.0};
    CHECK_THROWS_AS(feature_stats(e), ContractViolation);
}

TEST_CASE("eval_generator is finite and deterministic") {
    auto ds = datagen::generate_dataset({.n_train = 8, .n_val = 2, .n_test = 2, .image_size = 16},
                                        21);
    Rng rng(9);
    auto gen = models::build_generator(models::Style::unet, 8, 2, 0.5f, 16, rng);
    auto enc = models::build_encoder(16, 16, rng);
    auto a = eval_generator(gen, ds.train, enc);
    auto b = eval_generator(gen, ds.train, enc);
    CHECK(std::isfinite(a.frechet));
    CHECK(a.frechet >= 0.0);
    CHECK(a.l1 >= 0.0f);
    CHECK(a.frechet == b.frechet);
    CHECK(a.l1 == b.l1);
    CHECK(a.n == 8);
    CHECK(a.to_json()["frechet"].get<double>() == a.frechet);
}

TEST_CASE("report artifact writers produce the expected files") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "mgc_evalreport_test";
    fs::create_directories(dir);

    std::vector<objectives::LossBundle> hist(5);
    for (int i = 0; i < 5; ++i) {
        hist[static_cast<std::size_t>(i)].step = i;
        hist[static_cast<std::size_t>(i)].loss_g = 1.0f / (1 + i);
        hist[static_cast<std::size_t>(i)].loss_d = 0.5f;
        hist[static_cast<std::size_t>(i)].resource = 0.1f * static_cast<float>(i);
    }
    write_loss_curves_svg(hist, dir / "curves.svg");
    auto svg = io::read_text(dir / "curves.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(std::count(svg.begin(), svg.end(), '\n') > 3);
    CHECK_THROWS_AS(write_loss_curves_svg({}, dir / "none.svg"), DataError);

    auto ds = datagen::generate_dataset({.n_train = 6, .n_val = 2, .n_test = 2, .image_size = 16},
                                        22);
    auto idx = manifold::build_index(manifold::oracle_embeddings(ds.train), 2);
    write_neighborhood_grid_png(ds.train, idx, {0, 1, 2}, dir / "neigh.png");
    auto png = io::read_file(dir / "neigh.png");
    REQUIRE(png.size() > 8);
    CHECK(png[0] == 0x89);
    CHECK(png[1] == 'P');

    Rng rng(10);
    auto gen = models::build_generator(models::Style::unet, 8, 2, 0.5f, 16, rng);
    write_prediction_grid_png(gen, ds.train, {0, 1}, dir / "pred.png");
    CHECK(fs::exists(dir / "pred.png"));

    write_ablation_table({{"full", 1.5, 0.2f, 0.4}, {"no_kd", 2.0, 0.3f, 0.4}},
                         dir / "ablation.md", dir / "ablation.csv");
    auto md = io::read_text(dir / "ablation.md");
    CHECK(md.find("| variant |") != std::string::npos);
    CHECK(md.find("no_kd") != std::string::npos);
    auto csv = io::read_text(dir / "ablation.csv");
    CHECK(csv.rfind("variant,frechet,l1,compression", 0) == 0);

    fs::remove_all(dir);
}
