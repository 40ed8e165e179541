#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "mgc/errors.hpp"
#include "mgc/manifold.hpp"

using namespace mgc;
using namespace mgc::manifold;

namespace {

EmbeddingSet random_embeddings(int n, int d, std::uint64_t seed) {
    Rng rng(seed);
    EmbeddingSet e;
    e.dim = d;
    e.source = "encoder";
    for (int i = 0; i < n; ++i) {
        e.ids.push_back(i);
        for (int j = 0; j < d; ++j) e.vectors.push_back(rng.normal());
    }
    return e;
}

// Independent double-loop top-k used as the oracle for build_index.
std::vector<int> brute_topk(const EmbeddingSet& e, int center, int k, SimKind kind) {
    std::vector<std::pair<double, int>> scored;
    for (int j = 0; j < e.size(); ++j) {
        if (j == center) continue;
        scored.emplace_back(cosine_similarity(e.row(center), e.row(j), kind), e.ids[j]);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<int> out;
    for (int t = 0; t < k; ++t) out.push_back(scored[static_cast<std::size_t>(t)].second);
    return out;
}

}  // namespace

TEST_CASE("cosine similarity canonical values") {
    std::vector<double> a{1.0, 0.0}, b{0.0, 1.0}, c{1.0, 1.0};
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity(a, b) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_similarity(a, c) == doctest::Approx(0.7071067811865475).epsilon(1e-6));
    std::vector<double> neg{-1.0, 0.0};
    CHECK(cosine_similarity(a, neg) == doctest::Approx(-1.0));
    CHECK(cosine_similarity(a, neg, SimKind::absolute) == doctest::Approx(1.0));
    std::vector<double> zero{0.0, 0.0};
    CHECK_THROWS_AS(cosine_similarity(a, zero), ContractViolation);
    std::vector<double> wrong{1.0};
    CHECK_THROWS_AS(cosine_similarity(a, wrong), ContractViolation);
}

TEST_CASE("three-vector example picks the nearly parallel neighbor") {
    EmbeddingSet e;
    e.dim = 2;
    e.ids = {10, 20, 30};
    const double n = std::sqrt(0.99 * 0.99 + 0.1 * 0.1);
    e.vectors = {1.0, 0.0, 0.99 / n, 0.1 / n, 0.0, 1.0};
    auto idx = build_index(e, 1);
    CHECK(idx.of(10)[0].id == 20);
    CHECK(idx.of(30)[0].id == 20);
}

TEST_CASE("build_index equals the brute-force oracle, including the tie rule") {
    auto e = random_embeddings(200, 64, 5);
    for (int k : {1, 5, 199}) {
        auto idx = build_index(e, k);
        for (int i = 0; i < e.size(); ++i) {
            auto expect = brute_topk(e, i, k, SimKind::plain);
            const auto& got = idx.of(e.ids[i]);
            REQUIRE(static_cast<int>(got.size()) == k);
            for (int t = 0; t < k; ++t) CHECK(got[t].id == expect[t]);
            for (int t = 1; t < k; ++t) CHECK(got[t].sim <= got[t - 1].sim);
        }
    }
    CHECK_THROWS_AS(build_index(e, 200), ConfigError);
    CHECK_THROWS_AS(build_index(e, 0), ConfigError);

    // Exact duplicates force a similarity tie resolved toward the lower id.
    EmbeddingSet t;
    t.dim = 2;
    t.ids = {0, 1, 2};
    t.vectors = {1.0, 0.0, 1.0, 0.0, 2.0, 0.0};
    CHECK(build_index(t, 1).of(2)[0].id == 0);
}

TEST_CASE("index is invariant to positive rescaling of embeddings") {
    auto e = random_embeddings(40, 8, 6);
    auto scaled = e;
    Rng rng(7);
    for (int i = 0; i < e.size(); ++i) {
        const double s = rng.uniform(0.1, 10.0);
        for (int j = 0; j < e.dim; ++j)
            scaled.vectors[static_cast<std::size_t>(i) * e.dim + j] *= s;
    }
    auto a = build_index(e, 5), b = build_index(scaled, 5);
    for (int id : e.ids)
        for (int t = 0; t < 5; ++t) CHECK(a.of(id)[t].id == b.of(id)[t].id);
}

TEST_CASE("oracle-factor embeddings reproduce the factor-space neighbors exactly") {
    datagen::DatasetConfig cfg;
    cfg.n_train = 80;
    cfg.n_val = 0;
    cfg.n_test = 0;
    cfg.image_size = 4;
    auto ds = datagen::generate_dataset(cfg, 31).train;
    auto emb = oracle_embeddings(ds);
    CHECK(emb.dim == 11);
    auto idx = build_index(emb, 5);
    std::map<int, std::vector<int>> oracle;
    for (const auto& s : ds.samples) oracle[s.id] = datagen::oracle_neighbors(ds, s.id, 5);
    CHECK(neighborhood_overlap(idx, oracle) == doctest::Approx(1.0));
    // Not just set overlap: the ranking matches id-for-id.
    for (const auto& s : ds.samples)
        for (int t = 0; t < 5; ++t) CHECK(idx.of(s.id)[t].id == oracle[s.id][t]);
}

TEST_CASE("neighborhood overlap endpoints and validation") {
    auto e = random_embeddings(20, 4, 9);
    auto idx = build_index(e, 3);
    std::map<int, std::vector<int>> same, disjoint, short_k;
    for (int id : e.ids) {
        std::vector<int> list;
        for (const auto& n : idx.of(id)) list.push_back(n.id);
        same[id] = list;
        disjoint[id] = {id + 100, id + 200, id + 300};
        short_k[id] = {0};
    }
    CHECK(neighborhood_overlap(idx, same) == doctest::Approx(1.0));
    CHECK(neighborhood_overlap(idx, disjoint) == doctest::Approx(0.0));
    CHECK_THROWS_AS(neighborhood_overlap(idx, short_k), ContractViolation);
}

TEST_CASE("encoder embedding of predictions is deterministic and finite") {
    datagen::DatasetConfig cfg;
    cfg.n_train = 4;
    cfg.n_val = 0;
    cfg.n_test = 0;
    auto ds = datagen::generate_dataset(cfg, 32).train;
    Rng rng(1);
    auto gen = models::build_generator(models::Style::unet, 8, 3, 0.5f, 32, rng);
    auto enc = models::build_encoder(16, 32, rng);
    auto a = embed_predictions(gen, ds, enc);
    auto b = embed_predictions(gen, ds, enc);
    CHECK(a.size() == 4);
    CHECK(a.dim == 16);
    CHECK(a.vectors == b.vectors);
    auto t = embed_targets(ds, enc);
    CHECK(t.size() == 4);
    for (double v : t.vectors) CHECK(std::isfinite(v));
}

TEST_CASE("index file round trip") {
    auto e = random_embeddings(12, 6, 11);
    auto idx = build_index(e, 4);
    idx.encoder_checksum = 0xabcdef12345678ULL;
    auto path = std::filesystem::temp_directory_path() / "mgc_test_index.bin";
    save_index(idx, path);
    auto r = load_index(path);
    CHECK(r.k == 4);
    CHECK(r.encoder_checksum == idx.encoder_checksum);
    CHECK(r.source == "encoder");
    CHECK(r.ids == idx.ids);
    for (int id : idx.ids)
        for (int t = 0; t < 4; ++t) {
            CHECK(r.of(id)[t].id == idx.of(id)[t].id);
            CHECK(r.of(id)[t].sim == idx.of(id)[t].sim);
        }
    std::filesystem::remove(path);
}
