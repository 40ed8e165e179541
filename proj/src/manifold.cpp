#include "mgc/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mgc/errors.hpp"
#include "mgc/io.hpp"

namespace mgc::manifold {

SimKind sim_from_string(const std::string& s) {
    if (s == "plain") return SimKind::plain;
    if (s == "absolute") return SimKind::absolute;
    throw ConfigError("unknown similarity kind: " + s);
}

std::span<const double> EmbeddingSet::row(int i) const {
    return {vectors.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
}

const std::vector<NeighborEntry>& NeighborhoodIndex::of(int center_id) const {
    auto it = neighbors.find(center_id);
    if (it == neighbors.end())
        throw DataError("index has no center " + std::to_string(center_id));
    return it->second;
}

namespace {

EmbeddingSet from_batches(const datagen::Dataset& ds, const models::EncoderNet& enc,
                          const std::function<Tensor(const datagen::PairedSample&)>& image_of,
                          const std::string& source) {
    EmbeddingSet out;
    out.dim = enc.embedding_dim;
    out.source = source;
    for (const auto& s : ds.samples) {
        Tensor img = image_of(s);
        auto emb = models::encoder_embed(enc, ag::constant(models::stack_images({&img})));
        if (!emb->val.all_finite())
            throw DataError("non-finite embedding for sample " + std::to_string(s.id));
        out.ids.push_back(s.id);
        for (std::int64_t j = 0; j < emb->val.numel(); ++j)
            out.vectors.push_back(static_cast<double>(emb->val.at(j)));
    }
    return out;
}

}  // namespace

EmbeddingSet embed_predictions(const models::GeneratorNet& gen, const datagen::Dataset& ds,
                               const models::EncoderNet& enc) {
    return from_batches(
        ds, enc,
        [&](const datagen::PairedSample& s) {
            auto x = ag::constant(models::to_gan_range(models::stack_images({&s.source})));
            auto y = models::generator_forward(gen, x, nullptr, false, nullptr, false);
            Tensor img = models::from_gan_range(y->val);
            Tensor single({3, img.dim(2), img.dim(3)});
            std::copy(img.data.begin(), img.data.end(), single.data.begin());
            return single;
        },
        "encoder");
}

EmbeddingSet embed_targets(const datagen::Dataset& ds, const models::EncoderNet& enc) {
    return from_batches(
        ds, enc, [](const datagen::PairedSample& s) { return s.target; }, "encoder");
}

EmbeddingSet oracle_embeddings(const datagen::Dataset& ds) {
    EmbeddingSet out;
    out.source = "oracle-factors";
    for (const auto& s : ds.samples) {
        auto e = datagen::factor_embedding(s.factors);
        out.dim = static_cast<int>(e.size());
        out.ids.push_back(s.id);
        out.vectors.insert(out.vectors.end(), e.begin(), e.end());
    }
    return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b, SimKind kind) {
    if (a.size() != b.size()) throw ContractViolation("cosine_similarity dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw ContractViolation("cosine_similarity on zero vector");
    const double s = dot / (std::sqrt(na) * std::sqrt(nb));
    return kind == SimKind::absolute ? std::fabs(s) : s;
}

NeighborhoodIndex build_index(const EmbeddingSet& emb, int k, SimKind kind) {
    const int n = emb.size();
    if (k >= n) throw ConfigError("index k must be smaller than the embedding count");
    if (k < 1) throw ConfigError("index k must be at least 1");
    NeighborhoodIndex idx;
    idx.k = k;
    idx.source = emb.source;
    idx.ids = emb.ids;
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> sims;  // (-sim, id) so sort gives ties to lower id
        sims.reserve(static_cast<std::size_t>(n - 1));
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            sims.emplace_back(-cosine_similarity(emb.row(i), emb.row(j), kind), emb.ids[j]);
        }
        std::sort(sims.begin(), sims.end());
        std::vector<NeighborEntry> list;
        list.reserve(static_cast<std::size_t>(k));
        for (int t = 0; t < k; ++t)
            list.push_back({sims[static_cast<std::size_t>(t)].second,
                            static_cast<float>(-sims[static_cast<std::size_t>(t)].first)});
        idx.neighbors[emb.ids[i]] = std::move(list);
    }
    return idx;
}

double neighborhood_overlap(const NeighborhoodIndex& idx,
                            const std::map<int, std::vector<int>>& oracle) {
    if (idx.neighbors.empty()) throw ContractViolation("overlap on empty index");
    double total = 0.0;
    for (const auto& [center, list] : idx.neighbors) {
        auto it = oracle.find(center);
        if (it == oracle.end())
            throw ContractViolation("oracle missing center " + std::to_string(center));
        if (static_cast<int>(it->second.size()) != idx.k)
            throw ContractViolation("oracle k mismatch at center " + std::to_string(center));
        int hits = 0;
        for (const auto& e : list)
            hits += std::count(it->second.begin(), it->second.end(), e.id) > 0;
        total += static_cast<double>(hits) / idx.k;
    }
    return total / static_cast<double>(idx.neighbors.size());
}

void save_index(const NeighborhoodIndex& idx, const std::filesystem::path& path) {
    io::json header = {{"k", idx.k},
                       {"n", idx.ids.size()},
                       {"include_center", idx.include_center},
                       {"source", idx.source},
                       {"encoder_checksum", idx.encoder_checksum}};
    const std::string hs = header.dump();
    std::vector<std::uint8_t> out = {'M', 'G', 'C', 'N'};
    const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((hlen >> (8 * i)) & 0xFF));
    out.insert(out.end(), hs.begin(), hs.end());
    auto put_i32 = [&](std::int32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((static_cast<std::uint32_t>(v) >> (8 * i)) & 0xFF));
    };
    for (int id : idx.ids) {
        put_i32(id);
        for (const auto& e : idx.of(id)) {
            put_i32(e.id);
            std::uint32_t bits;
            std::memcpy(&bits, &e.sim, 4);
            put_i32(static_cast<std::int32_t>(bits));
        }
    }
    io::write_file(path, out);
}

NeighborhoodIndex load_index(const std::filesystem::path& path) {
    auto bytes = io::read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "MGCN", 4) != 0)
        throw DataError("not an index file: " + path.string());
    std::uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i) hlen |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
    auto header = io::json::parse(std::string(bytes.begin() + 8, bytes.begin() + 8 + hlen));
    NeighborhoodIndex idx;
    idx.k = header["k"];
    idx.include_center = header["include_center"];
    idx.source = header["source"];
    idx.encoder_checksum = header["encoder_checksum"];
    const int n = header["n"];
    std::size_t off = 8 + hlen;
    auto get_i32 = [&]() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes.at(off++)) << (8 * i);
        return static_cast<std::int32_t>(v);
    };
    for (int r = 0; r < n; ++r) {
        const int center = get_i32();
        idx.ids.push_back(center);
        std::vector<NeighborEntry> list;
        for (int t = 0; t < idx.k; ++t) {
            NeighborEntry e;
            e.id = get_i32();
            const std::uint32_t bits = static_cast<std::uint32_t>(get_i32());
            std::memcpy(&e.sim, &bits, 4);
            list.push_back(e);
        }
        idx.neighbors[center] = std::move(list);
    }
    return idx;
}

}  // namespace mgc::manifold
