#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mgc/datagen.hpp"
#include "mgc/models.hpp"

namespace mgc::manifold {

enum class SimKind { plain, absolute };
SimKind sim_from_string(const std::string& s);

struct EmbeddingSet {
    std::vector<int> ids;
    int dim = 0;
    std::vector<double> vectors;  // row-major, ids.size() x dim
    std::string source;           // "encoder" or "oracle-factors"

    int size() const { return static_cast<int>(ids.size()); }
    std::span<const double> row(int i) const;
};

struct NeighborEntry {
    int id = 0;
    float sim = 0.0f;
};

struct NeighborhoodIndex {
    int k = 0;
    bool include_center = true;
    std::string source;
    std::uint64_t encoder_checksum = 0;
    std::vector<int> ids;  // center ids, dataset order
    std::map<int, std::vector<NeighborEntry>> neighbors;

    const std::vector<NeighborEntry>& of(int center_id) const;
};

// Embeds the original generator's predictions on every sample of the split
// (dropout off). Aborts with the sample id on non-finite output.
EmbeddingSet embed_predictions(const models::GeneratorNet& gen, const datagen::Dataset& ds,
                               const models::EncoderNet& enc);

// Embeds the ground-truth target images instead of generator outputs.
EmbeddingSet embed_targets(const datagen::Dataset& ds, const models::EncoderNet& enc);

// Ground-truth factor embeddings; cosine ordering on these equals the
// factor-distance oracle exactly (constant-norm construction).
EmbeddingSet oracle_embeddings(const datagen::Dataset& ds);

double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         SimKind kind = SimKind::plain);

// Exact brute-force top-k per center, ties broken by lower id.
NeighborhoodIndex build_index(const EmbeddingSet& emb, int k, SimKind kind = SimKind::plain);

// Mean over centers of |index neighbors ∩ oracle list| / k.
double neighborhood_overlap(const NeighborhoodIndex& idx,
                            const std::map<int, std::vector<int>>& oracle);

void save_index(const NeighborhoodIndex& idx, const std::filesystem::path& path);
NeighborhoodIndex load_index(const std::filesystem::path& path);

}  // namespace mgc::manifold
