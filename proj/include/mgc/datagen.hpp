#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mgc/rng.hpp"
#include "mgc/tensor.hpp"

namespace mgc::datagen {

// Ground-truth generative factors of one sample.
struct LatentFactors {
    int shape_class = 0;   // 0 circle, 1 square, 2 triangle
    double hue = 0.0;      // [0, 2pi)
    double scale = 0.5;    // [0.3, 0.9]
    double pos_x = 0.5;    // [0.1, 0.9]
    double pos_y = 0.5;
};

constexpr int kNumShapeClasses = 3;
constexpr double kScaleMin = 0.3, kScaleMax = 0.9;
constexpr double kPosMin = 0.1, kPosMax = 0.9;

struct PairedSample {
    Tensor source;  // [3,H,W] grayscale outline + hue cue border, values in [0,1]
    Tensor target;  // [3,H,W] hue-filled rendering, values in [0,1]
    LatentFactors factors;
    int id = 0;
};

struct Dataset {
    std::vector<PairedSample> samples;
    std::string split;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(samples.size()); }
    const PairedSample& by_id(int id) const;
};

struct DatasetConfig {
    int n_train = 128;
    int n_val = 32;
    int n_test = 32;
    int image_size = 32;
};

struct DatasetBundle {
    Dataset train, val, test;
    DatasetConfig cfg;
    std::uint64_t seed = 0;
};

// Deterministic rendering from factors; the pairedness invariant is that
// re-rendering reproduces the stored pixels exactly.
Tensor render_source(const LatentFactors& f, int size);
Tensor render_target(const LatentFactors& f, int size);
std::array<float, 3> hue_to_rgb(double hue);

LatentFactors sample_factors(Rng& rng);

// Constant-norm factor embedding: shape one-hot, hue on the circle (chord
// distance), scale/position on quarter arcs. Euclidean distance here is the
// ground-truth neighborhood metric, and because every embedding has the same
// norm, cosine ordering on these vectors matches it exactly.
std::vector<double> factor_embedding(const LatentFactors& f);
double factor_distance(const LatentFactors& a, const LatentFactors& b);

DatasetBundle generate_dataset(const DatasetConfig& cfg, std::uint64_t seed);

// k nearest samples by factor_distance, query id excluded, ties to lower id.
std::vector<int> oracle_neighbors(const Dataset& ds, int id, int k);

// Directory layout: meta.json, factors.csv, <split>.bin (zlib array stacks).
void save_dataset(const DatasetBundle& b, const std::filesystem::path& dir);
DatasetBundle load_dataset(const std::filesystem::path& dir);

}  // namespace mgc::datagen
