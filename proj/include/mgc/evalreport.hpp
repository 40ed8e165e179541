#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mgc/manifold.hpp"
#include "mgc/objectives.hpp"

namespace mgc::evalreport {

// First and second moments of an embedding cloud (unbiased covariance).
struct FrechetStats {
    int dim = 0;
    int n = 0;
    std::vector<double> mean;  // [dim]
    std::vector<double> cov;   // row-major [dim, dim]
};

FrechetStats feature_stats(const manifold::EmbeddingSet& emb);

// Symmetric PSD square root via eigendecomposition; negative eigenvalues
// (numerical noise) are clipped to zero. Exposed for oracle testing.
std::vector<double> sym_sqrtm(const std::vector<double>& m, int dim);

// Squared Wasserstein-2 between Gaussians fitted to the two clouds:
// |mu_a - mu_b|^2 + tr(Ca + Cb - 2 (Ca^1/2 Cb Ca^1/2)^1/2), clamped at 0.
double frechet_distance(const FrechetStats& a, const FrechetStats& b);

struct EvalResult {
    double frechet = 0.0;
    float l1 = 0.0f;
    int n = 0;

    io::json to_json() const;
};

// Fréchet proxy between encoder embeddings of predictions and targets on a
// split, plus the mean L1 error.
EvalResult eval_generator(const models::GeneratorNet& gen, const datagen::Dataset& split,
                          const models::EncoderNet& enc);

// Loss-curve SVG: loss_G, loss_D, and the resource term, each normalized to
// [0,1] over the run so shape comparisons stay readable.
void write_loss_curves_svg(const std::vector<objectives::LossBundle>& history,
                           const std::filesystem::path& path);

// PNG strip per center: the center target followed by its neighbors' targets.
void write_neighborhood_grid_png(const datagen::Dataset& ds,
                                 const manifold::NeighborhoodIndex& idx,
                                 const std::vector<int>& centers,
                                 const std::filesystem::path& path);

// Side-by-side source / prediction / target strips for a handful of samples.
void write_prediction_grid_png(const models::GeneratorNet& gen, const datagen::Dataset& ds,
                               const std::vector<int>& ids, const std::filesystem::path& path);

struct AblationRow {
    std::string variant;
    double frechet = 0.0;
    float l1 = 0.0f;
    double compression_ratio = 0.0;
};

void write_ablation_table(const std::vector<AblationRow>& rows,
                          const std::filesystem::path& md_path,
                          const std::filesystem::path& csv_path);

}  // namespace mgc::evalreport
