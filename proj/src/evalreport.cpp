#include "mgc/evalreport.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "mgc/errors.hpp"

namespace mgc::evalreport {

FrechetStats feature_stats(const manifold::EmbeddingSet& emb) {
    const int n = emb.size(), d = emb.dim;
    if (n < 2)
        throw ContractViolation("feature_stats needs at least 2 embeddings, got " +
                                std::to_string(n));
    FrechetStats s;
    s.dim = d;
    s.n = n;
    s.mean.assign(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < n; ++i) {
        auto row = emb.row(i);
        for (int j = 0; j < d; ++j) s.mean[static_cast<std::size_t>(j)] += row[j];
    }
    for (auto& m : s.mean) m /= n;
    s.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i) {
        auto row = emb.row(i);
        for (int a = 0; a < d; ++a) {
            const double da = row[a] - s.mean[static_cast<std::size_t>(a)];
            for (int b = 0; b < d; ++b)
                s.cov[static_cast<std::size_t>(a) * d + b] +=
                    da * (row[b] - s.mean[static_cast<std::size_t>(b)]);
        }
    }
    for (auto& c : s.cov) c /= (n - 1);
    return s;
}

std::vector<double> sym_sqrtm(const std::vector<double>& m, int dim) {
    if (static_cast<int>(m.size()) != dim * dim)
        throw ContractViolation("sym_sqrtm size mismatch");
    Eigen::Map<const Eigen::MatrixXd> M(m.data(), dim, dim);
    // Symmetrize first: callers may hand in a product with asymmetric noise.
    Eigen::MatrixXd S = 0.5 * (M + M.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd R = eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
    return {R.data(), R.data() + dim * dim};
}

double frechet_distance(const FrechetStats& a, const FrechetStats& b) {
    if (a.dim != b.dim) throw ContractViolation("frechet_distance dimension mismatch");
    const int d = a.dim;
    double mean_sq = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = a.mean[static_cast<std::size_t>(i)] -
                            b.mean[static_cast<std::size_t>(i)];
        mean_sq += diff * diff;
    }
    Eigen::Map<const Eigen::MatrixXd> Ca(a.cov.data(), d, d);
    Eigen::Map<const Eigen::MatrixXd> Cb(b.cov.data(), d, d);
    auto ra = sym_sqrtm(a.cov, d);
    Eigen::Map<const Eigen::MatrixXd> Ra(ra.data(), d, d);
    Eigen::MatrixXd inner = Ra * Cb * Ra;
    std::vector<double> inner_v(inner.data(), inner.data() + d * d);
    auto cross = sym_sqrtm(inner_v, d);
    double tr_cross = 0.0;
    for (int i = 0; i < d; ++i) tr_cross += cross[static_cast<std::size_t>(i) * d + i];
    const double dist = mean_sq + Ca.trace() + Cb.trace() - 2.0 * tr_cross;
    return std::max(dist, 0.0);
}

io::json EvalResult::to_json() const {
    return {{"frechet", frechet}, {"l1", l1}, {"n", n}};
}

EvalResult eval_generator(const models::GeneratorNet& gen, const datagen::Dataset& split,
                          const models::EncoderNet& enc) {
    EvalResult r;
    r.n = split.size();
    auto pred = manifold::embed_predictions(gen, split, enc);
    auto target = manifold::embed_targets(split, enc);
    r.frechet = frechet_distance(feature_stats(pred), feature_stats(target));
    r.l1 = models::eval_l1(gen, split);
    return r;
}

namespace {

constexpr int kPlotW = 720, kPlotH = 260, kMargin = 40;

std::string polyline(const std::vector<float>& ys, const std::string& color) {
    float lo = ys[0], hi = ys[0];
    for (float y : ys) {
        lo = std::min(lo, y);
        hi = std::max(hi, y);
    }
    const float span = hi - lo > 0.0f ? hi - lo : 1.0f;
    std::ostringstream os;
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    const int n = static_cast<int>(ys.size());
    for (int i = 0; i < n; ++i) {
        const double x = kMargin + (kPlotW - 2.0 * kMargin) * (n > 1 ? i / double(n - 1) : 0.5);
        const double y = kPlotH - kMargin - (kPlotH - 2.0 * kMargin) * ((ys[i] - lo) / span);
        os << x << ',' << y << ' ';
    }
    os << "\"/>\n";
    return os.str();
}

void blit(std::vector<std::uint8_t>& rgb, int canvas_w, int x0, int y0, const Tensor& img01) {
    const int h = img01.dim(1), w = img01.dim(2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(
                    img01.at((static_cast<std::int64_t>(c) * h + y) * w + x), 0.0f, 1.0f);
                rgb[(static_cast<std::size_t>(y0 + y) * canvas_w + (x0 + x)) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
}

void write_grid(const std::vector<std::vector<const Tensor*>>& rows,
                const std::filesystem::path& path) {
    if (rows.empty() || rows[0].empty()) throw ContractViolation("empty image grid");
    const int h = rows[0][0]->dim(1), w = rows[0][0]->dim(2), pad = 2;
    const int cols = static_cast<int>(rows[0].size());
    const int canvas_w = cols * (w + pad) + pad;
    const int canvas_h = static_cast<int>(rows.size()) * (h + pad) + pad;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(canvas_w) * canvas_h * 3, 255);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int c = 0; c < cols; ++c)
            blit(rgb, canvas_w, pad + c * (w + pad), pad + static_cast<int>(r) * (h + pad),
                 *rows[r][static_cast<std::size_t>(c)]);
    io::write_png(path, rgb.data(), canvas_w, canvas_h);
}

}  // namespace

void write_loss_curves_svg(const std::vector<objectives::LossBundle>& history,
                           const std::filesystem::path& path) {
    if (history.empty()) throw DataError("no history to plot");
    std::vector<float> lg, ld, rs;
    for (const auto& b : history) {
        lg.push_back(b.loss_g);
        ld.push_back(b.loss_d);
        rs.push_back(b.resource);
    }
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kPlotW << "\" height=\""
       << kPlotH << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\""
       << kPlotW - 2 * kMargin << "\" height=\"" << kPlotH - 2 * kMargin
       << "\" fill=\"none\" stroke=\"#ccc\"/>\n"
       << polyline(lg, "#1f77b4") << polyline(ld, "#d62728") << polyline(rs, "#2ca02c")
       << "<text x=\"" << kMargin << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">"
       << "loss_G (blue), loss_D (red), resource (green); each normalized to its own range; "
       << history.size() << " steps</text>\n"
       << "</svg>\n";
    io::write_text(path, os.str());
}

void write_neighborhood_grid_png(const datagen::Dataset& ds,
                                 const manifold::NeighborhoodIndex& idx,
                                 const std::vector<int>& centers,
                                 const std::filesystem::path& path) {
    std::vector<std::vector<const Tensor*>> rows;
    for (int id : centers) {
        std::vector<const Tensor*> row{&ds.by_id(id).target};
        for (const auto& n : idx.of(id)) row.push_back(&ds.by_id(n.id).target);
        rows.push_back(std::move(row));
    }
    write_grid(rows, path);
}

void write_prediction_grid_png(const models::GeneratorNet& gen, const datagen::Dataset& ds,
                               const std::vector<int>& ids, const std::filesystem::path& path) {
    std::vector<Tensor> preds;
    preds.reserve(ids.size());
    for (int id : ids) {
        ag::Var x = ag::constant(models::to_gan_range(models::stack_images({&ds.by_id(id).source})));
        ag::Var y = models::generator_forward(gen, x, nullptr, false, nullptr, false);
        Tensor img = models::from_gan_range(y->val);
        img.shape = {3, img.dim(2), img.dim(3)};  // drop the N=1 axis
        preds.push_back(std::move(img));
    }
    std::vector<std::vector<const Tensor*>> rows;
    for (std::size_t i = 0; i < ids.size(); ++i)
        rows.push_back({&ds.by_id(ids[i]).source, &preds[i], &ds.by_id(ids[i]).target});
    write_grid(rows, path);
}

void write_ablation_table(const std::vector<AblationRow>& rows,
                          const std::filesystem::path& md_path,
                          const std::filesystem::path& csv_path) {
    std::ostringstream md, csv;
    md << "| variant | frechet | l1 | compression |\n|---|---|---|---|\n";
    csv << "variant,frechet,l1,compression\n";
    md.precision(6);
    csv.precision(9);
    for (const auto& r : rows) {
        md << "| " << r.variant << " | " << r.frechet << " | " << r.l1 << " | "
           << r.compression_ratio << " |\n";
        csv << r.variant << ',' << r.frechet << ',' << r.l1 << ',' << r.compression_ratio << "\n";
    }
    io::write_text(md_path, md.str());
    io::write_text(csv_path, csv.str());
}

}  // namespace mgc::evalreport
