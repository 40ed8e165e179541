#include "mgc/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "mgc/errors.hpp"
#include "mgc/io.hpp"

namespace mgc::datagen {

const PairedSample& Dataset::by_id(int id) const {
    for (const auto& s : samples)
        if (s.id == id) return s;
    throw DataError("unknown sample id " + std::to_string(id));
}

std::array<float, 3> hue_to_rgb(double hue) {
    // HSV with s=0.9, v=0.95.
    const double s = 0.9, v = 0.95;
    double h = hue / (M_PI / 3.0);  // sector in [0,6)
    h = std::fmod(h, 6.0);
    const int i = static_cast<int>(h);
    const double f = h - i;
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    double r, g, b;
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
    return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

namespace {

// Signed distance to the shape boundary in pixel units; negative inside.
double shape_sdf(const LatentFactors& f, int size, double px, double py) {
    const double cx = f.pos_x * size, cy = f.pos_y * size;
    const double radius = f.scale * size * 0.35;
    const double dx = px - cx, dy = py - cy;
    switch (f.shape_class) {
        case 0:  // circle
            return std::sqrt(dx * dx + dy * dy) - radius;
        case 1:  // axis-aligned square, half-extent = radius
            return std::max(std::fabs(dx), std::fabs(dy)) - radius;
        default: {  // equilateral triangle pointing up, circumradius = radius
            double best = -1e9;
            for (int e = 0; e < 3; ++e) {
                // Edge normals point outward, at angles -90+120e degrees... use
                // vertices at angles 90, 210, 330 (y axis points down in image
                // coords, so "up" means -y).
                const double a1 = -M_PI / 2 + e * 2.0 * M_PI / 3.0;
                const double a2 = -M_PI / 2 + (e + 1) * 2.0 * M_PI / 3.0;
                const double v1x = cx + radius * std::cos(a1), v1y = cy + radius * std::sin(a1);
                const double v2x = cx + radius * std::cos(a2), v2y = cy + radius * std::sin(a2);
                // Outward normal of edge v1->v2.
                double ex = v2x - v1x, ey = v2y - v1y;
                const double len = std::sqrt(ex * ex + ey * ey);
                double nx = ey / len, ny = -ex / len;
                // Orient normal away from the center.
                const double mx = (v1x + v2x) / 2 - cx, my = (v1y + v2y) / 2 - cy;
                if (nx * mx + ny * my < 0) {
                    nx = -nx;
                    ny = -ny;
                }
                best = std::max(best, nx * (px - v1x) + ny * (py - v1y));
            }
            return best;
        }
    }
}

// 3x3 supersampled coverage of a predicate over the sdf.
template <typename Pred>
double coverage(const LatentFactors& f, int size, int px, int py, Pred pred) {
    int hits = 0;
    for (int sy = 0; sy < 3; ++sy)
        for (int sx = 0; sx < 3; ++sx) {
            const double x = px + (sx + 0.5) / 3.0;
            const double y = py + (sy + 0.5) / 3.0;
            if (pred(shape_sdf(f, size, x, y))) ++hits;
        }
    return hits / 9.0;
}

}  // namespace

Tensor render_target(const LatentFactors& f, int size) {
    Tensor img({3, size, size});
    const auto rgb = hue_to_rgb(f.hue);
    const float bg = 0.12f;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double c = coverage(f, size, x, y, [](double d) { return d < 0.0; });
            for (int ch = 0; ch < 3; ++ch)
                img.at((static_cast<std::int64_t>(ch) * size + y) * size + x) =
                    static_cast<float>(bg + (rgb[ch] - bg) * c);
        }
    return img;
}

Tensor render_source(const LatentFactors& f, int size) {
    Tensor img({3, size, size});
    const float bg = 0.95f;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double edge =
                coverage(f, size, x, y, [](double d) { return std::fabs(d) < 1.1; });
            const float v = static_cast<float>(bg - 0.88 * edge);
            for (int ch = 0; ch < 3; ++ch)
                img.at((static_cast<std::int64_t>(ch) * size + y) * size + x) = v;
        }
    // 2-pixel hue cue ring on the border: the only color information in the
    // source, making the hue of the target inferable.
    const auto rgb = hue_to_rgb(f.hue);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            if (y >= 2 && y < size - 2 && x >= 2 && x < size - 2) continue;
            for (int ch = 0; ch < 3; ++ch)
                img.at((static_cast<std::int64_t>(ch) * size + y) * size + x) = rgb[ch];
        }
    return img;
}

LatentFactors sample_factors(Rng& rng) {
    LatentFactors f;
    f.shape_class = static_cast<int>(rng.below(kNumShapeClasses));
    f.hue = rng.uniform(0.0, 2.0 * M_PI);
    f.scale = rng.uniform(kScaleMin, kScaleMax);
    f.pos_x = rng.uniform(kPosMin, kPosMax);
    f.pos_y = rng.uniform(kPosMin, kPosMax);
    return f;
}

std::vector<double> factor_embedding(const LatentFactors& f) {
    std::vector<double> e(11, 0.0);
    e[static_cast<std::size_t>(f.shape_class)] = 1.0;
    e[3] = std::cos(f.hue);
    e[4] = std::sin(f.hue);
    auto arc = [](double t, double lo, double hi) {
        const double phi = M_PI * (t - lo) / (hi - lo);
        return std::pair<double, double>{std::cos(phi), std::sin(phi)};
    };
    std::tie(e[5], e[6]) = arc(f.scale, kScaleMin, kScaleMax);
    std::tie(e[7], e[8]) = arc(f.pos_x, kPosMin, kPosMax);
    std::tie(e[9], e[10]) = arc(f.pos_y, kPosMin, kPosMax);
    return e;
}

double factor_distance(const LatentFactors& a, const LatentFactors& b) {
    const auto ea = factor_embedding(a), eb = factor_embedding(b);
    double s = 0.0;
    for (std::size_t i = 0; i < ea.size(); ++i) s += (ea[i] - eb[i]) * (ea[i] - eb[i]);
    return std::sqrt(s);
}

namespace {
Dataset make_split(const std::string& name, int count, int first_id, int size, Rng base,
                   std::uint64_t seed) {
    Dataset ds;
    ds.split = name;
    ds.seed = seed;
    ds.samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int id = first_id + i;
        Rng r = base.fork(static_cast<std::uint64_t>(id));
        PairedSample s;
        s.id = id;
        s.factors = sample_factors(r);
        s.source = render_source(s.factors, size);
        s.target = render_target(s.factors, size);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}
}  // namespace

DatasetBundle generate_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
    if (cfg.image_size <= 0 || cfg.image_size % 4 != 0)
        throw ConfigError("image_size must be positive and divisible by 4");
    if (cfg.n_train < 0 || cfg.n_val < 0 || cfg.n_test < 0)
        throw ConfigError("split counts must be non-negative");
    DatasetBundle b;
    b.cfg = cfg;
    b.seed = seed;
    Rng base(seed);
    b.train = make_split("train", cfg.n_train, 0, cfg.image_size, base, seed);
    b.val = make_split("val", cfg.n_val, cfg.n_train, cfg.image_size, base, seed);
    b.test = make_split("test", cfg.n_test, cfg.n_train + cfg.n_val, cfg.image_size, base, seed);
    return b;
}

std::vector<int> oracle_neighbors(const Dataset& ds, int id, int k) {
    if (k >= ds.size()) throw ConfigError("k must be smaller than the dataset size");
    const PairedSample& q = ds.by_id(id);
    std::vector<std::pair<double, int>> dists;
    dists.reserve(ds.samples.size());
    for (const auto& s : ds.samples) {
        if (s.id == id) continue;
        dists.emplace_back(factor_distance(q.factors, s.factors), s.id);
    }
    std::sort(dists.begin(), dists.end());
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) out.push_back(dists[static_cast<std::size_t>(i)].second);
    return out;
}

namespace {

void save_split(const Dataset& ds, int size, const std::filesystem::path& path) {
    const std::size_t plane = static_cast<std::size_t>(3) * size * size;
    std::vector<float> raw;
    raw.reserve(2 * plane * ds.samples.size());
    for (const auto& s : ds.samples) raw.insert(raw.end(), s.source.data.begin(), s.source.data.end());
    for (const auto& s : ds.samples) raw.insert(raw.end(), s.target.data.begin(), s.target.data.end());
    auto z = io::zlib_compress(reinterpret_cast<const std::uint8_t*>(raw.data()),
                               raw.size() * sizeof(float));
    io::json header = {{"split", ds.split},
                       {"count", ds.size()},
                       {"image_size", size},
                       {"channels", 3},
                       {"first_id", ds.samples.empty() ? 0 : ds.samples.front().id},
                       {"raw_bytes", raw.size() * sizeof(float)}};
    const std::string hs = header.dump();
    std::vector<std::uint8_t> out = {'M', 'G', 'C', 'Z'};
    const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((hlen >> (8 * i)) & 0xFF));
    out.insert(out.end(), hs.begin(), hs.end());
    out.insert(out.end(), z.begin(), z.end());
    io::write_file(path, out);
}

Dataset load_split(const std::filesystem::path& path, const std::string& split,
                   const std::vector<LatentFactors>& factors) {
    auto bytes = io::read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "MGCZ", 4) != 0)
        throw DataError("not a split file: " + path.string());
    std::uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i) hlen |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
    auto header = io::json::parse(std::string(bytes.begin() + 8, bytes.begin() + 8 + hlen));
    const int count = header["count"], size = header["image_size"], first_id = header["first_id"];
    const std::size_t raw_bytes = header["raw_bytes"];
    auto raw = io::zlib_decompress(bytes.data() + 8 + hlen, bytes.size() - 8 - hlen, raw_bytes);
    const float* f = reinterpret_cast<const float*>(raw.data());
    const std::size_t plane = static_cast<std::size_t>(3) * size * size;

    Dataset ds;
    ds.split = split;
    for (int i = 0; i < count; ++i) {
        PairedSample s;
        s.id = first_id + i;
        s.factors = factors[static_cast<std::size_t>(s.id)];
        s.source = Tensor({3, size, size});
        s.target = Tensor({3, size, size});
        std::memcpy(s.source.data.data(), f + i * plane, plane * sizeof(float));
        std::memcpy(s.target.data.data(), f + (count + i) * plane, plane * sizeof(float));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace

void save_dataset(const DatasetBundle& b, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    io::json meta = {{"seed", b.seed},
                     {"image_size", b.cfg.image_size},
                     {"n_train", b.cfg.n_train},
                     {"n_val", b.cfg.n_val},
                     {"n_test", b.cfg.n_test}};
    io::write_text(dir / "meta.json", meta.dump(2));

    std::ostringstream csv;
    csv << "id,shape_class,hue,scale,pos_x,pos_y\n";
    csv.precision(17);
    for (const Dataset* ds : {&b.train, &b.val, &b.test})
        for (const auto& s : ds->samples)
            csv << s.id << "," << s.factors.shape_class << "," << s.factors.hue << ","
                << s.factors.scale << "," << s.factors.pos_x << "," << s.factors.pos_y << "\n";
    io::write_text(dir / "factors.csv", csv.str());

    save_split(b.train, b.cfg.image_size, dir / "train.bin");
    save_split(b.val, b.cfg.image_size, dir / "val.bin");
    save_split(b.test, b.cfg.image_size, dir / "test.bin");
}

DatasetBundle load_dataset(const std::filesystem::path& dir) {
    auto meta = io::json::parse(io::read_text(dir / "meta.json"));
    DatasetBundle b;
    b.seed = meta["seed"];
    b.cfg.image_size = meta["image_size"];
    b.cfg.n_train = meta["n_train"];
    b.cfg.n_val = meta["n_val"];
    b.cfg.n_test = meta["n_test"];

    std::vector<LatentFactors> factors(
        static_cast<std::size_t>(b.cfg.n_train + b.cfg.n_val + b.cfg.n_test));
    std::istringstream csv(io::read_text(dir / "factors.csv"));
    std::string line;
    std::getline(csv, line);  // header
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6) throw DataError("malformed factors.csv row: " + line);
        const int id = std::stoi(cells[0]);
        LatentFactors f;
        f.shape_class = std::stoi(cells[1]);
        f.hue = std::stod(cells[2]);
        f.scale = std::stod(cells[3]);
        f.pos_x = std::stod(cells[4]);
        f.pos_y = std::stod(cells[5]);
        factors.at(static_cast<std::size_t>(id)) = f;
    }

    b.train = load_split(dir / "train.bin", "train", factors);
    b.val = load_split(dir / "val.bin", "val", factors);
    b.test = load_split(dir / "test.bin", "test", factors);
    b.train.seed = b.val.seed = b.test.seed = b.seed;
    return b;
}

}  // namespace mgc::datagen
