#include "mgc/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "mgc/errors.hpp"
#include "mgc/pruneloop.hpp"

namespace mgc::pipeline {

namespace fs = std::filesystem;

RunLock::RunLock(const fs::path& run_dir) {
    fs::create_directories(run_dir);
    file = run_dir / "run.lock";
    // "wx" fails if the file already exists, which is the whole point.
    std::FILE* f = std::fopen(file.string().c_str(), "wx");
    if (!f)
        throw DataError("run directory is locked (remove " + file.string() +
                        " if no other process is using it)");
    std::fclose(f);
}

RunLock::~RunLock() {
    std::error_code ec;
    fs::remove(file, ec);
}

namespace {

int highest_version(const fs::path& stage_root) {
    int best = 0;
    if (!fs::exists(stage_root)) return 0;
    for (const auto& e : fs::directory_iterator(stage_root)) {
        const std::string name = e.path().filename().string();
        if (name.size() > 1 && name[0] == 'v' &&
            name.find_first_not_of("0123456789", 1) == std::string::npos)
            best = std::max(best, std::stoi(name.substr(1)));
    }
    return best;
}

std::string vname(int n) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "v%03d", n);
    return buf;
}

}  // namespace

fs::path new_stage_dir(const fs::path& run_dir, const std::string& stage) {
    const fs::path root = run_dir / stage;
    const fs::path dir = root / vname(highest_version(root) + 1);
    fs::create_directories(dir);
    return dir;
}

fs::path latest_stage_dir(const fs::path& run_dir, const std::string& stage,
                          const std::string& prerequisite) {
    const fs::path root = run_dir / stage;
    const int v = highest_version(root);
    if (v == 0)
        throw DataError("missing " + stage + " artifacts; run `gancomp " + prerequisite +
                        "` first");
    return root / vname(v);
}

void apply_master_seed(config::RunConfig& cfg, std::uint64_t seed) {
    cfg.data.seed = seed + 1;
    cfg.pretrain.seed = seed + 2;
    cfg.encoder.seed = seed + 3;
    cfg.prune.seed = seed + 4;
    cfg.finetune.seed = seed + 5;
}

config::RunConfig load_effective_config(const CommandSpec& spec) {
    config::RunConfig cfg;
    if (spec.config_path) {
        cfg = config::parse_config(io::read_text(*spec.config_path));
    } else {
        const fs::path snapshot = spec.run_dir / "config.toml";
        if (fs::exists(snapshot)) cfg = config::parse_config(io::read_text(snapshot));
    }
    for (const auto& o : spec.overrides) config::apply_override(cfg, o);
    if (spec.seed) apply_master_seed(cfg, *spec.seed);
    config::validate(cfg);
    return cfg;
}

std::vector<std::pair<std::string, config::RunConfig::Ablation>> ablation_ladder() {
    using A = config::RunConfig::Ablation;
    std::vector<std::pair<std::string, A>> rows;
    rows.emplace_back("full", A{});
    rows.emplace_back("no_kd", A{.use_kd = false});
    rows.emplace_back("no_exchange", A{.exchange_feedback = false});
    rows.emplace_back("no_manifold", A{.manifold_real_set = false});
    rows.emplace_back("no_prune_d", A{.prune_d = false});
    rows.emplace_back("baseline", A{.prune_d = false,
                                    .use_agents = false,
                                    .exchange_feedback = false,
                                    .manifold_real_set = false,
                                    .use_kd = false});
    return rows;
}

namespace {

void snapshot_config(const config::RunConfig& cfg, const fs::path& run_dir,
                     const fs::path& stage_dir) {
    const std::string toml = config::to_toml(cfg);
    io::write_text(run_dir / "config.toml", toml);
    io::write_text(stage_dir / "config.toml", toml);
}

datagen::DatasetBundle load_data(const fs::path& run_dir) {
    const fs::path root = run_dir / "data";
    if (highest_version(root) > 0)
        return datagen::load_dataset(latest_stage_dir(run_dir, "data", "gen-data"));
    if (const char* env = std::getenv("GANCOMP_DATA_ROOT"); env && fs::exists(fs::path(env) / "meta.json"))
        return datagen::load_dataset(env);
    throw DataError("missing data artifacts; run `gancomp gen-data` first");
}

models::GeneratorNet load_teacher(const fs::path& run_dir) {
    const fs::path dir = latest_stage_dir(run_dir, "pretrain", "pretrain");
    return models::load_generator(dir / "checkpoints" / "gen.ckpt");
}

models::DiscriminatorNet load_teacher_disc(const fs::path& run_dir) {
    const fs::path dir = latest_stage_dir(run_dir, "pretrain", "pretrain");
    return models::load_discriminator(dir / "checkpoints" / "disc.ckpt");
}

models::EncoderNet load_enc(const fs::path& run_dir) {
    const fs::path dir = latest_stage_dir(run_dir, "encoder", "train-encoder");
    return models::load_encoder(dir / "checkpoints" / "encoder.ckpt");
}

// The finetuned pair when present, otherwise the freshly extracted one.
models::GeneratorNet load_pruned(const fs::path& run_dir) {
    if (highest_version(run_dir / "finetune") > 0)
        return models::load_generator(latest_stage_dir(run_dir, "finetune", "finetune") /
                                      "checkpoints" / "gen.ckpt");
    return models::load_generator(latest_stage_dir(run_dir, "final", "finalize") /
                                  "checkpoints" / "gen.ckpt");
}

models::PretrainConfig pretrain_cfg(const config::RunConfig& cfg) {
    models::PretrainConfig pc;
    pc.steps = cfg.pretrain.steps;
    pc.batch = cfg.pretrain.batch;
    pc.lr = cfg.pretrain.lr;
    pc.beta1 = cfg.pretrain.beta1;
    pc.l1_weight = cfg.pretrain.l1_weight;
    pc.hinge = cfg.prune.flavor == "hinge";
    pc.seed = cfg.pretrain.seed;
    pc.val_l1_warn = cfg.pretrain.val_l1_warn;
    return pc;
}

void stage_gen_data(const config::RunConfig& cfg, const fs::path& run_dir) {
    const fs::path dir = new_stage_dir(run_dir, "data");
    snapshot_config(cfg, run_dir, dir);
    auto ds = datagen::generate_dataset({.n_train = cfg.data.n_train,
                                         .n_val = cfg.data.n_val,
                                         .n_test = cfg.data.n_test,
                                         .image_size = cfg.data.image_size},
                                        cfg.data.seed);
    datagen::save_dataset(ds, dir);
}

void stage_pretrain(const config::RunConfig& cfg, const fs::path& run_dir) {
    auto ds = load_data(run_dir);
    const fs::path dir = new_stage_dir(run_dir, "pretrain");
    snapshot_config(cfg, run_dir, dir);
    Rng rng(cfg.pretrain.seed);
    auto gen = models::build_generator(models::style_from_string(cfg.model.style),
                                       cfg.model.g_base_width, cfg.model.g_depth,
                                       cfg.model.dropout, cfg.data.image_size, rng);
    auto disc = models::build_discriminator(cfg.model.d_base_width, cfg.model.d_depth,
                                            cfg.data.image_size, rng);
    auto hist = models::pretrain_gan(ds, gen, disc, pretrain_cfg(cfg));
    fs::create_directories(dir / "checkpoints");
    models::save_generator(gen, dir / "checkpoints" / "gen.ckpt");
    models::save_discriminator(disc, dir / "checkpoints" / "disc.ckpt");
    std::ostringstream csv;
    csv << "step,loss_D,loss_G,l1\n";
    csv.precision(9);
    for (std::size_t i = 0; i < hist.d_loss.size(); ++i)
        csv << i << ',' << hist.d_loss[i] << ',' << hist.g_loss[i] << ',' << hist.l1[i] << "\n";
    io::write_text(dir / "history.csv", csv.str());
}

void stage_train_encoder(const config::RunConfig& cfg, const fs::path& run_dir) {
    auto ds = load_data(run_dir);
    const fs::path dir = new_stage_dir(run_dir, "encoder");
    snapshot_config(cfg, run_dir, dir);
    Rng rng(cfg.encoder.seed);
    auto enc = models::build_encoder(cfg.model.embedding_dim, cfg.data.image_size, rng);
    models::EncoderTrainConfig ec;
    ec.steps = cfg.encoder.steps;
    ec.batch_pairs = cfg.encoder.batch_pairs;
    ec.lr = cfg.encoder.lr;
    ec.temperature = cfg.encoder.temperature;
    ec.seed = cfg.encoder.seed;
    models::train_encoder(ds, enc, ec);
    fs::create_directories(dir / "checkpoints");
    models::save_encoder(enc, dir / "checkpoints" / "encoder.ckpt");
}

void stage_build_index(const config::RunConfig& cfg, const fs::path& run_dir) {
    auto ds = load_data(run_dir);
    manifold::EmbeddingSet emb;
    if (cfg.index.source == "encoder") {
        auto gen = load_teacher(run_dir);
        auto enc = load_enc(run_dir);
        emb = manifold::embed_predictions(gen, ds.train, enc);
    } else {
        emb = manifold::oracle_embeddings(ds.train);
    }
    auto idx = manifold::build_index(emb, cfg.index.k,
                                     manifold::sim_from_string(cfg.index.similarity));
    idx.include_center = cfg.index.include_center;
    const fs::path dir = new_stage_dir(run_dir, "index");
    snapshot_config(cfg, run_dir, dir);
    manifold::save_index(idx, dir / "index.bin");
}

void stage_prune(const config::RunConfig& cfg, const fs::path& run_dir) {
    auto ds = load_data(run_dir);
    auto gen = load_teacher(run_dir);
    auto disc = load_teacher_disc(run_dir);
    auto idx = manifold::load_index(latest_stage_dir(run_dir, "index", "build-index") /
                                    "index.bin");
    const fs::path dir = new_stage_dir(run_dir, "prune");
    snapshot_config(cfg, run_dir, dir);
    auto res = pruneloop::prune(gen, disc, idx, ds.train, cfg);
    fs::create_directories(dir / "agents");
    agents::save_agent(res.agent_g, dir / "agents" / "gen.ckpt");
    agents::save_agent(res.agent_d, dir / "agents" / "disc.ckpt");
    io::write_text(dir / "history.csv", pruneloop::history_to_csv(res.history));
}

void stage_finalize(const config::RunConfig& cfg, const fs::path& run_dir) {
    auto gen = load_teacher(run_dir);
    auto disc = load_teacher_disc(run_dir);
    const fs::path prune_dir = latest_stage_dir(run_dir, "prune", "prune");
    auto agent_g = agents::load_agent(prune_dir / "agents" / "gen.ckpt");
    auto agent_d = agents::load_agent(prune_dir / "agents" / "disc.ckpt");
    const fs::path dir = new_stage_dir(run_dir, "final");
    snapshot_config(cfg, run_dir, dir);
    auto fin = pruneloop::finalize(agent_g, agent_d, gen, disc, cfg);
    fs::create_directories(dir / "checkpoints");
    models::save_generator(fin.gen, dir / "checkpoints" / "gen.ckpt");
    models::save_discriminator(fin.disc, dir / "checkpoints" / "disc.ckpt");
    io::write_text(dir / "report.json", fin.report.dump(2) + "\n");
}

void stage_finetune(const config::RunConfig& cfg, const fs::path& run_dir) {
    auto ds = load_data(run_dir);
    auto teacher = load_teacher(run_dir);
    const fs::path final_dir = latest_stage_dir(run_dir, "final", "finalize");
    auto gen = models::load_generator(final_dir / "checkpoints" / "gen.ckpt");
    auto disc = models::load_discriminator(final_dir / "checkpoints" / "disc.ckpt");
    const fs::path dir = new_stage_dir(run_dir, "finetune");
    snapshot_config(cfg, run_dir, dir);
    auto hist = pruneloop::finetune(gen, disc, teacher, ds, cfg);
    fs::create_directories(dir / "checkpoints");
    models::save_generator(gen, dir / "checkpoints" / "gen.ckpt");
    models::save_discriminator(disc, dir / "checkpoints" / "disc.ckpt");
    std::ostringstream csv;
    csv << "step,loss_G,loss_D,l1,kd\n";
    csv.precision(9);
    for (std::size_t i = 0; i < hist.g_loss.size(); ++i)
        csv << i << ',' << hist.g_loss[i] << ',' << hist.d_loss[i] << ',' << hist.l1[i] << ','
            << hist.kd[i] << "\n";
    io::write_text(dir / "history.csv", csv.str());
}

void stage_eval(const config::RunConfig& cfg, const fs::path& run_dir) {
    auto ds = load_data(run_dir);
    auto enc = load_enc(run_dir);
    auto teacher = load_teacher(run_dir);
    auto pruned = load_pruned(run_dir);
    const datagen::Dataset& split = ds.test.size() >= 2 ? ds.test : ds.val;
    if (split.size() < 2) throw DataError("eval needs a split with at least 2 samples");
    const fs::path dir = new_stage_dir(run_dir, "eval");
    snapshot_config(cfg, run_dir, dir);
    io::json j = {{"split", ds.test.size() >= 2 ? "test" : "val"},
                  {"teacher", evalreport::eval_generator(teacher, split, enc).to_json()},
                  {"pruned", evalreport::eval_generator(pruned, split, enc).to_json()}};
    if (highest_version(run_dir / "final") > 0) {
        auto report = io::json::parse(
            io::read_text(latest_stage_dir(run_dir, "final", "finalize") / "report.json"));
        j["compression_ratio"] = report["generator"]["compression_ratio"];
    }
    io::write_text(dir / "eval.json", j.dump(2) + "\n");
}

void stage_report(const config::RunConfig& cfg, const fs::path& run_dir) {
    auto ds = load_data(run_dir);
    auto enc = load_enc(run_dir);
    auto teacher = load_teacher(run_dir);
    auto pruned = load_pruned(run_dir);
    const fs::path prune_dir = latest_stage_dir(run_dir, "prune", "prune");
    auto history = pruneloop::history_from_csv(io::read_text(prune_dir / "history.csv"));
    auto final_report = io::json::parse(
        io::read_text(latest_stage_dir(run_dir, "final", "finalize") / "report.json"));

    const fs::path dir = new_stage_dir(run_dir, "report");
    snapshot_config(cfg, run_dir, dir);
    evalreport::write_loss_curves_svg(history, dir / "curves.svg");

    // Neighborhood structure before and after pruning, same encoder.
    auto kind = manifold::sim_from_string(cfg.index.similarity);
    auto idx_orig = manifold::build_index(manifold::embed_predictions(teacher, ds.train, enc),
                                          cfg.index.k, kind);
    auto idx_pruned = manifold::build_index(manifold::embed_predictions(pruned, ds.train, enc),
                                            cfg.index.k, kind);
    std::vector<int> centers;
    for (int i = 0; i < std::min(6, ds.train.size()); ++i) centers.push_back(ds.train.samples[static_cast<std::size_t>(i)].id);
    evalreport::write_neighborhood_grid_png(ds.train, idx_orig, centers,
                                            dir / "neighborhood_original.png");
    evalreport::write_neighborhood_grid_png(ds.train, idx_pruned, centers,
                                            dir / "neighborhood_pruned.png");
    evalreport::write_prediction_grid_png(pruned, ds.train, centers, dir / "predictions.png");

    double overlap = 0.0;
    for (int id : idx_orig.ids) {
        int hit = 0;
        for (const auto& a : idx_orig.of(id))
            for (const auto& b : idx_pruned.of(id))
                if (a.id == b.id) ++hit;
        overlap += static_cast<double>(hit) / idx_orig.k;
    }
    overlap /= idx_orig.ids.size();

    const datagen::Dataset& split = ds.test.size() >= 2 ? ds.test : ds.val;
    evalreport::AblationRow row;
    row.variant = "current";
    if (split.size() >= 2) {
        auto ev = evalreport::eval_generator(pruned, split, enc);
        row.frechet = ev.frechet;
        row.l1 = ev.l1;
    }
    row.compression_ratio = final_report["generator"]["compression_ratio"].get<double>();
    evalreport::write_ablation_table({row}, dir / "ablation.md", dir / "ablation.csv");

    io::json summary = {{"neighborhood_overlap_original_vs_pruned", overlap},
                        {"compression_ratio", row.compression_ratio},
                        {"steps", history.size()}};
    io::write_text(dir / "summary.json", summary.dump(2) + "\n");
}

void stage_ablate(const config::RunConfig& cfg, const fs::path& run_dir) {
    auto ds = load_data(run_dir);
    auto enc = load_enc(run_dir);
    auto teacher = load_teacher(run_dir);
    auto teacher_disc = load_teacher_disc(run_dir);
    auto idx = manifold::load_index(latest_stage_dir(run_dir, "index", "build-index") /
                                    "index.bin");
    const datagen::Dataset& split = ds.test.size() >= 2 ? ds.test : ds.val;
    if (split.size() < 2) throw DataError("ablate needs a split with at least 2 samples");

    const fs::path dir = new_stage_dir(run_dir, "ablate");
    snapshot_config(cfg, run_dir, dir);
    std::vector<evalreport::AblationRow> rows;
    for (const auto& [name, toggles] : ablation_ladder()) {
        config::RunConfig vcfg = cfg;
        vcfg.ablation = toggles;
        const fs::path vdir = dir / name;
        fs::create_directories(vdir);
        auto res = pruneloop::prune(teacher, teacher_disc, idx, ds.train, vcfg);
        auto fin = pruneloop::finalize(res.agent_g, res.agent_d, teacher, teacher_disc, vcfg);
        pruneloop::finetune(fin.gen, fin.disc, teacher, ds, vcfg);
        io::write_text(vdir / "history.csv", pruneloop::history_to_csv(res.history));
        io::write_text(vdir / "report.json", fin.report.dump(2) + "\n");
        auto ev = evalreport::eval_generator(fin.gen, split, enc);
        io::write_text(vdir / "eval.json", ev.to_json().dump(2) + "\n");
        rows.push_back({name, ev.frechet, ev.l1,
                        fin.report["generator"]["compression_ratio"].get<double>()});
    }
    evalreport::write_ablation_table(rows, dir / "ablation.md", dir / "ablation.csv");
}

}  // namespace

void run(const CommandSpec& spec) {
    if (spec.run_dir.empty()) throw ConfigError("--run-dir is required");
    const config::RunConfig cfg = load_effective_config(spec);
    RunLock lock(spec.run_dir);
    const std::string& c = spec.subcommand;
    if (c == "gen-data") stage_gen_data(cfg, spec.run_dir);
    else if (c == "pretrain") stage_pretrain(cfg, spec.run_dir);
    else if (c == "train-encoder") stage_train_encoder(cfg, spec.run_dir);
    else if (c == "build-index") stage_build_index(cfg, spec.run_dir);
    else if (c == "prune") stage_prune(cfg, spec.run_dir);
    else if (c == "finalize") stage_finalize(cfg, spec.run_dir);
    else if (c == "finetune") stage_finetune(cfg, spec.run_dir);
    else if (c == "eval") stage_eval(cfg, spec.run_dir);
    else if (c == "report") stage_report(cfg, spec.run_dir);
    else if (c == "ablate") stage_ablate(cfg, spec.run_dir);
    else throw ConfigError("unknown subcommand: " + c);
}

}  // namespace mgc::pipeline
