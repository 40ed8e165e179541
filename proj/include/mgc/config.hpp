#pragma once

#include <cstdint>
#include <string>

namespace mgc::config {

// Every knob of the pipeline in one validated record. Sections mirror the
// config file layout; all seeds are explicit (no wall-clock seeding).
struct RunConfig {
    struct Data {
        int n_train = 128, n_val = 32, n_test = 32;
        int image_size = 32;
        std::uint64_t seed = 1;
    } data;

    struct Model {
        std::string style = "unet";  // unet | resnet
        int g_base_width = 16, g_depth = 3;
        int d_base_width = 16, d_depth = 3;
        float dropout = 0.5f;
        int embedding_dim = 64;
    } model;

    struct Pretrain {
        int steps = 600, batch = 4;
        float lr = 2e-4f, beta1 = 0.5f;
        float l1_weight = 10.0f;
        float val_l1_warn = 0.15f;
        std::uint64_t seed = 2;
    } pretrain;

    struct Encoder {
        int steps = 300, batch_pairs = 8;
        float lr = 1e-3f;
        float temperature = 0.1f;
        std::uint64_t seed = 3;
    } encoder;

    struct Index {
        int k = 5;
        bool include_center = true;
        std::string similarity = "plain";  // plain | absolute
        std::string source = "encoder";    // encoder | oracle-factors
    } index;

    struct Prune {
        float lambda1 = 3.0f, lambda2 = 0.1f;
        double p = 0.5;
        float tau = 1.0f;
        int steps = 600;
        float lr = 1e-3f, beta1 = 0.9f, beta2 = 0.999f, weight_decay = 1e-4f;
        std::string flavor = "hinge";  // hinge | lsgan
        std::uint64_t seed = 4;
    } prune;

    struct Ablation {
        bool prune_d = true;
        bool use_agents = true;
        bool exchange_feedback = true;
        bool manifold_real_set = true;
        bool use_kd = true;
    } ablation;

    struct Finetune {
        int steps = 300, batch = 4;
        float lr = 2e-4f, beta1 = 0.5f;
        float l1_weight = 10.0f;
        float lambda_content = 50.0f, lambda_texture = 10000.0f;
        std::uint64_t seed = 5;
    } finetune;
};

// TOML-subset parser: [section] headers, key = value, # comments, quoted
// strings, ints, floats, booleans. Unknown sections or keys are rejected.
RunConfig parse_config(const std::string& text);

// Applies one "section.key=value" override.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Cross-field validation (ranges, enum strings, toggle consistency).
void validate(const RunConfig& cfg);

// Fully-expanded snapshot, parseable by parse_config.
std::string to_toml(const RunConfig& cfg);

}  // namespace mgc::config
