#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mgc/autograd.hpp"
#include "mgc/datagen.hpp"
#include "mgc/io.hpp"
#include "mgc/nn.hpp"
#include "mgc/rng.hpp"

namespace mgc::models {

enum class NormKind { none, batch, instance };
enum class ActKind { none, relu, lrelu, tanh_out };
enum class Style { unet, resnet };

Style style_from_string(const std::string& s);
std::string to_string(Style s);

// One conv block of a feed-forward plan. `inputs` refer to earlier block names
// or "@input"; multiple inputs are channel-concatenated. `tied_mask` names the
// block whose mask also gates this block's output (residual tails), so the
// addition keeps its shape after physical extraction.
struct BlockCfg {
    std::string name;
    std::vector<std::string> inputs;
    int out_ch = 0;
    int k = 3, stride = 1, pad = 1;
    bool upsample = false;  // nearest 2x before the conv
    NormKind norm = NormKind::none;
    ActKind act = ActKind::relu;
    bool dropout = false;
    bool prunable = false;
    std::string tied_mask;
    std::string residual_from;  // add this block's activation after norm
};

struct Block {
    BlockCfg cfg;
    int in_ch = 0;
    ag::Var w, b;           // conv parameters
    ag::Var gamma, beta;    // affine norm parameters (batch/instance)
    Tensor run_mean, run_var;  // batch-norm running stats
};

// Mask slot name -> [C] vector (binary or soft). Blocks without an entry run unmasked.
using MaskMap = std::map<std::string, ag::Var>;

struct ConvNet {
    int in_ch = 3;
    std::vector<Block> blocks;

    // Runs the plan. `taps`, when given, collects post-activation outputs of
    // every block by name. Dropout draws from `drop_rng` when dropout_on.
    ag::Var forward(const ag::Var& x, const MaskMap* masks, bool training, bool dropout_on,
                    float dropout_rate, Rng* drop_rng,
                    std::map<std::string, ag::Var>* taps = nullptr) const;

    std::vector<ag::Var> params() const;
    std::vector<std::pair<std::string, ag::Var>> named_params() const;
    const Block& block(const std::string& name) const;
    bool has_block(const std::string& name) const;
    void set_requires_grad(bool on);
};

ConvNet build_net(const std::vector<BlockCfg>& plan, int in_ch, Rng& rng);

struct GeneratorNet {
    Style style = Style::unet;
    int base_width = 16;
    int depth = 3;  // down/up levels (unet) or residual blocks (resnet)
    float dropout_rate = 0.5f;
    int image_size = 32;
    ConvNet net;
};

struct DiscriminatorNet {
    int depth = 3;
    int base_width = 16;
    ConvNet net;
};

struct EncoderNet {
    int embedding_dim = 64;
    int image_size = 32;
    ConvNet trunk;
    ag::Var head_w, head_b;

    std::vector<ag::Var> params() const;
};

GeneratorNet build_generator(Style style, int base_width, int depth, float dropout_rate,
                             int image_size, Rng& rng);
DiscriminatorNet build_discriminator(int base_width, int depth, int image_size, Rng& rng);
EncoderNet build_encoder(int embedding_dim, int image_size, Rng& rng);

// x in [-1,1], output in [-1,1] (tanh head).
ag::Var generator_forward(const GeneratorNet& g, const ag::Var& x, const MaskMap* masks,
                          bool dropout_on, Rng* drop_rng, bool training = false,
                          std::map<std::string, ag::Var>* taps = nullptr);

// Patch score map over the channel-concatenated (x, y) pair, both in [-1,1].
ag::Var discriminator_forward(const DiscriminatorNet& d, const ag::Var& x, const ag::Var& y,
                              const MaskMap* masks, bool training = false);

// y in [0,1]; returns [N, embedding_dim].
ag::Var encoder_embed(const EncoderNet& e, const ag::Var& y);

// [0,1] <-> [-1,1] image range conversion.
Tensor to_gan_range(const Tensor& img01);
Tensor from_gan_range(const Tensor& imgpm1);
// Stack per-sample [3,H,W] images into [N,3,H,W].
Tensor stack_images(const std::vector<const Tensor*>& imgs);

struct PretrainConfig {
    int steps = 600;
    int batch = 4;
    float lr = 2e-4f;
    float beta1 = 0.5f, beta2 = 0.999f;
    float l1_weight = 10.0f;
    bool hinge = true;  // false -> least-squares
    std::uint64_t seed = 1;
    float val_l1_warn = 0.15f;
};

struct PretrainHistory {
    std::vector<float> d_loss, g_loss, l1;
};

// Adversarial pretraining of the uncompressed pair. Throws DivergenceError on
// non-finite losses.
PretrainHistory pretrain_gan(const datagen::DatasetBundle& ds, GeneratorNet& gen,
                             DiscriminatorNet& disc, const PretrainConfig& cfg);

struct EncoderTrainConfig {
    int steps = 300;
    int batch_pairs = 8;
    float lr = 1e-3f;
    float temperature = 0.1f;
    std::uint64_t seed = 2;
};

// From-scratch contrastive training on target images (augmentation invariance).
// Throws DivergenceError if the embedding variance collapses below 1e-6.
void train_encoder(const datagen::DatasetBundle& ds, EncoderNet& enc,
                   const EncoderTrainConfig& cfg);

// Mean L1 between generated and ground-truth targets on a split ([-1,1] scale).
float eval_l1(const GeneratorNet& gen, const datagen::Dataset& split);

// Checkpoint round-trip. Reconstructs exact per-block widths, so extracted
// sub-networks survive the trip.
void save_convnet(const ConvNet& net, io::json extra_meta, const std::filesystem::path& path);
ConvNet load_convnet(const std::filesystem::path& path, io::json* meta_out = nullptr);

void save_generator(const GeneratorNet& g, const std::filesystem::path& path);
GeneratorNet load_generator(const std::filesystem::path& path);
void save_discriminator(const DiscriminatorNet& d, const std::filesystem::path& path);
DiscriminatorNet load_discriminator(const std::filesystem::path& path);
void save_encoder(const EncoderNet& e, const std::filesystem::path& path);
EncoderNet load_encoder(const std::filesystem::path& path);

std::uint64_t weights_checksum(const ConvNet& net);

}  // namespace mgc::models
