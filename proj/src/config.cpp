#include "mgc/config.hpp"

#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "mgc/errors.hpp"

namespace mgc::config {

namespace {

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("expected an integer for " + key + ", got '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("expected an unsigned integer for " + key + ", got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("expected a number for " + key + ", got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("expected true/false for " + key + ", got '" + v + "'");
}

std::string unquote(const std::string& key, const std::string& v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
        return v.substr(1, v.size() - 2);
    // Bare words are accepted for enum-like values.
    if (v.find('"') != std::string::npos)
        throw ConfigError("malformed string for " + key + ": " + v);
    return v;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"data.n_train", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.n_train = to_int(k, v); }},
        {"data.n_val", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.n_val = to_int(k, v); }},
        {"data.n_test", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.n_test = to_int(k, v); }},
        {"data.image_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.image_size = to_int(k, v); }},
        {"data.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.seed = to_u64(k, v); }},
        {"model.style", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.style = unquote(k, v); }},
        {"model.g_base_width", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.g_base_width = to_int(k, v); }},
        {"model.g_depth", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.g_depth = to_int(k, v); }},
        {"model.d_base_width", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.d_base_width = to_int(k, v); }},
        {"model.d_depth", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.d_depth = to_int(k, v); }},
        {"model.dropout", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.dropout = static_cast<float>(to_double(k, v)); }},
        {"model.embedding_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.model.embedding_dim = to_int(k, v); }},
        {"pretrain.steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.steps = to_int(k, v); }},
        {"pretrain.batch", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.batch = to_int(k, v); }},
        {"pretrain.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.lr = static_cast<float>(to_double(k, v)); }},
        {"pretrain.beta1", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.beta1 = static_cast<float>(to_double(k, v)); }},
        {"pretrain.l1_weight", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.l1_weight = static_cast<float>(to_double(k, v)); }},
        {"pretrain.val_l1_warn", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.val_l1_warn = static_cast<float>(to_double(k, v)); }},
        {"pretrain.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain.seed = to_u64(k, v); }},
        {"encoder.steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder.steps = to_int(k, v); }},
        {"encoder.batch_pairs", [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder.batch_pairs = to_int(k, v); }},
        {"encoder.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder.lr = static_cast<float>(to_double(k, v)); }},
        {"encoder.temperature", [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder.temperature = static_cast<float>(to_double(k, v)); }},
        {"encoder.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder.seed = to_u64(k, v); }},
        {"index.k", [](RunConfig& c, const std::string& k, const std::string& v) { c.index.k = to_int(k, v); }},
        {"index.include_center", [](RunConfig& c, const std::string& k, const std::string& v) { c.index.include_center = to_bool(k, v); }},
        {"index.similarity", [](RunConfig& c, const std::string& k, const std::string& v) { c.index.similarity = unquote(k, v); }},
        {"index.source", [](RunConfig& c, const std::string& k, const std::string& v) { c.index.source = unquote(k, v); }},
        {"prune.lambda1", [](RunConfig& c, const std::string& k, const std::string& v) { c.prune.lambda1 = static_cast<float>(to_double(k, v)); }},
        {"prune.lambda2", [](RunConfig& c, const std::string& k, const std::string& v) { c.prune.lambda2 = static_cast<float>(to_double(k, v)); }},
        {"prune.p", [](RunConfig& c, const std::string& k, const std::string& v) { c.prune.p = to_double(k, v); }},
        {"prune.tau", [](RunConfig& c, const std::string& k, const std::string& v) { c.prune.tau = static_cast<float>(to_double(k, v)); }},
        {"prune.steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.prune.steps = to_int(k, v); }},
        {"prune.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.prune.lr = static_cast<float>(to_double(k, v)); }},
        {"prune.beta1", [](RunConfig& c, const std::string& k, const std::string& v) { c.prune.beta1 = static_cast<float>(to_double(k, v)); }},
        {"prune.beta2", [](RunConfig& c, const std::string& k, const std::string& v) { c.prune.beta2 = static_cast<float>(to_double(k, v)); }},
        {"prune.weight_decay", [](RunConfig& c, const std::string& k, const std::string& v) { c.prune.weight_decay = static_cast<float>(to_double(k, v)); }},
        {"prune.flavor", [](RunConfig& c, const std::string& k, const std::string& v) { c.prune.flavor = unquote(k, v); }},
        {"prune.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.prune.seed = to_u64(k, v); }},
        {"ablation.prune_d", [](RunConfig& c, const std::string& k, const std::string& v) { c.ablation.prune_d = to_bool(k, v); }},
        {"ablation.use_agents", [](RunConfig& c, const std::string& k, const std::string& v) { c.ablation.use_agents = to_bool(k, v); }},
        {"ablation.exchange_feedback", [](RunConfig& c, const std::string& k, const std::string& v) { c.ablation.exchange_feedback = to_bool(k, v); }},
        {"ablation.manifold_real_set", [](RunConfig& c, const std::string& k, const std::string& v) { c.ablation.manifold_real_set = to_bool(k, v); }},
        {"ablation.use_kd", [](RunConfig& c, const std::string& k, const std::string& v) { c.ablation.use_kd = to_bool(k, v); }},
        {"finetune.steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.steps = to_int(k, v); }},
        {"finetune.batch", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.batch = to_int(k, v); }},
        {"finetune.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.lr = static_cast<float>(to_double(k, v)); }},
        {"finetune.beta1", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.beta1 = static_cast<float>(to_double(k, v)); }},
        {"finetune.l1_weight", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.l1_weight = static_cast<float>(to_double(k, v)); }},
        {"finetune.lambda_content", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.lambda_content = static_cast<float>(to_double(k, v)); }},
        {"finetune.lambda_texture", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.lambda_texture = static_cast<float>(to_double(k, v)); }},
        {"finetune.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune.seed = to_u64(k, v); }},
    };
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key: " + key);
    it->second(cfg, key, value);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("malformed section header at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("empty section name at line " + std::to_string(lineno));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("expected key = value at line " + std::to_string(lineno));
        if (section.empty()) throw ConfigError("key outside any section: " + key);
        set_key(cfg, section + "." + key, value);
    }
    return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be section.key=value, got '" + assignment + "'");
    const std::string key = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    if (key.empty() || value.empty())
        throw ConfigError("override must be section.key=value, got '" + assignment + "'");
    set_key(cfg, key, value);
}

void validate(const RunConfig& cfg) {
    if (cfg.data.image_size <= 0 || cfg.data.image_size % 4 != 0)
        throw ConfigError("data.image_size must be positive and divisible by 4");
    if (cfg.data.n_train <= 0) throw ConfigError("data.n_train must be positive");
    if (cfg.data.n_val < 0 || cfg.data.n_test < 0)
        throw ConfigError("split sizes must be non-negative");
    if (cfg.model.style != "unet" && cfg.model.style != "resnet")
        throw ConfigError("model.style must be unet or resnet");
    if (cfg.model.g_base_width < 2 || cfg.model.d_base_width < 2)
        throw ConfigError("base widths must be at least 2");
    if (cfg.model.g_depth < 1 || cfg.model.d_depth < 1)
        throw ConfigError("depths must be at least 1");
    if (cfg.model.dropout < 0.0f || cfg.model.dropout >= 1.0f)
        throw ConfigError("model.dropout must lie in [0,1)");
    if (cfg.model.embedding_dim < 2) throw ConfigError("model.embedding_dim must be at least 2");
    if (cfg.index.k < 1 || cfg.index.k >= cfg.data.n_train)
        throw ConfigError("index.k must satisfy 1 <= k < data.n_train");
    if (cfg.index.similarity != "plain" && cfg.index.similarity != "absolute")
        throw ConfigError("index.similarity must be plain or absolute");
    if (cfg.index.source != "encoder" && cfg.index.source != "oracle-factors")
        throw ConfigError("index.source must be encoder or oracle-factors");
    if (cfg.prune.lambda1 < 0.0f || cfg.prune.lambda2 < 0.0f)
        throw ConfigError("lambda1 and lambda2 must be non-negative");
    if (cfg.prune.p <= 0.0 || cfg.prune.p > 1.0)
        throw ConfigError("prune.p must lie in (0,1]");
    if (cfg.prune.tau <= 0.0f) throw ConfigError("prune.tau must be positive");
    if (cfg.prune.flavor != "hinge" && cfg.prune.flavor != "lsgan")
        throw ConfigError("prune.flavor must be hinge or lsgan");
    if (cfg.prune.steps < 0 || cfg.pretrain.steps < 0 || cfg.encoder.steps < 0 ||
        cfg.finetune.steps < 0)
        throw ConfigError("step counts must be non-negative");
    if (cfg.pretrain.batch < 1 || cfg.finetune.batch < 1 || cfg.encoder.batch_pairs < 1)
        throw ConfigError("batch sizes must be at least 1");
    if (cfg.ablation.exchange_feedback && !cfg.ablation.use_agents)
        throw ConfigError("ablation.exchange_feedback requires ablation.use_agents");
}

std::string to_toml(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "[data]\n"
       << "n_train = " << c.data.n_train << "\n"
       << "n_val = " << c.data.n_val << "\n"
       << "n_test = " << c.data.n_test << "\n"
       << "image_size = " << c.data.image_size << "\n"
       << "seed = " << c.data.seed << "\n\n";
    os << "[model]\n"
       << "style = \"" << c.model.style << "\"\n"
       << "g_base_width = " << c.model.g_base_width << "\n"
       << "g_depth = " << c.model.g_depth << "\n"
       << "d_base_width = " << c.model.d_base_width << "\n"
       << "d_depth = " << c.model.d_depth << "\n"
       << "dropout = " << c.model.dropout << "\n"
       << "embedding_dim = " << c.model.embedding_dim << "\n\n";
    os << "[pretrain]\n"
       << "steps = " << c.pretrain.steps << "\n"
       << "batch = " << c.pretrain.batch << "\n"
       << "lr = " << c.pretrain.lr << "\n"
       << "beta1 = " << c.pretrain.beta1 << "\n"
       << "l1_weight = " << c.pretrain.l1_weight << "\n"
       << "val_l1_warn = " << c.pretrain.val_l1_warn << "\n"
       << "seed = " << c.pretrain.seed << "\n\n";
    os << "[encoder]\n"
       << "steps = " << c.encoder.steps << "\n"
       << "batch_pairs = " << c.encoder.batch_pairs << "\n"
       << "lr = " << c.encoder.lr << "\n"
       << "temperature = " << c.encoder.temperature << "\n"
       << "seed = " << c.encoder.seed << "\n\n";
    os << "[index]\n"
       << "k = " << c.index.k << "\n"
       << "include_center = " << (c.index.include_center ? "true" : "false") << "\n"
       << "similarity = \"" << c.index.similarity << "\"\n"
       << "source = \"" << c.index.source << "\"\n\n";
    os << "[prune]\n"
       << "lambda1 = " << c.prune.lambda1 << "\n"
       << "lambda2 = " << c.prune.lambda2 << "\n"
       << "p = " << c.prune.p << "\n"
       << "tau = " << c.prune.tau << "\n"
       << "steps = " << c.prune.steps << "\n"
       << "lr = " << c.prune.lr << "\n"
       << "beta1 = " << c.prune.beta1 << "\n"
       << "beta2 = " << c.prune.beta2 << "\n"
       << "weight_decay = " << c.prune.weight_decay << "\n"
       << "flavor = \"" << c.prune.flavor << "\"\n"
       << "seed = " << c.prune.seed << "\n\n";
    os << "[ablation]\n"
       << "prune_d = " << (c.ablation.prune_d ? "true" : "false") << "\n"
       << "use_agents = " << (c.ablation.use_agents ? "true" : "false") << "\n"
       << "exchange_feedback = " << (c.ablation.exchange_feedback ? "true" : "false") << "\n"
       << "manifold_real_set = " << (c.ablation.manifold_real_set ? "true" : "false") << "\n"
       << "use_kd = " << (c.ablation.use_kd ? "true" : "false") << "\n\n";
    os << "[finetune]\n"
       << "steps = " << c.finetune.steps << "\n"
       << "batch = " << c.finetune.batch << "\n"
       << "lr = " << c.finetune.lr << "\n"
       << "beta1 = " << c.finetune.beta1 << "\n"
       << "l1_weight = " << c.finetune.l1_weight << "\n"
       << "lambda_content = " << c.finetune.lambda_content << "\n"
       << "lambda_texture = " << c.finetune.lambda_texture << "\n"
       << "seed = " << c.finetune.seed << "\n";
    return os.str();
}

}  // namespace mgc::config
