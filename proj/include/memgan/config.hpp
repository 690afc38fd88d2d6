#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "memgan/datasets.hpp"
#include "memgan/error.hpp"
#include "memgan/gan.hpp"

// Experiment configuration: a flat key=value format with presets and override
// strings. The canonical form (sorted keys, shortest round-trip numbers,
// output paths excluded) is hashed into a fingerprint that heads every
// artifact file, so runs can be audited for exact reproduction.

namespace memgan {

struct TrainConfig {
    std::string dataset = "ring:modes=8,radius=1,std=0.05,n=8000";
    std::size_t n_slots = 128;
    std::size_t key_dim = 8;
    std::size_t noise_dim = 4;
    std::size_t top_k = 8;
    double kappa = 1.0;
    double beta = 1e-8;
    double epsilon = 1e-3;
    double alpha = 0.5;
    double lambda = 2e-6;
    std::size_t em_iters = 3;
    std::size_t batch_size = 64;
    double learning_rate = 2e-4;
    std::size_t iterations = 6000;
    std::uint64_t seed = 1;
    AblationMode ablation = AblationMode::full;
    std::size_t eval_cadence = 250;
    std::string out_dir = "out";
    std::size_t hidden = 64;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool non_saturating = false;
    bool lr_decay = false;
    std::size_t eval_samples = 1024;
    std::size_t heldout = 512;
    double coverage_sigmas = 3.0;
    double coverage_min_share = 0.02;

    MemoryParams memory_params() const {
        MemoryParams p;
        p.kappa = kappa;
        p.beta = beta;
        p.epsilon = epsilon;
        p.alpha = alpha;
        p.top_k = top_k;
        p.em_iters = em_iters;
        return p;
    }
};

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t out{};
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        fail(ErrorCode::invalid_config, key + ": expected a nonnegative integer, got '" + value + "'");
    return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    std::uint64_t out{};
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        fail(ErrorCode::invalid_config, key + ": expected a nonnegative integer, got '" + value + "'");
    return out;
}

inline double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double out = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return out;
    } catch (const std::exception&) {
        fail(ErrorCode::invalid_config, key + ": expected a real number, got '" + value + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    fail(ErrorCode::invalid_config, key + ": expected true/false, got '" + value + "'");
}

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Applies one `key=value` assignment; unknown keys and malformed values are
/// reported with the offending field name.
inline void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_real;
    using detail::parse_size;
    if (key == "dataset") cfg.dataset = value;
    else if (key == "n_slots") cfg.n_slots = parse_size(key, value);
    else if (key == "key_dim") cfg.key_dim = parse_size(key, value);
    else if (key == "noise_dim") cfg.noise_dim = parse_size(key, value);
    else if (key == "top_k") cfg.top_k = parse_size(key, value);
    else if (key == "kappa") cfg.kappa = parse_real(key, value);
    else if (key == "beta") cfg.beta = parse_real(key, value);
    else if (key == "epsilon") cfg.epsilon = parse_real(key, value);
    else if (key == "alpha") cfg.alpha = parse_real(key, value);
    else if (key == "lambda") cfg.lambda = parse_real(key, value);
    else if (key == "em_iters") cfg.em_iters = parse_size(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_size(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_real(key, value);
    else if (key == "iterations") cfg.iterations = parse_size(key, value);
    else if (key == "seed") cfg.seed = detail::parse_u64(key, value);
    else if (key == "ablation") cfg.ablation = ablation_from_string(value);
    else if (key == "eval_cadence") cfg.eval_cadence = parse_size(key, value);
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "hidden") cfg.hidden = parse_size(key, value);
    else if (key == "adam_beta1") cfg.adam_beta1 = parse_real(key, value);
    else if (key == "adam_beta2") cfg.adam_beta2 = parse_real(key, value);
    else if (key == "adam_eps") cfg.adam_eps = parse_real(key, value);
    else if (key == "non_saturating") cfg.non_saturating = parse_bool(key, value);
    else if (key == "lr_decay") cfg.lr_decay = parse_bool(key, value);
    else if (key == "eval_samples") cfg.eval_samples = parse_size(key, value);
    else if (key == "heldout") cfg.heldout = parse_size(key, value);
    else if (key == "coverage_sigmas") cfg.coverage_sigmas = parse_real(key, value);
    else if (key == "coverage_min_share") cfg.coverage_min_share = parse_real(key, value);
    else fail(ErrorCode::invalid_config, "unknown config key '" + key + "'");
}

/// Applies a `key=value` override string. Whitespace around key and value is
/// ignored.
inline void apply_override(TrainConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        fail(ErrorCode::invalid_config, "override '" + assignment + "' is not of the form key=value");
    apply_config_entry(cfg, detail::trim(assignment.substr(0, eq)),
                       detail::trim(assignment.substr(eq + 1)));
}

/// Parses a flat key=value config file. Blank lines and '#' comments are
/// ignored.
inline void load_config_file(TrainConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io_failure, "cannot open config file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::invalid_config,
                 path + ":" + std::to_string(lineno) + ": expected key=value");
        apply_config_entry(cfg, detail::trim(trimmed.substr(0, eq)),
                           detail::trim(trimmed.substr(eq + 1)));
    }
}

/// Named presets: desk-scale defaults for the ring and shapes benchmarks, and
/// the two published-scale settings.
inline void apply_preset(TrainConfig& cfg, const std::string& name) {
    if (name == "ring8") {
        cfg.dataset = "ring:modes=8,radius=1,std=0.05,n=8000";
        cfg.n_slots = 128;
        cfg.key_dim = 8;
        cfg.noise_dim = 4;
        cfg.top_k = 8;
        cfg.lambda = 2e-6;
        cfg.iterations = 6000;
        cfg.eval_cadence = 250;
    } else if (name == "shapes") {
        cfg.dataset = "shapes:side=8,n_per_class=500";
        cfg.n_slots = 256;
        cfg.key_dim = 16;
        cfg.noise_dim = 4;
        cfg.top_k = 16;
        cfg.lambda = 2e-6;
        cfg.iterations = 3000;
        cfg.eval_cadence = 250;
    } else if (name == "fashion") {
        cfg.dataset = "idx:images=train-images-idx3-ubyte,labels=train-labels-idx1-ubyte";
        cfg.n_slots = 4096;
        cfg.key_dim = 256;
        cfg.noise_dim = 2;
        cfg.top_k = 128;
        cfg.lambda = 0.01;
        cfg.iterations = 50000;
        cfg.eval_cadence = 1000;
        cfg.hidden = 256;
    } else if (name == "large") {
        cfg.dataset = "idx:images=train-images-idx3-ubyte,labels=train-labels-idx1-ubyte";
        cfg.n_slots = 16384;
        cfg.key_dim = 512;
        cfg.noise_dim = 16;
        cfg.top_k = 256;
        cfg.lambda = 2e-6;
        cfg.iterations = 100000;
        cfg.eval_cadence = 1000;
        cfg.hidden = 512;
        cfg.lr_decay = true;
    } else {
        fail(ErrorCode::invalid_config, "unknown preset '" + name + "'");
    }
}

/// Canonical key=value text: sorted keys, shortest round-trip numbers. Output
/// locations are excluded so two runs of the same experiment hash identically
/// regardless of where their artifacts land.
inline std::string canonical_config_text(const TrainConfig& cfg) {
    std::map<std::string, std::string> kv;
    kv["dataset"] = cfg.dataset;
    kv["n_slots"] = std::to_string(cfg.n_slots);
    kv["key_dim"] = std::to_string(cfg.key_dim);
    kv["noise_dim"] = std::to_string(cfg.noise_dim);
    kv["top_k"] = std::to_string(cfg.top_k);
    kv["kappa"] = format_double(cfg.kappa);
    kv["beta"] = format_double(cfg.beta);
    kv["epsilon"] = format_double(cfg.epsilon);
    kv["alpha"] = format_double(cfg.alpha);
    kv["lambda"] = format_double(cfg.lambda);
    kv["em_iters"] = std::to_string(cfg.em_iters);
    kv["batch_size"] = std::to_string(cfg.batch_size);
    kv["learning_rate"] = format_double(cfg.learning_rate);
    kv["iterations"] = std::to_string(cfg.iterations);
    kv["seed"] = std::to_string(cfg.seed);
    kv["ablation"] = to_string(cfg.ablation);
    kv["eval_cadence"] = std::to_string(cfg.eval_cadence);
    kv["hidden"] = std::to_string(cfg.hidden);
    kv["adam_beta1"] = format_double(cfg.adam_beta1);
    kv["adam_beta2"] = format_double(cfg.adam_beta2);
    kv["adam_eps"] = format_double(cfg.adam_eps);
    kv["non_saturating"] = cfg.non_saturating ? "true" : "false";
    kv["lr_decay"] = cfg.lr_decay ? "true" : "false";
    kv["eval_samples"] = std::to_string(cfg.eval_samples);
    kv["heldout"] = std::to_string(cfg.heldout);
    kv["coverage_sigmas"] = format_double(cfg.coverage_sigmas);
    kv["coverage_min_share"] = format_double(cfg.coverage_min_share);

    std::ostringstream out;
    for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
    return out.str();
}

/// Rebuilds a TrainConfig from canonical text (used when loading checkpoints).
inline TrainConfig config_from_canonical_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::invalid_config, "malformed canonical config line '" + line + "'");
        apply_config_entry(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

/// FNV-1a 64-bit over the canonical text, as 16 hex digits.
inline std::string config_fingerprint(const TrainConfig& cfg) {
    const std::string text = canonical_config_text(cfg);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[h & 0xf];
        h >>= 4;
    }
    return out;
}

/// Basic validity checks, reported with the offending field name.
inline void validate_config(const TrainConfig& cfg) {
    if (cfg.n_slots == 0) fail(ErrorCode::invalid_config, "n_slots: must be positive");
    if (cfg.key_dim == 0) fail(ErrorCode::invalid_config, "key_dim: must be positive");
    if (cfg.noise_dim == 0) fail(ErrorCode::invalid_config, "noise_dim: must be positive");
    if (cfg.top_k == 0 || cfg.top_k > cfg.n_slots)
        fail(ErrorCode::invalid_config, "top_k: must lie in [1, n_slots]");
    if (!(cfg.kappa > 0.0)) fail(ErrorCode::invalid_config, "kappa: must be positive");
    if (!(cfg.beta > 0.0)) fail(ErrorCode::invalid_config, "beta: must be positive");
    if (!(cfg.epsilon > 0.0 && cfg.epsilon < 0.5))
        fail(ErrorCode::invalid_config, "epsilon: must lie in (0, 0.5)");
    if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0))
        fail(ErrorCode::invalid_config, "alpha: must lie in (0, 1]");
    if (cfg.em_iters == 0) fail(ErrorCode::invalid_config, "em_iters: must be positive");
    if (cfg.batch_size == 0) fail(ErrorCode::invalid_config, "batch_size: must be positive");
    if (!(cfg.learning_rate > 0.0))
        fail(ErrorCode::invalid_config, "learning_rate: must be positive");
    if (cfg.eval_cadence == 0) fail(ErrorCode::invalid_config, "eval_cadence: must be positive");
    if (cfg.hidden == 0) fail(ErrorCode::invalid_config, "hidden: must be positive");
    if (cfg.eval_samples == 0) fail(ErrorCode::invalid_config, "eval_samples: must be positive");
    if (cfg.heldout == 0) fail(ErrorCode::invalid_config, "heldout: must be positive");
}

}  // namespace memgan
