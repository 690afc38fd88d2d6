#pragma once

#include <array>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "memgan/config.hpp"
#include "memgan/runner.hpp"

// Command-line front end: train / eval / interpolate / ablate. Configuration
// comes from an optional preset, an optional key=value file, and repeated
// --set overrides, applied in that order; common fields also have flags.

namespace memgan {

namespace detail {

inline void add_config_options(CLI::App* cmd, std::string& config_file, std::string& preset,
                               std::vector<std::string>& overrides) {
    cmd->add_option("--preset", preset, "named preset: ring8, shapes, fashion, large");
    cmd->add_option("--config", config_file, "key=value config file");
    cmd->add_option("--set", overrides, "config override key=value (repeatable)");
}

inline TrainConfig assemble_config(const std::string& config_file, const std::string& preset,
                                   const std::vector<std::string>& overrides,
                                   const std::vector<std::string>& flag_overrides) {
    TrainConfig cfg;
    if (!preset.empty()) apply_preset(cfg, preset);
    if (!config_file.empty()) load_config_file(cfg, config_file);
    for (const auto& s : overrides) apply_override(cfg, s);
    for (const auto& s : flag_overrides) apply_override(cfg, s);
    validate_config(cfg);
    return cfg;
}

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream stream(s);
    std::string item;
    while (std::getline(stream, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv) {
    CLI::App app{"von Mises-Fisher memory GAN: training, evaluation, and probes"};
    app.require_subcommand(1);

    // train ------------------------------------------------------------
    auto* train = app.add_subcommand("train", "run adversarial training");
    std::string train_config, train_preset;
    std::vector<std::string> train_sets;
    detail::add_config_options(train, train_config, train_preset, train_sets);
    std::vector<std::string> train_flags;
    for (const char* key : {"dataset", "out_dir", "seed", "iterations", "ablation", "n_slots",
                            "key_dim", "noise_dim", "top_k", "batch_size", "learning_rate",
                            "lambda", "eval_cadence"}) {
        train->add_option_function<std::string>(
            std::string("--") + key,
            [&train_flags, key](const std::string& v) {
                train_flags.push_back(std::string(key) + "=" + v);
            },
            std::string("config field ") + key);
    }

    // eval -------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "run probes on a frozen checkpoint");
    std::string eval_ckpt, eval_probes = "coverage,loglik,entropy";
    std::string eval_dataset, eval_out;
    std::uint64_t eval_seed = 1;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--probes", eval_probes,
                     "comma list of coverage,loglik,entropy,purity,neighbors (empty for none)");
    eval->add_option("--dataset", eval_dataset, "dataset spec override");
    eval->add_option("--out-dir", eval_out, "output directory override");
    eval->add_option("--probe-seed", eval_seed, "seed for probe sampling");

    // interpolate --------------------------------------------------------
    auto* interp = app.add_subcommand("interpolate", "key-space interpolation grid");
    std::string interp_ckpt, interp_slots, interp_out, interp_policy = "frozen";
    std::size_t interp_grid = 8;
    std::uint64_t interp_seed = 1;
    interp->add_option("--checkpoint", interp_ckpt, "checkpoint file")->required();
    interp->add_option("--slots", interp_slots, "four comma-separated slot indices");
    interp->add_option("--grid", interp_grid, "grid side length (>= 2)");
    interp->add_option("--z-policy", interp_policy, "frozen or corners");
    interp->add_option("--probe-seed", interp_seed, "seed for slot and noise draws");
    interp->add_option("--out-dir", interp_out, "output directory override");

    // ablate -------------------------------------------------------------
    auto* ablate = app.add_subcommand("ablate", "train every ablation variant");
    std::string ablate_config, ablate_preset, ablate_modes = "full,no_em,no_mcgn,no_memory";
    std::vector<std::string> ablate_sets;
    detail::add_config_options(ablate, ablate_config, ablate_preset, ablate_sets);
    ablate->add_option("--modes", ablate_modes, "comma list of variants to run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*train) {
            const TrainConfig cfg =
                detail::assemble_config(train_config, train_preset, train_sets, train_flags);
            const TrainArtifacts artifacts = run_train(cfg);
            std::cout << "metrics: " << artifacts.metrics_jsonl.string() << '\n'
                      << "checkpoint: " << artifacts.checkpoint.string() << '\n';
        } else if (*eval) {
            std::set<EvalProbe> probes;
            for (const auto& name : detail::split_csv(eval_probes))
                probes.insert(probe_from_string(name));
            const EvalArtifacts artifacts = run_eval(
                eval_ckpt, probes,
                eval_dataset.empty() ? std::nullopt : std::optional<std::string>(eval_dataset),
                eval_out.empty() ? std::nullopt : std::optional<std::string>(eval_out), eval_seed);
            std::cout << "results: " << artifacts.results_csv.string() << '\n';
            for (const auto& [name, value] : artifacts.values)
                std::cout << name << " = " << format_double(value) << '\n';
        } else if (*interp) {
            std::optional<std::array<std::size_t, 4>> slots;
            if (!interp_slots.empty()) {
                const auto parts = detail::split_csv(interp_slots);
                if (parts.size() != 4)
                    fail(ErrorCode::invalid_argument, "--slots needs exactly four indices");
                std::array<std::size_t, 4> arr{};
                for (std::size_t i = 0; i < 4; ++i)
                    arr[i] = detail::parse_size("slots", parts[i]);
                slots = arr;
            }
            ZPolicy policy;
            if (interp_policy == "frozen") policy = ZPolicy::frozen;
            else if (interp_policy == "corners") policy = ZPolicy::corners;
            else fail(ErrorCode::invalid_config, "z-policy must be frozen or corners");
            const InterpolateArtifacts artifacts = run_interpolate(
                interp_ckpt, slots, interp_grid, policy, interp_seed,
                interp_out.empty() ? std::nullopt : std::optional<std::string>(interp_out));
            std::cout << "grid: " << artifacts.grid_file.string() << '\n'
                      << "snapped: " << artifacts.snapped_csv.string() << '\n';
        } else if (*ablate) {
            const TrainConfig cfg =
                detail::assemble_config(ablate_config, ablate_preset, ablate_sets, {});
            std::vector<AblationMode> modes;
            for (const auto& name : detail::split_csv(ablate_modes))
                modes.push_back(ablation_from_string(name));
            if (modes.empty()) fail(ErrorCode::invalid_config, "--modes is empty");
            const auto all = run_ablate(cfg, modes);
            for (const auto& artifacts : all)
                std::cout << artifacts.metrics_jsonl.string() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace memgan
