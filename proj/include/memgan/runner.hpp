#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memgan/config.hpp"
#include "memgan/datasets.hpp"
#include "memgan/error.hpp"
#include "memgan/eval.hpp"
#include "memgan/gan.hpp"
#include "memgan/memory.hpp"

// Orchestration: dataset instantiation from spec strings, self-contained
// checkpoints, and the train / eval / interpolate / ablate entry points used
// by the command-line tool.

namespace memgan {

namespace detail {

inline std::map<std::string, std::string> parse_spec_args(const std::string& spec,
                                                          const std::string& what) {
    std::map<std::string, std::string> args;
    std::size_t pos = 0;
    while (pos < spec.size()) {
        std::size_t comma = spec.find(',', pos);
        if (comma == std::string::npos) comma = spec.size();
        const std::string item = spec.substr(pos, comma - pos);
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::invalid_config, what + ": expected key=value, got '" + item + "'");
        args[item.substr(0, eq)] = item.substr(eq + 1);
        pos = comma + 1;
    }
    return args;
}

inline std::string spec_arg(const std::map<std::string, std::string>& args, const std::string& key,
                            const std::string& fallback) {
    const auto it = args.find(key);
    return it == args.end() ? fallback : it->second;
}

}  // namespace detail

/// Instantiates a dataset from a spec string:
///   ring:modes=8,radius=1,std=0.05,n=8000
///   shapes:side=8,n_per_class=500[,max_shift=2,max_rot=20]
///   idx:images=<path>[,labels=<path>]
inline Dataset make_dataset(const std::string& spec, std::uint64_t seed,
                            std::optional<std::size_t> n_override = std::nullopt) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon == std::string::npos ? spec.size() : colon);
    const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
    const auto args = detail::parse_spec_args(rest, "dataset");

    if (kind == "ring") {
        const std::size_t modes = detail::parse_size("modes", detail::spec_arg(args, "modes", "8"));
        const double radius = detail::parse_real("radius", detail::spec_arg(args, "radius", "1"));
        const double stddev = detail::parse_real("std", detail::spec_arg(args, "std", "0.05"));
        std::size_t n = detail::parse_size("n", detail::spec_arg(args, "n", "8000"));
        if (n_override) n = *n_override;
        return gaussian_ring(modes, radius, stddev, n, seed);
    }
    if (kind == "shapes") {
        const std::size_t side = detail::parse_size("side", detail::spec_arg(args, "side", "8"));
        std::size_t per_class =
            detail::parse_size("n_per_class", detail::spec_arg(args, "n_per_class", "500"));
        const std::size_t shift =
            detail::parse_size("max_shift", detail::spec_arg(args, "max_shift", "2"));
        const double rot = detail::parse_real("max_rot", detail::spec_arg(args, "max_rot", "20"));
        if (n_override) per_class = std::max<std::size_t>(1, *n_override / detail::kShapeClasses);
        return synthetic_shapes(side, per_class, seed, shift, rot);
    }
    if (kind == "idx") {
        const auto images = args.find("images");
        if (images == args.end())
            fail(ErrorCode::invalid_config, "dataset: idx spec needs images=<path>");
        const auto labels = args.find("labels");
        if (labels == args.end()) return load_idx(images->second);
        return load_idx(images->second, labels->second);
    }
    fail(ErrorCode::invalid_config, "dataset: unknown kind '" + kind + "'");
}

/// Training data plus a held-out split and the distance scale used by the
/// coverage probe (the generating std for the ring, otherwise the empirical
/// mean distance of training samples to their class centers).
struct DataBundle {
    Dataset train;
    Dataset heldout;
    double data_std = 0.0;
};

inline DataBundle make_data_bundle(const TrainConfig& cfg) {
    DataBundle bundle;
    const auto colon = cfg.dataset.find(':');
    const std::string kind =
        cfg.dataset.substr(0, colon == std::string::npos ? cfg.dataset.size() : colon);

    if (kind == "idx") {
        Dataset all = make_dataset(cfg.dataset, cfg.seed);
        const std::size_t held = std::min(cfg.heldout, all.size() / 2);
        const std::size_t train_n = all.size() - held;
        bundle.train.samples = Matrix(train_n, all.dim());
        bundle.heldout.samples = Matrix(held, all.dim());
        for (std::size_t i = 0; i < train_n; ++i)
            copy_into(all.samples.row(i), bundle.train.samples.row(i));
        for (std::size_t i = 0; i < held; ++i)
            copy_into(all.samples.row(train_n + i), bundle.heldout.samples.row(i));
        if (!all.labels.empty()) {
            bundle.train.labels.assign(all.labels.begin(),
                                       all.labels.begin() + static_cast<std::ptrdiff_t>(train_n));
            bundle.heldout.labels.assign(all.labels.begin() + static_cast<std::ptrdiff_t>(train_n),
                                         all.labels.end());
            // class-mean centers from the training split
            const std::size_t n_classes =
                *std::max_element(all.labels.begin(), all.labels.end()) + 1;
            bundle.train.mode_centers = Matrix(n_classes, all.dim(), 0.0);
            std::vector<std::size_t> counts(n_classes, 0);
            for (std::size_t i = 0; i < train_n; ++i) {
                counts[bundle.train.labels[i]] += 1;
                auto center = bundle.train.mode_centers.row(bundle.train.labels[i]);
                const auto row = bundle.train.samples.row(i);
                for (std::size_t d = 0; d < all.dim(); ++d) center[d] += row[d];
            }
            for (std::size_t k = 0; k < n_classes; ++k) {
                if (counts[k] == 0) continue;
                auto center = bundle.train.mode_centers.row(k);
                for (auto& v : center) v /= static_cast<double>(counts[k]);
            }
        }
    } else {
        bundle.train = make_dataset(cfg.dataset, mix_seed(cfg.seed, 10));
        bundle.heldout = make_dataset(cfg.dataset, mix_seed(cfg.seed, 11), cfg.heldout);
    }

    if (kind == "ring") {
        const auto args = detail::parse_spec_args(
            cfg.dataset.substr(cfg.dataset.find(':') + 1), "dataset");
        bundle.data_std = detail::parse_real("std", detail::spec_arg(args, "std", "0.05"));
    } else if (bundle.train.mode_centers.rows > 0 && !bundle.train.labels.empty()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < bundle.train.size(); ++i) {
            acc += std::sqrt(squared_distance(
                bundle.train.samples.row(i),
                bundle.train.mode_centers.row(bundle.train.labels[i])));
        }
        bundle.data_std = acc / static_cast<double>(std::max<std::size_t>(1, bundle.train.size()));
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
    TrainConfig config;
    std::string fingerprint;
    GanModel model;
    MemoryState memory;
};

namespace detail {
inline constexpr char kCheckpointMagic[9] = "MGCKPT01";
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    const std::uint64_t len = read_u64(in);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) fail(ErrorCode::truncated_file, "truncated string field");
    return s;
}
}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::io_failure, "cannot open " + path + " for writing");
    detail::write_magic(out, detail::kCheckpointMagic);
    detail::write_u32(out, detail::kCheckpointVersion);
    detail::write_string(out, ckpt.fingerprint);
    detail::write_string(out, canonical_config_text(ckpt.config));
    detail::write_u8(out, ckpt.model.mode == AblationMode::no_memory ? 1 : 0);
    ckpt.model.generator.save(out);
    ckpt.model.inference.save(out);
    if (ckpt.model.mode == AblationMode::no_memory) ckpt.model.plain_disc.save(out);
    save_memory(ckpt.memory, out);
    if (!out) fail(ErrorCode::io_failure, "checkpoint write failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_failure, "cannot open " + path);
    detail::expect_magic(in, detail::kCheckpointMagic, "checkpoint");
    if (detail::read_u32(in) != detail::kCheckpointVersion)
        fail(ErrorCode::incompatible_checkpoint, "unsupported checkpoint version");

    Checkpoint ckpt;
    ckpt.fingerprint = detail::read_string(in);
    ckpt.config = config_from_canonical_text(detail::read_string(in));
    const bool has_disc = detail::read_u8(in) != 0;
    ckpt.model.mode = ckpt.config.ablation;
    ckpt.model.lambda = ckpt.config.lambda;
    ckpt.model.non_saturating = ckpt.config.non_saturating;
    ckpt.model.clip_epsilon = ckpt.config.epsilon;
    ckpt.model.generator = Mlp::load(in);
    ckpt.model.inference = Mlp::load(in);
    if (has_disc) ckpt.model.plain_disc = Mlp::load(in);
    ckpt.memory = load_memory(in);

    // self-consistency between the config and the stored components
    if (ckpt.memory.key_dim() != ckpt.config.key_dim ||
        ckpt.memory.n_slots() != ckpt.config.n_slots ||
        ckpt.model.inference.out_dim() != ckpt.config.key_dim)
        fail(ErrorCode::incompatible_checkpoint,
             "checkpoint memory/network dimensions disagree with its config");
    if (slot_conditioned(ckpt.model.mode) &&
        ckpt.model.generator.in_dim() != ckpt.config.key_dim + ckpt.config.noise_dim)
        fail(ErrorCode::incompatible_checkpoint, "generator input does not match key/noise dims");
    return ckpt;
}

// ---------------------------------------------------------------------------
// Output locations

/// Root for relative output directories; override with MEMGAN_OUT_ROOT.
inline std::filesystem::path resolve_out_dir(const TrainConfig& cfg) {
    std::filesystem::path dir(cfg.out_dir);
    if (dir.is_absolute()) return dir;
    if (const char* root = std::getenv("MEMGAN_OUT_ROOT")) return std::filesystem::path(root) / dir;
    return dir;
}

namespace detail {

/// Loss evaluation without parameter updates, for the iteration-0 record.
inline GanLosses eval_losses(const GanModel& model, const MemoryState& mem,
                             const Matrix& real_probe, Rng& rng) {
    GanLosses losses;
    const std::size_t batch = real_probe.rows;
    if (model.mode == AblationMode::no_memory) {
        const double eps = model.clip_epsilon;
        const FakeBatch fake = plain_sample(model.generator, rng, batch);
        const auto er = plain_disc_eval(model.plain_disc.forward(real_probe), eps);
        const auto ef = plain_disc_eval(model.plain_disc.forward(fake.x), eps);
        for (double p : er.prob) losses.d_loss -= std::log(p);
        for (double p : ef.prob) losses.d_loss -= std::log(1.0 - p);
        for (double p : ef.prob)
            losses.g_loss += model.non_saturating ? -std::log(p) : std::log(1.0 - p);
        losses.d_loss /= static_cast<double>(batch);
        losses.g_loss /= static_cast<double>(batch);
        return losses;
    }
    const FakeBatch fake = slot_conditioned(model.mode)
                               ? mcgn_sample(model.generator, mem, rng, batch)
                               : plain_sample(model.generator, rng, batch);
    const double lambda = slot_conditioned(model.mode) ? model.lambda : 0.0;
    losses.d_loss = d_loss(mem, model.inference, real_probe, fake, lambda);
    losses.g_loss = g_loss(mem, model.inference, fake, lambda, model.non_saturating);
    losses.info_term = slot_conditioned(model.mode) ? info_term(mem, model.inference, fake) : 0.0;
    return losses;
}

/// Generates a fake sample batch for evaluation probes.
inline Matrix eval_fakes(const GanModel& model, const MemoryState& mem, std::size_t n, Rng& rng) {
    if (slot_conditioned(model.mode)) return mcgn_sample(model.generator, mem, rng, n).x;
    return plain_sample(model.generator, rng, n).x;
}

inline MetricsRecord make_record(const TrainConfig& cfg, const GanModel& model,
                                 const MemoryState& mem, const DataBundle& bundle,
                                 std::uint64_t iteration, const GanLosses& losses) {
    MetricsRecord rec;
    rec.iteration = iteration;
    rec.d_loss = losses.d_loss;
    rec.g_loss = losses.g_loss;
    rec.info_term = losses.info_term;
    rec.avg_biased_loglik = avg_biased_loglik(mem, model.inference, bundle.heldout.samples);
    rec.prior_entropy = prior_entropy(mem);
    rec.real_slot_fraction = real_slot_fraction(mem);
    if (bundle.train.mode_centers.rows > 0) {
        Rng probe_rng(mix_seed(cfg.seed, 2000 + iteration));
        const Matrix fakes = eval_fakes(model, mem, cfg.eval_samples, probe_rng);
        rec.mode_coverage = mode_coverage(fakes, bundle.train.mode_centers, bundle.data_std,
                                          cfg.coverage_sigmas, cfg.coverage_min_share)
                                .coverage;
    }
    return rec;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Entry points

struct TrainArtifacts {
    std::filesystem::path dir;
    std::filesystem::path metrics_jsonl;
    std::filesystem::path metrics_csv;
    std::filesystem::path checkpoint;
    std::vector<MetricsRecord> records;
};

inline TrainArtifacts run_train(const TrainConfig& cfg) {
    validate_config(cfg);
    const std::string fingerprint = config_fingerprint(cfg);
    const DataBundle bundle = make_data_bundle(cfg);
    if (bundle.train.size() < cfg.batch_size)
        fail(ErrorCode::invalid_config, "dataset: fewer samples than batch_size");

    MemoryState mem =
        init_memory(cfg.n_slots, cfg.key_dim, cfg.memory_params(), mix_seed(cfg.seed, 0));
    NetsConfig nets;
    nets.data_dim = bundle.train.dim();
    nets.key_dim = cfg.key_dim;
    nets.noise_dim = cfg.noise_dim;
    nets.hidden = cfg.hidden;
    nets.learning_rate = cfg.learning_rate;
    nets.adam_beta1 = cfg.adam_beta1;
    nets.adam_beta2 = cfg.adam_beta2;
    nets.adam_eps = cfg.adam_eps;
    nets.lambda = cfg.lambda;
    nets.non_saturating = cfg.non_saturating;
    nets.mode = cfg.ablation;
    GanModel model = make_gan_model(nets, cfg.seed);
    model.clip_epsilon = cfg.epsilon;

    TrainArtifacts artifacts;
    artifacts.dir = resolve_out_dir(cfg);
    std::error_code ec;
    std::filesystem::create_directories(artifacts.dir, ec);
    if (ec) fail(ErrorCode::io_failure, "cannot create " + artifacts.dir.string());
    artifacts.metrics_jsonl = artifacts.dir / "metrics.jsonl";
    artifacts.metrics_csv = artifacts.dir / "metrics.csv";
    artifacts.checkpoint = artifacts.dir / "checkpoint.ckpt";

    std::ofstream jsonl(artifacts.metrics_jsonl);
    std::ofstream csv(artifacts.metrics_csv);
    if (!jsonl || !csv) fail(ErrorCode::io_failure, "cannot open metrics files for writing");
    write_metrics_header_jsonl(jsonl, fingerprint);
    write_metrics_header_csv(csv, fingerprint);

    const auto emit = [&](const MetricsRecord& rec) {
        write_metrics_record_jsonl(jsonl, rec);
        write_metrics_record_csv(csv, rec);
        artifacts.records.push_back(rec);
    };
    const auto save = [&]() {
        Checkpoint ckpt{cfg, fingerprint, model, mem};
        save_checkpoint(ckpt, artifacts.checkpoint.string());
    };

    {
        // initial record before any update
        Rng rng0(mix_seed(cfg.seed, 1000));
        const std::size_t probe_n = std::min(cfg.batch_size, bundle.heldout.size());
        Matrix probe(probe_n, bundle.heldout.dim());
        for (std::size_t i = 0; i < probe_n; ++i)
            copy_into(bundle.heldout.samples.row(i), probe.row(i));
        const GanLosses losses = detail::eval_losses(model, mem, probe, rng0);
        emit(detail::make_record(cfg, model, mem, bundle, 0, losses));
    }

    Rng rng_data(mix_seed(cfg.seed, 1));
    Rng rng_train(mix_seed(cfg.seed, 2));
    const double rate0 = cfg.learning_rate;
    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        if (cfg.lr_decay) {
            const double frac = static_cast<double>(it - 1) / static_cast<double>(cfg.iterations);
            model.opt_gen.rate = rate0 * (1.0 - frac);
            model.opt_disc.rate = rate0 * (1.0 - frac);
        }
        Matrix batch(cfg.batch_size, bundle.train.dim());
        for (std::size_t b = 0; b < cfg.batch_size; ++b)
            copy_into(bundle.train.samples.row(rng_data.below(bundle.train.size())), batch.row(b));
        const GanLosses losses = train_step(model, mem, batch, rng_train);
        if (it % cfg.eval_cadence == 0 || it == cfg.iterations) {
            emit(detail::make_record(cfg, model, mem, bundle, it, losses));
            save();
        }
    }
    if (cfg.iterations == 0) save();

    if (!jsonl || !csv) fail(ErrorCode::io_failure, "metrics write failed");
    return artifacts;
}

/// Evaluation probes runnable on a frozen checkpoint.
enum class EvalProbe : std::uint8_t { coverage, loglik, entropy, purity, neighbors };

inline EvalProbe probe_from_string(const std::string& s) {
    if (s == "coverage") return EvalProbe::coverage;
    if (s == "loglik") return EvalProbe::loglik;
    if (s == "entropy") return EvalProbe::entropy;
    if (s == "purity") return EvalProbe::purity;
    if (s == "neighbors") return EvalProbe::neighbors;
    fail(ErrorCode::invalid_config, "unknown probe '" + s + "'");
}

struct EvalArtifacts {
    std::filesystem::path results_csv;
    std::map<std::string, double> values;
};

inline EvalArtifacts run_eval(const std::string& checkpoint_path,
                              const std::set<EvalProbe>& probes,
                              const std::optional<std::string>& dataset_override = std::nullopt,
                              const std::optional<std::string>& out_dir_override = std::nullopt,
                              std::uint64_t probe_seed = 1) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    TrainConfig cfg = ckpt.config;
    if (dataset_override) cfg.dataset = *dataset_override;
    if (out_dir_override) cfg.out_dir = *out_dir_override;

    const DataBundle bundle = make_data_bundle(cfg);
    if (bundle.train.dim() != ckpt.model.inference.in_dim())
        fail(ErrorCode::incompatible_checkpoint,
             "dataset dimension " + std::to_string(bundle.train.dim()) +
                 " does not match the checkpointed networks (" +
                 std::to_string(ckpt.model.inference.in_dim()) + ")");

    EvalArtifacts artifacts;
    const std::filesystem::path dir = resolve_out_dir(cfg);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorCode::io_failure, "cannot create " + dir.string());
    artifacts.results_csv = dir / "eval.csv";

    std::ofstream out(artifacts.results_csv);
    if (!out) fail(ErrorCode::io_failure, "cannot open " + artifacts.results_csv.string());
    out << "# config_fingerprint=" << ckpt.fingerprint << '\n';
    out << "probe,value\n";

    Rng rng(mix_seed(probe_seed, 3000));
    const auto record = [&](const std::string& name, double value) {
        artifacts.values[name] = value;
        out << name << ',' << format_double(value) << '\n';
    };

    if (probes.count(EvalProbe::coverage)) {
        if (bundle.train.mode_centers.rows == 0)
            fail(ErrorCode::invalid_config, "coverage probe needs a dataset with mode centers");
        const Matrix fakes = detail::eval_fakes(ckpt.model, ckpt.memory, cfg.eval_samples, rng);
        record("coverage", mode_coverage(fakes, bundle.train.mode_centers, bundle.data_std,
                                         cfg.coverage_sigmas, cfg.coverage_min_share)
                               .coverage);
    }
    if (probes.count(EvalProbe::loglik))
        record("loglik", avg_biased_loglik(ckpt.memory, ckpt.model.inference,
                                           bundle.heldout.samples));
    if (probes.count(EvalProbe::entropy)) record("entropy", prior_entropy(ckpt.memory));
    if (probes.count(EvalProbe::purity)) {
        if (bundle.heldout.labels.empty())
            fail(ErrorCode::invalid_config, "purity probe needs a labeled dataset");
        const Matrix queries = ckpt.model.inference.forward(bundle.heldout.samples);
        record("purity", cluster_purity(ckpt.memory, queries, bundle.heldout.labels));
    }
    if (probes.count(EvalProbe::neighbors)) {
        const std::size_t n_gen = 8;
        const Matrix fakes = detail::eval_fakes(ckpt.model, ckpt.memory, n_gen, rng);
        std::ofstream nout(dir / "neighbors.csv");
        if (!nout) fail(ErrorCode::io_failure, "cannot open neighbors.csv");
        nout << "# config_fingerprint=" << ckpt.fingerprint << '\n';
        nout << "generated,rank,train_index,score\n";
        for (std::size_t g = 0; g < fakes.rows; ++g) {
            const NeighborResult nn = nearest_training_neighbors(
                ckpt.model.inference, fakes.row(g), bundle.train.samples, 7);
            for (std::size_t r = 0; r < nn.indices.size(); ++r)
                nout << g << ',' << r << ',' << nn.indices[r] << ','
                     << format_double(nn.scores[r]) << '\n';
        }
        record("neighbors", static_cast<double>(n_gen));
    }
    if (!out) fail(ErrorCode::io_failure, "eval write failed");
    return artifacts;
}

struct InterpolateArtifacts {
    std::filesystem::path grid_file;
    std::filesystem::path snapped_csv;
    std::array<std::size_t, 4> slots{};
    InterpolationGrid grid;
};

/// Written real slots whose own key wins the posterior argmax; these are the
/// corners for which snapping is exact.
inline std::vector<std::size_t> self_snapping_real_slots(const MemoryState& mem) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mem.n_slots(); ++i) {
        if (!mem.values[i] || !mem.written(i)) continue;
        std::vector<double> key(mem.keys.row(i).begin(), mem.keys.row(i).end());
        const std::vector<double> post = posterior_exact(mem, Query(std::move(key)));
        const std::size_t best = static_cast<std::size_t>(
            std::max_element(post.begin(), post.end()) - post.begin());
        if (best == i) out.push_back(i);
    }
    return out;
}

inline InterpolateArtifacts run_interpolate(
    const std::string& checkpoint_path, const std::optional<std::array<std::size_t, 4>>& slots_opt,
    std::size_t grid, ZPolicy z_policy, std::uint64_t probe_seed,
    const std::optional<std::string>& out_dir_override = std::nullopt) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    if (!slot_conditioned(ckpt.model.mode))
        fail(ErrorCode::invalid_config, "interpolation needs a slot-conditioned generator");
    TrainConfig cfg = ckpt.config;
    if (out_dir_override) cfg.out_dir = *out_dir_override;

    std::array<std::size_t, 4> slots{};
    if (slots_opt) {
        slots = *slots_opt;
        for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = a + 1; b < 4; ++b)
                if (slots[a] == slots[b])
                    fail(ErrorCode::invalid_argument, "interpolation slots must be distinct");
    } else {
        std::vector<std::size_t> pool = self_snapping_real_slots(ckpt.memory);
        if (pool.size() < 4) {
            pool.clear();
            for (std::size_t i = 0; i < ckpt.memory.n_slots(); ++i)
                if (ckpt.memory.values[i] && ckpt.memory.written(i)) pool.push_back(i);
        }
        if (pool.size() < 4)
            fail(ErrorCode::insufficient_real_slots,
                 "interpolation needs at least 4 written real slots");
        Rng rng(mix_seed(probe_seed, 7777));
        for (std::size_t a = 0; a < 4; ++a) {
            const std::size_t pick = a + rng.below(pool.size() - a);
            std::swap(pool[a], pool[pick]);
            slots[a] = pool[a];
        }
    }

    InterpolateArtifacts artifacts;
    artifacts.slots = slots;
    Rng z_rng(mix_seed(probe_seed, 7778));
    artifacts.grid = interpolate_keys(ckpt.memory, ckpt.model.generator, slots, grid, z_policy,
                                      z_rng);

    const std::filesystem::path dir = resolve_out_dir(cfg);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorCode::io_failure, "cannot create " + dir.string());

    const std::size_t dim = artifacts.grid.samples.cols;
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
    if (side * side == dim && side >= 2) {
        artifacts.grid_file = dir / "grid.pgm";
        std::ofstream out(artifacts.grid_file);
        if (!out) fail(ErrorCode::io_failure, "cannot open grid.pgm");
        write_grid_pgm(out, artifacts.grid, side, ckpt.fingerprint);
    } else {
        artifacts.grid_file = dir / "grid_points.csv";
        std::ofstream out(artifacts.grid_file);
        if (!out) fail(ErrorCode::io_failure, "cannot open grid_points.csv");
        write_grid_csv(out, artifacts.grid, ckpt.fingerprint);
    }

    artifacts.snapped_csv = dir / "snapped_slots.csv";
    std::ofstream snap(artifacts.snapped_csv);
    if (!snap) fail(ErrorCode::io_failure, "cannot open snapped_slots.csv");
    snap << "# config_fingerprint=" << ckpt.fingerprint << '\n';
    snap << "row,col,slot\n";
    for (std::size_t i = 0; i < grid; ++i)
        for (std::size_t j = 0; j < grid; ++j)
            snap << i << ',' << j << ',' << artifacts.grid.snapped[i * grid + j] << '\n';
    return artifacts;
}

/// Runs the configured experiment once per ablation mode, each in its own
/// subdirectory of out_dir.
inline std::vector<TrainArtifacts> run_ablate(const TrainConfig& base,
                                              const std::vector<AblationMode>& modes) {
    std::vector<TrainArtifacts> all;
    for (const AblationMode mode : modes) {
        TrainConfig cfg = base;
        cfg.ablation = mode;
        cfg.out_dir = (std::filesystem::path(base.out_dir) / to_string(mode)).string();
        all.push_back(run_train(cfg));
    }
    return all;
}

}  // namespace memgan
