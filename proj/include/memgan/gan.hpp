#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memgan/error.hpp"
#include "memgan/linalg.hpp"
#include "memgan/memory.hpp"
#include "memgan/mlp.hpp"
#include "memgan/rng.hpp"

// Adversarial objective and training iteration. The discriminator is the
// inference network plus the memory (probability by mixture marginalization);
// the generator is conditioned on a sampled memory key concatenated with
// Gaussian noise. Memory statistics are updated by EM/allocation between the
// two gradient steps, never by gradient descent.

namespace memgan {

enum class AblationMode : std::uint8_t { full = 0, no_em = 1, no_mcgn = 2, no_memory = 3 };

inline std::string to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::full: return "full";
        case AblationMode::no_em: return "no_em";
        case AblationMode::no_mcgn: return "no_mcgn";
        case AblationMode::no_memory: return "no_memory";
    }
    return "full";
}

inline AblationMode ablation_from_string(const std::string& s) {
    if (s == "full") return AblationMode::full;
    if (s == "no_em") return AblationMode::no_em;
    if (s == "no_mcgn") return AblationMode::no_mcgn;
    if (s == "no_memory") return AblationMode::no_memory;
    fail(ErrorCode::invalid_config, "ablation: unknown mode '" + s + "'");
}

/// Does the generator condition on memory keys in this mode?
inline bool slot_conditioned(AblationMode mode) {
    return mode == AblationMode::full || mode == AblationMode::no_em;
}

/// One draw of the generator's latent input. `key` is a copy of the slot's
/// key at sampling time (the zero vector if the slot was never written).
struct LatentSample {
    std::vector<double> noise;
    std::size_t slot = 0;
    std::vector<double> key;
};

struct FakeBatch {
    Matrix x;                           // generated samples, one per row
    std::vector<LatentSample> latents;  // empty when the generator is unconditioned
};

struct GanLosses {
    double d_loss = 0.0;
    double g_loss = 0.0;
    double info_term = 0.0;
};

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

/// Draws slots and noise for a conditioned generator batch and assembles the
/// [K_c, z] input rows (key first).
inline Matrix build_mcgn_input(const MemoryState& state, Rng& rng, std::size_t batch_size,
                               std::size_t noise_dim, std::vector<LatentSample>& latents) {
    const std::size_t m = state.key_dim();
    Matrix input(batch_size, m + noise_dim);
    latents.resize(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
        LatentSample& ls = latents[b];
        ls.slot = sample_slot(state, rng);
        const auto key = state.keys.row(ls.slot);
        ls.key.assign(key.begin(), key.end());
        ls.noise.resize(noise_dim);
        for (auto& z : ls.noise) z = rng.normal();
        auto row = input.row(b);
        for (std::size_t i = 0; i < m; ++i) row[i] = ls.key[i];
        for (std::size_t i = 0; i < noise_dim; ++i) row[m + i] = ls.noise[i];
    }
    return input;
}

}  // namespace detail

/// Memory-conditional generation: per item, draw z ~ N(0, I) and a slot
/// c ~ P(c | v_c = 1), then run the generator on [K_c, z] (key first).
inline FakeBatch mcgn_sample(const Mlp& gen, const MemoryState& state, Rng& rng,
                             std::size_t batch_size) {
    const std::size_t m = state.key_dim();
    if (gen.in_dim() <= m)
        fail(ErrorCode::dimension_mismatch, "generator input must be key_dim + noise_dim");
    FakeBatch batch;
    const Matrix input =
        detail::build_mcgn_input(state, rng, batch_size, gen.in_dim() - m, batch.latents);
    batch.x = gen.forward(input);
    return batch;
}

/// Unconditioned generation (no_mcgn / no_memory): z ~ N(0, I) only.
inline FakeBatch plain_sample(const Mlp& gen, Rng& rng, std::size_t batch_size) {
    Matrix input(batch_size, gen.in_dim());
    for (auto& z : input.data) z = rng.normal();
    FakeBatch batch;
    batch.x = gen.forward(input);
    return batch;
}

// ---------------------------------------------------------------------------
// Objective terms

/// Mutual-information surrogate: the mean negative scaled cosine between each
/// sample's conditioning key and its query embedding. Bounded in [-kappa, kappa].
inline double info_term_from_queries(double kappa, const Matrix& queries,
                                     std::span<const LatentSample> latents) {
    if (queries.rows == 0) fail(ErrorCode::invalid_argument, "info term needs a nonempty batch");
    assert(queries.rows == latents.size());
    double acc = 0.0;
    for (std::size_t b = 0; b < queries.rows; ++b)
        acc += dot(std::span<const double>(latents[b].key), queries.row(b));
    const double value = -kappa * acc / static_cast<double>(queries.rows);
    assert(std::abs(value) <= kappa + 1e-9);
    return value;
}

inline double info_term(const MemoryState& state, const Mlp& inf_net, const FakeBatch& fake) {
    const Matrix queries = inf_net.forward(fake.x);
    return info_term_from_queries(state.params.kappa, queries, fake.latents);
}

namespace detail {

/// Discriminative evaluation of a query batch against the memory.
struct DiscEval {
    std::vector<double> raw;   // pre-clip marginal real probability
    std::vector<double> prob;  // clipped
    std::vector<SlotSelection> sel;
};

inline DiscEval disc_eval(const MemoryState& state, const Matrix& queries) {
    DiscEval ev;
    ev.raw.resize(queries.rows);
    ev.prob.resize(queries.rows);
    ev.sel.resize(queries.rows);
    const double eps = state.params.epsilon;
    for (std::size_t b = 0; b < queries.rows; ++b) {
        std::vector<double> q(queries.row(b).begin(), queries.row(b).end());
        ev.sel[b] = top_k_slots(state, Query(std::move(q)));
        double p = 0.0;
        for (std::size_t j = 0; j < ev.sel[b].size(); ++j)
            if (state.values[ev.sel[b].indices[j]]) p += ev.sel[b].weights[j];
        ev.raw[b] = p;
        ev.prob[b] = std::clamp(p, eps, 1.0 - eps);
    }
    return ev;
}

/// Accumulates coeff_b * dD_raw/dq_b into dq. The clip is flat outside
/// (eps, 1-eps), so saturated samples contribute nothing; the top-k selection
/// is treated as locally constant.
inline void accumulate_disc_grad(const MemoryState& state, const DiscEval& ev,
                                 std::span<const double> coeff, Matrix& dq) {
    const double eps = state.params.epsilon;
    const double kappa = state.params.kappa;
    const std::size_t m = state.key_dim();
    for (std::size_t b = 0; b < dq.rows; ++b) {
        if (coeff[b] == 0.0) continue;
        if (ev.raw[b] <= eps || ev.raw[b] >= 1.0 - eps) continue;
        const SlotSelection& sel = ev.sel[b];
        // dD/dq = kappa * sum_i w_i (v_i - D) K_i
        auto row = dq.row(b);
        for (std::size_t j = 0; j < sel.size(); ++j) {
            const std::size_t i = sel.indices[j];
            const double f = kappa * coeff[b] * sel.weights[j] *
                             ((state.values[i] ? 1.0 : 0.0) - ev.raw[b]);
            const auto key = state.keys.row(i);
            for (std::size_t d = 0; d < m; ++d) row[d] += f * key[d];
        }
    }
}

/// Adds lambda * dI/dq (keys held constant) into dq.
inline void accumulate_info_grad(double kappa, double lambda,
                                 std::span<const LatentSample> latents, Matrix& dq) {
    const double f = -lambda * kappa / static_cast<double>(dq.rows);
    for (std::size_t b = 0; b < dq.rows; ++b) {
        auto row = dq.row(b);
        const auto& key = latents[b].key;
        for (std::size_t d = 0; d < dq.cols; ++d) row[d] += f * key[d];
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct PlainDiscEval {
    std::vector<double> raw;   // unclipped sigmoid
    std::vector<double> prob;  // clipped
};

inline PlainDiscEval plain_disc_eval(const Matrix& scores, double eps) {
    PlainDiscEval ev;
    ev.raw.resize(scores.rows);
    ev.prob.resize(scores.rows);
    for (std::size_t b = 0; b < scores.rows; ++b) {
        ev.raw[b] = sigmoid(scores.at(b, 0));
        ev.prob[b] = std::clamp(ev.raw[b], eps, 1.0 - eps);
    }
    return ev;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Losses (values)

/// Discriminator objective: -E[log D(real)] - E[log(1 - D(fake))] + lambda * I.
/// D is the clipped memory marginalization of the inference embedding. The
/// information term applies only to conditioned fake batches.
inline double d_loss(const MemoryState& state, const Mlp& inf_net, const Matrix& real_batch,
                     const FakeBatch& fake, double lambda) {
    if (real_batch.rows == 0 || fake.x.rows == 0)
        fail(ErrorCode::invalid_argument, "loss needs nonempty batches");
    const Matrix q_real = inf_net.forward(real_batch);
    const Matrix q_fake = inf_net.forward(fake.x);
    const auto er = detail::disc_eval(state, q_real);
    const auto ef = detail::disc_eval(state, q_fake);
    double acc_real = 0.0, acc_fake = 0.0;
    for (double p : er.prob) acc_real -= std::log(p);
    for (double p : ef.prob) acc_fake -= std::log(1.0 - p);
    double total = acc_real / static_cast<double>(real_batch.rows) +
                   acc_fake / static_cast<double>(fake.x.rows);
    if (lambda != 0.0 && !fake.latents.empty())
        total += lambda * info_term_from_queries(state.params.kappa, q_fake, fake.latents);
    return total;
}

/// Generator objective (saturating by default): E[log(1 - D(fake))] + lambda * I.
inline double g_loss(const MemoryState& state, const Mlp& inf_net, const FakeBatch& fake,
                     double lambda, bool non_saturating = false) {
    if (fake.x.rows == 0) fail(ErrorCode::invalid_argument, "loss needs a nonempty batch");
    const Matrix q_fake = inf_net.forward(fake.x);
    const auto ef = detail::disc_eval(state, q_fake);
    double acc = 0.0;
    for (double p : ef.prob) acc += non_saturating ? -std::log(p) : std::log(1.0 - p);
    double total = acc / static_cast<double>(fake.x.rows);
    if (lambda != 0.0 && !fake.latents.empty())
        total += lambda * info_term_from_queries(state.params.kappa, q_fake, fake.latents);
    return total;
}

// ---------------------------------------------------------------------------
// Losses with analytic gradients (used by the training step and checked
// against finite differences)

/// L_D and its gradient with respect to the inference network parameters
/// (accumulated into inf_grads). Optionally hands back the query embeddings
/// so the caller can reuse them for memory writes.
inline double d_loss_with_grads(const MemoryState& state, const Mlp& inf_net,
                                const Matrix& real_batch, const FakeBatch& fake, double lambda,
                                std::span<double> inf_grads, Matrix* q_real_out = nullptr,
                                Matrix* q_fake_out = nullptr) {
    const std::size_t n_real = real_batch.rows;
    const std::size_t n_fake = fake.x.rows;
    if (n_real == 0 || n_fake == 0) fail(ErrorCode::invalid_argument, "loss needs nonempty batches");

    ForwardCache cr, cf;
    const Matrix q_real = inf_net.forward(real_batch, &cr);
    const Matrix q_fake = inf_net.forward(fake.x, &cf);
    const auto er = detail::disc_eval(state, q_real);
    const auto ef = detail::disc_eval(state, q_fake);

    double total = 0.0;
    for (double p : er.prob) total -= std::log(p) / static_cast<double>(n_real);
    for (double p : ef.prob) total -= std::log(1.0 - p) / static_cast<double>(n_fake);

    std::vector<double> coeff_r(n_real), coeff_f(n_fake);
    for (std::size_t b = 0; b < n_real; ++b)
        coeff_r[b] = -1.0 / (static_cast<double>(n_real) * er.prob[b]);
    for (std::size_t b = 0; b < n_fake; ++b)
        coeff_f[b] = 1.0 / (static_cast<double>(n_fake) * (1.0 - ef.prob[b]));

    Matrix dqr(n_real, state.key_dim(), 0.0), dqf(n_fake, state.key_dim(), 0.0);
    detail::accumulate_disc_grad(state, er, coeff_r, dqr);
    detail::accumulate_disc_grad(state, ef, coeff_f, dqf);
    const bool with_info = lambda != 0.0 && !fake.latents.empty();
    if (with_info) {
        total += lambda * info_term_from_queries(state.params.kappa, q_fake, fake.latents);
        detail::accumulate_info_grad(state.params.kappa, lambda, fake.latents, dqf);
    }
    inf_net.backward(dqr, cr, inf_grads);
    inf_net.backward(dqf, cf, inf_grads);

    if (q_real_out) *q_real_out = q_real;
    if (q_fake_out) *q_fake_out = q_fake;
    return total;
}

struct GLossResult {
    double loss = 0.0;
    double info = 0.0;
};

/// L_G and its gradient with respect to the generator parameters, given the
/// generator input batch (keys plus noise for conditioned modes, noise only
/// otherwise). Inference network and memory are frozen; gradients flow
/// through both into the generator.
inline GLossResult g_loss_with_grads(const MemoryState& state, const Mlp& inf_net, const Mlp& gen,
                                     const Matrix& gen_input,
                                     std::span<const LatentSample> latents, double lambda,
                                     bool non_saturating, std::span<double> gen_grads) {
    const std::size_t batch = gen_input.rows;
    if (batch == 0) fail(ErrorCode::invalid_argument, "loss needs a nonempty batch");

    ForwardCache cg, cq;
    const Matrix x = gen.forward(gen_input, &cg);
    const Matrix q = inf_net.forward(x, &cq);
    const auto ef = detail::disc_eval(state, q);

    GLossResult res;
    for (double p : ef.prob)
        res.loss += (non_saturating ? -std::log(p) : std::log(1.0 - p)) /
                    static_cast<double>(batch);

    std::vector<double> coeff(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        coeff[b] = non_saturating ? -1.0 / (static_cast<double>(batch) * ef.prob[b])
                                  : -1.0 / (static_cast<double>(batch) * (1.0 - ef.prob[b]));
    }
    Matrix dq(batch, state.key_dim(), 0.0);
    detail::accumulate_disc_grad(state, ef, coeff, dq);
    const bool with_info = lambda != 0.0 && !latents.empty();
    if (with_info) {
        res.info = info_term_from_queries(state.params.kappa, q, latents);
        res.loss += lambda * res.info;
        detail::accumulate_info_grad(state.params.kappa, lambda, latents, dq);
    } else if (!latents.empty()) {
        res.info = info_term_from_queries(state.params.kappa, q, latents);
    }

    std::vector<double> inf_scratch(inf_net.param_count(), 0.0);
    const Matrix dx = inf_net.backward(dq, cq, inf_scratch);
    gen.backward(dx, cg, gen_grads);
    return res;
}

/// Plain-GAN discriminator loss (no_memory mode): clipped sigmoid head.
inline double plain_d_loss_with_grads(const Mlp& disc, const Matrix& real_batch,
                                      const Matrix& fake_x, double eps,
                                      std::span<double> disc_grads) {
    ForwardCache cr, cf;
    const auto er = detail::plain_disc_eval(disc.forward(real_batch, &cr), eps);
    const auto ef = detail::plain_disc_eval(disc.forward(fake_x, &cf), eps);
    const double inv_r = 1.0 / static_cast<double>(real_batch.rows);
    const double inv_f = 1.0 / static_cast<double>(fake_x.rows);

    double total = 0.0;
    for (double p : er.prob) total -= std::log(p) * inv_r;
    for (double p : ef.prob) total -= std::log(1.0 - p) * inv_f;

    Matrix dsr(real_batch.rows, 1, 0.0), dsf(fake_x.rows, 1, 0.0);
    for (std::size_t b = 0; b < real_batch.rows; ++b) {
        if (er.raw[b] > eps && er.raw[b] < 1.0 - eps)
            dsr.at(b, 0) = -inv_r / er.prob[b] * er.raw[b] * (1.0 - er.raw[b]);
    }
    for (std::size_t b = 0; b < fake_x.rows; ++b) {
        if (ef.raw[b] > eps && ef.raw[b] < 1.0 - eps)
            dsf.at(b, 0) = inv_f / (1.0 - ef.prob[b]) * ef.raw[b] * (1.0 - ef.raw[b]);
    }
    disc.backward(dsr, cr, disc_grads);
    disc.backward(dsf, cf, disc_grads);
    return total;
}

/// Plain-GAN generator loss (no_memory mode) and generator gradients.
inline double plain_g_loss_with_grads(const Mlp& disc, const Mlp& gen, const Matrix& z,
                                      double eps, bool non_saturating,
                                      std::span<double> gen_grads) {
    ForwardCache cg, cf;
    const Matrix x = gen.forward(z, &cg);
    const auto ef = detail::plain_disc_eval(disc.forward(x, &cf), eps);
    const double inv_b = 1.0 / static_cast<double>(z.rows);

    double total = 0.0;
    for (double p : ef.prob) total += (non_saturating ? -std::log(p) : std::log(1.0 - p)) * inv_b;

    Matrix ds(z.rows, 1, 0.0);
    for (std::size_t b = 0; b < z.rows; ++b) {
        if (ef.raw[b] <= eps || ef.raw[b] >= 1.0 - eps) continue;
        const double dldp = non_saturating ? -inv_b / ef.prob[b] : -inv_b / (1.0 - ef.prob[b]);
        ds.at(b, 0) = dldp * ef.raw[b] * (1.0 - ef.raw[b]);
    }
    std::vector<double> scratch(disc.param_count(), 0.0);
    const Matrix dx = disc.backward(ds, cf, scratch);
    gen.backward(dx, cg, gen_grads);
    return total;
}

// ---------------------------------------------------------------------------
// Ablation write rule

/// The running-average key update used by the no_em ablation: same pool and
/// allocation logic as write(), but the single best-matching correct slot is
/// moved by K <- (K + q) / ||K + q|| and the histogram is left untouched.
inline WriteResult running_average_write(MemoryState& state, const Query& q) {
    if (!q.label) fail(ErrorCode::invalid_argument, "write requires a labelled query");
    detail::check_query_dim(state, q);
    const std::uint8_t y = *q.label;

    const std::vector<std::size_t> pool = detail::write_pool(state, q.direction);
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < pool.size() && !best; ++j) {
        const std::size_t i = pool[j];
        if (state.values[i] == y && state.written(i)) best = i;
    }

    WriteResult result;
    if (!best) {
        result.allocated = true;
        result.touched.push_back(allocate_oldest(state, q.direction, y));
    } else {
        auto key = state.keys.row(*best);
        for (std::size_t d = 0; d < key.size(); ++d) key[d] += q.direction[d];
        normalize(key);
        result.touched.push_back(*best);
    }
    tick_ages(state, result.touched);
    return result;
}

// ---------------------------------------------------------------------------
// Model bundle and training iteration

struct NetsConfig {
    std::size_t data_dim = 2;
    std::size_t key_dim = 8;
    std::size_t noise_dim = 4;
    std::size_t hidden = 64;
    double learning_rate = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double lambda = 2e-6;
    bool non_saturating = false;
    AblationMode mode = AblationMode::full;
};

struct GanModel {
    AblationMode mode = AblationMode::full;
    Mlp generator;
    Mlp inference;   // query network mu; unused in no_memory mode
    Mlp plain_disc;  // scalar discriminator head; no_memory mode only
    AdamState opt_gen;
    AdamState opt_disc;
    double lambda = 2e-6;
    bool non_saturating = false;
    double clip_epsilon = 1e-3;  // mirrored from the memory params at setup
};

inline GanModel make_gan_model(const NetsConfig& cfg, std::uint64_t seed) {
    GanModel model;
    model.mode = cfg.mode;
    model.lambda = cfg.lambda;
    model.non_saturating = cfg.non_saturating;

    using L = std::pair<std::size_t, Activation>;
    const std::size_t gen_in =
        slot_conditioned(cfg.mode) ? cfg.key_dim + cfg.noise_dim : cfg.noise_dim;
    {
        Rng rng(mix_seed(seed, 101));
        const L layers[] = {{cfg.hidden, Activation::tanh_act},
                            {cfg.hidden, Activation::tanh_act},
                            {cfg.data_dim, Activation::linear}};
        model.generator = Mlp(gen_in, layers, rng);
    }
    {
        Rng rng(mix_seed(seed, 102));
        const L layers[] = {{cfg.hidden, Activation::tanh_act},
                            {cfg.hidden, Activation::tanh_act},
                            {cfg.key_dim, Activation::l2norm}};
        model.inference = Mlp(cfg.data_dim, layers, rng);
    }
    if (cfg.mode == AblationMode::no_memory) {
        Rng rng(mix_seed(seed, 103));
        const L layers[] = {{cfg.hidden, Activation::tanh_act},
                            {cfg.hidden, Activation::tanh_act},
                            {std::size_t{1}, Activation::linear}};
        model.plain_disc = Mlp(cfg.data_dim, layers, rng);
    }
    model.opt_gen = make_adam(model.generator.param_count(), cfg.learning_rate, cfg.adam_beta1,
                              cfg.adam_beta2, cfg.adam_eps);
    const std::size_t disc_params = cfg.mode == AblationMode::no_memory
                                        ? model.plain_disc.param_count()
                                        : model.inference.param_count();
    model.opt_disc = make_adam(disc_params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                               cfg.adam_eps);
    return model;
}

/// One full adversarial iteration: sample fakes, descend the discriminator,
/// write the batch's real and fake queries into the memory (mode-dependent),
/// resample, descend the generator. Returns the step's losses; info_term is
/// the generator-step value.
inline GanLosses train_step(GanModel& model, MemoryState& mem, const Matrix& real_batch, Rng& rng) {
    const std::size_t batch = real_batch.rows;
    if (batch == 0) fail(ErrorCode::invalid_argument, "empty training batch");
    GanLosses losses;

    if (model.mode == AblationMode::no_memory) {
        // Plain GAN; the memory is untouched.
        const FakeBatch fake = plain_sample(model.generator, rng, batch);
        std::vector<double> disc_grads(model.plain_disc.param_count(), 0.0);
        losses.d_loss = plain_d_loss_with_grads(model.plain_disc, real_batch, fake.x,
                                                model.clip_epsilon, disc_grads);
        adam_step(model.opt_disc, model.plain_disc.params(), disc_grads);

        Matrix z(batch, model.generator.in_dim());
        for (auto& v : z.data) v = rng.normal();
        std::vector<double> gen_grads(model.generator.param_count(), 0.0);
        losses.g_loss = plain_g_loss_with_grads(model.plain_disc, model.generator, z,
                                                model.clip_epsilon, model.non_saturating,
                                                gen_grads);
        adam_step(model.opt_gen, model.generator.params(), gen_grads);
        return losses;
    }

    const bool conditioned = slot_conditioned(model.mode);
    const double lambda = conditioned ? model.lambda : 0.0;
    const std::size_t dz =
        conditioned ? model.generator.in_dim() - mem.key_dim() : model.generator.in_dim();

    // (1) fake batch for the discriminator step
    FakeBatch fake;
    if (conditioned) {
        const Matrix input = detail::build_mcgn_input(mem, rng, batch, dz, fake.latents);
        fake.x = model.generator.forward(input);
    } else {
        fake = plain_sample(model.generator, rng, batch);
    }

    // (2) discriminator (inference network) step
    std::vector<double> inf_grads(model.inference.param_count(), 0.0);
    Matrix q_real, q_fake;
    losses.d_loss = d_loss_with_grads(mem, model.inference, real_batch, fake, lambda, inf_grads,
                                      &q_real, &q_fake);
    adam_step(model.opt_disc, model.inference.params(), inf_grads);

    // (3) memory writes with the discriminator-step queries
    const auto write_rows = [&](const Matrix& queries, std::uint8_t label) {
        for (std::size_t b = 0; b < queries.rows; ++b) {
            std::vector<double> q(queries.row(b).begin(), queries.row(b).end());
            normalize(q);
            Query query(std::move(q), label);
            if (model.mode == AblationMode::no_em)
                running_average_write(mem, query);
            else
                write(mem, query);
        }
    };
    write_rows(q_real, 1);
    write_rows(q_fake, 0);

    // (4) fresh noise and slots, (5) generator step
    Matrix gen_input2;
    std::vector<LatentSample> latents2;
    if (conditioned) {
        gen_input2 = detail::build_mcgn_input(mem, rng, batch, dz, latents2);
    } else {
        gen_input2 = Matrix(batch, dz);
        for (auto& v : gen_input2.data) v = rng.normal();
    }
    std::vector<double> gen_grads(model.generator.param_count(), 0.0);
    const GLossResult gres =
        g_loss_with_grads(mem, model.inference, model.generator, gen_input2, latents2,
                          lambda, model.non_saturating, gen_grads);
    losses.g_loss = gres.loss;
    losses.info_term = gres.info;
    adam_step(model.opt_gen, model.generator.params(), gen_grads);
    return losses;
}

}  // namespace memgan
