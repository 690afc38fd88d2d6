#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memgan/error.hpp"
#include "memgan/io.hpp"
#include "memgan/linalg.hpp"
#include "memgan/rng.hpp"

// Life-long key/value memory backed by a von Mises-Fisher mixture over unit
// keys. Each slot holds a mean direction (key), a binary real/fake value, an
// age for least-recently-used allocation, and an effective sample count
// (histogram) that doubles as the categorical prior over slots.
//
// Reads (posterior, top-k, discriminative probability, slot sampling with an
// owned Rng) are const and safe to run concurrently between writes. Writes
// (write / em_update / allocate_oldest / tick_ages) mutate the state and must
// be serialized by the caller.

namespace memgan {

struct MemoryParams {
    double kappa = 1.0;         // vMF concentration
    double beta = 1e-8;         // prior smoothing constant
    double epsilon = 1e-3;      // clip bound for the discriminative output
    double alpha = 0.5;         // decay applied to slot counts before an EM write
    std::size_t top_k = 128;    // slots consulted per lookup
    std::size_t em_iters = 3;   // EM iterations per write
};

struct MemoryState {
    Matrix keys;                        // N x M; rows are zero (never written) or unit norm
    std::vector<std::uint8_t> values;   // 1 = real, 0 = fake
    std::vector<std::uint64_t> ages;
    std::vector<double> histogram;      // effective per-slot sample counts, >= 0
    MemoryParams params;

    std::size_t n_slots() const { return keys.rows; }
    std::size_t key_dim() const { return keys.cols; }

    /// A slot counts as written once its key row is nonzero.
    bool written(std::size_t i) const {
        const auto row = keys.row(i);
        return std::any_of(row.begin(), row.end(), [](double x) { return x != 0.0; });
    }
};

/// Unit-norm query vector, optionally paired with a real/fake label.
struct Query {
    std::vector<double> direction;
    std::optional<std::uint8_t> label;

    explicit Query(std::vector<double> dir, std::optional<std::uint8_t> y = std::nullopt)
        : direction(std::move(dir)), label(y) {
        const double n = norm(direction);
        if (std::abs(n - 1.0) > 1e-6)
            fail(ErrorCode::invalid_argument, "query direction must be unit norm");
    }
};

/// Top-k lookup result: slot indices ordered by descending joint score, the
/// unnormalized scores, and posterior weights renormalized over the selection.
struct SlotSelection {
    std::vector<std::size_t> indices;
    std::vector<double> scores;
    std::vector<double> weights;

    std::size_t size() const { return indices.size(); }
};

struct WriteResult {
    bool allocated = false;             // true when the oldest slot was overwritten
    std::vector<std::size_t> touched;   // slots whose statistics changed
};

namespace detail {

inline void check_query_dim(const MemoryState& state, const Query& q) {
    if (q.direction.size() != state.key_dim())
        fail(ErrorCode::dimension_mismatch, "query dimension " + std::to_string(q.direction.size()) +
                                                " does not match key dimension " +
                                                std::to_string(state.key_dim()));
}

/// log of the unnormalized joint score exp(kappa k.q)(h + beta).
inline double log_score(const MemoryState& state, std::size_t slot, std::span<const double> q) {
    return state.params.kappa * dot(state.keys.row(slot), q) +
           std::log(state.histogram[slot] + state.params.beta);
}

/// Softmax over log scores, written into weights (same order as log_scores).
inline std::vector<double> softmax(std::span<const double> log_scores) {
    std::vector<double> w(log_scores.size());
    const double m = *std::max_element(log_scores.begin(), log_scores.end());
    double total = 0.0;
    for (std::size_t i = 0; i < log_scores.size(); ++i) {
        w[i] = std::exp(log_scores[i] - m);
        total += w[i];
    }
    for (auto& x : w) x /= total;
    return w;
}

}  // namespace detail

/// Fresh memory: zero keys, zero ages, a tiny uniform histogram, and values
/// drawn Bernoulli(0.5) per slot. Deterministic given the seed.
inline MemoryState init_memory(std::size_t n_slots, std::size_t key_dim, const MemoryParams& params,
                               std::uint64_t seed) {
    if (n_slots == 0 || key_dim == 0)
        fail(ErrorCode::invalid_dimension, "memory needs at least one slot and one key dimension");
    if (!(params.kappa > 0.0)) fail(ErrorCode::invalid_argument, "kappa must be positive");
    if (!(params.beta > 0.0)) fail(ErrorCode::invalid_argument, "beta must be positive");
    if (!(params.epsilon > 0.0 && params.epsilon < 0.5))
        fail(ErrorCode::invalid_argument, "epsilon must lie in (0, 0.5)");
    if (!(params.alpha > 0.0 && params.alpha <= 1.0))
        fail(ErrorCode::invalid_argument, "alpha must lie in (0, 1]");
    if (params.top_k < 1 || params.top_k > n_slots)
        fail(ErrorCode::invalid_argument, "top_k must lie in [1, n_slots]");
    if (params.em_iters < 1) fail(ErrorCode::invalid_argument, "em_iters must be >= 1");

    MemoryState state;
    state.keys = Matrix(n_slots, key_dim, 0.0);
    state.values.resize(n_slots);
    state.ages.assign(n_slots, 0);
    state.histogram.assign(n_slots, 1e-5);
    state.params = params;

    Rng rng(seed);
    for (std::size_t i = 0; i < n_slots; ++i) state.values[i] = rng.bernoulli(0.5) ? 1 : 0;
    return state;
}

/// Categorical prior over slots: p(c=i) = (h_i + beta) / sum_j (h_j + beta).
inline std::vector<double> slot_prior(const MemoryState& state) {
    std::vector<double> p(state.n_slots());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = state.histogram[i] + state.params.beta;
        total += p[i];
    }
    for (auto& x : p) x /= total;
    return p;
}

/// Exact posterior over all slots: p(c=i|x) proportional to exp(kappa K_i.q)(h_i + beta).
inline std::vector<double> posterior_exact(const MemoryState& state, const Query& q) {
    detail::check_query_dim(state, q);
    std::vector<double> ls(state.n_slots());
    for (std::size_t i = 0; i < ls.size(); ++i) ls[i] = detail::log_score(state, i, q.direction);
    return detail::softmax(ls);
}

/// Top-k slots by joint score. With a conditional label, candidates are
/// restricted to slots whose value matches before selection; fewer than top_k
/// candidates yield a smaller selection, none at all is an error. Ties break
/// toward the lower index.
inline SlotSelection top_k_slots(const MemoryState& state, const Query& q,
                                 std::optional<std::uint8_t> conditional_label = std::nullopt) {
    detail::check_query_dim(state, q);

    std::vector<std::size_t> candidates;
    candidates.reserve(state.n_slots());
    for (std::size_t i = 0; i < state.n_slots(); ++i) {
        if (!conditional_label || state.values[i] == *conditional_label) candidates.push_back(i);
    }
    if (candidates.empty())
        fail(ErrorCode::empty_candidate_set, "no slot matches the conditional label");

    std::vector<double> ls(state.n_slots());
    for (std::size_t i : candidates) ls[i] = detail::log_score(state, i, q.direction);

    const std::size_t k = std::min(state.params.top_k, candidates.size());
    const auto by_score = [&](std::size_t a, std::size_t b) {
        if (ls[a] != ls[b]) return ls[a] > ls[b];
        return a < b;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), by_score);
    candidates.resize(k);

    SlotSelection sel;
    sel.indices = std::move(candidates);
    sel.scores.resize(k);
    std::vector<double> sel_ls(k);
    for (std::size_t j = 0; j < k; ++j) {
        sel_ls[j] = ls[sel.indices[j]];
        sel.scores[j] = std::exp(sel_ls[j]);
    }
    sel.weights = detail::softmax(sel_ls);
    return sel;
}

/// Marginal probability that the query is real, before clipping: the
/// value-weighted posterior mass over the unconditioned top-k selection.
/// With top_k = N this is the exact mixture marginalization.
inline double marginal_real_prob(const MemoryState& state, const Query& q) {
    const SlotSelection sel = top_k_slots(state, q);
    double p = 0.0;
    for (std::size_t j = 0; j < sel.size(); ++j) {
        if (state.values[sel.indices[j]]) p += sel.weights[j];
    }
    return p;
}

/// Discriminative output p(y=1|x), clipped into [epsilon, 1 - epsilon].
inline double discriminative_prob(const MemoryState& state, const Query& q) {
    const double eps = state.params.epsilon;
    return std::clamp(marginal_real_prob(state, q), eps, 1.0 - eps);
}

/// Samples a slot index with probability h_i v_i / sum_j h_j v_j.
inline std::size_t sample_slot(const MemoryState& state, Rng& rng) {
    double total = 0.0;
    for (std::size_t i = 0; i < state.n_slots(); ++i) {
        if (state.values[i]) total += state.histogram[i];
    }
    if (total <= 0.0) fail(ErrorCode::no_real_slots, "no real slot with positive histogram mass");

    const double u = rng.uniform() * total;
    double cum = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < state.n_slots(); ++i) {
        if (!state.values[i] || state.histogram[i] <= 0.0) continue;
        cum += state.histogram[i];
        last = i;
        if (u < cum) return i;
    }
    return last;  // u == total up to rounding
}

/// Incremental EM on the selected slots (all must share the written label).
/// Slot counts are decayed by alpha once, then T expectation/maximization
/// rounds move keys toward the query by responsibility-weighted steps; keys
/// are renormalized to the unit sphere after each step.
inline void em_update(MemoryState& state, const SlotSelection& selection, std::span<const double> q,
                      std::size_t iters) {
    if (selection.size() == 0) fail(ErrorCode::invalid_argument, "EM selection is empty");
    const std::size_t n = selection.size();
    const std::size_t m = state.key_dim();
    const MemoryParams& p = state.params;

    std::vector<double> h_hat(n), gamma_prev(n, 0.0), log_sc(n);
    Matrix k_hat(n, m);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t i = selection.indices[j];
        h_hat[j] = p.alpha * state.histogram[i];
        copy_into(state.keys.row(i), k_hat.row(j));
    }

    std::vector<double> prev_row(m);
    for (std::size_t t = 0; t < iters; ++t) {
        for (std::size_t j = 0; j < n; ++j)
            log_sc[j] = p.kappa * dot(k_hat.row(j), q) + std::log(h_hat[j] + p.beta);
        const std::vector<double> gamma = detail::softmax(log_sc);

        for (std::size_t j = 0; j < n; ++j) {
            const double delta = gamma[j] - gamma_prev[j];
            h_hat[j] += delta;
            if (!(h_hat[j] > 0.0))
                fail(ErrorCode::degenerate_histogram, "slot count fell to zero during EM");
            const double step = delta / h_hat[j];
            auto row = k_hat.row(j);
            copy_into(row, prev_row);
            for (std::size_t d = 0; d < m; ++d) row[d] += step * (q[d] - row[d]);
            const double nrm = norm(row);
            if (nrm > 1e-12) {
                for (auto& x : row) x /= nrm;
            } else {
                copy_into(prev_row, row);  // exactly antipodal step; keep the previous direction
            }
        }
        gamma_prev = gamma;
    }

    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t i = selection.indices[j];
        copy_into(k_hat.row(j), state.keys.row(i));
        state.histogram[i] = h_hat[j];
    }
}

/// Overwrites the oldest slot (highest age, ties toward the lower index) with
/// the query: key = q, value = y, age = 0, histogram = mean of the current
/// histogram. Returns the overwritten slot.
inline std::size_t allocate_oldest(MemoryState& state, std::span<const double> q, std::uint8_t y) {
    if (q.size() != state.key_dim()) fail(ErrorCode::dimension_mismatch, "query/key dimension mismatch");
    std::size_t oldest = 0;
    for (std::size_t i = 1; i < state.n_slots(); ++i) {
        if (state.ages[i] > state.ages[oldest]) oldest = i;
    }
    const double mean_h =
        std::accumulate(state.histogram.begin(), state.histogram.end(), 0.0) /
        static_cast<double>(state.n_slots());

    copy_into(q, state.keys.row(oldest));
    state.values[oldest] = y;
    state.ages[oldest] = 0;
    state.histogram[oldest] = mean_h;
    return oldest;
}

/// Advances every age by one, then resets the touched slots to zero.
inline void tick_ages(MemoryState& state, std::span<const std::size_t> touched) {
    for (auto& a : state.ages) ++a;
    for (std::size_t i : touched) {
        assert(i < state.n_slots());
        state.ages[i] = 0;
    }
}

namespace detail {

/// Write-path candidate pool: the top_k nearest slots by key similarity (ties
/// toward the lower index). Nearness, not the joint score, decides which slots
/// a write may merge into: a query pointing away from every written key ranks
/// below the untouched zero-key rows and falls through to allocation, which is
/// what lets the mixture grow new components.
inline std::vector<std::size_t> write_pool(const MemoryState& state, std::span<const double> q) {
    std::vector<double> cosine(state.n_slots());
    for (std::size_t i = 0; i < state.n_slots(); ++i) cosine[i] = dot(state.keys.row(i), q);
    std::vector<std::size_t> order(state.n_slots());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t k = std::min(state.params.top_k, state.n_slots());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (cosine[a] != cosine[b]) return cosine[a] > cosine[b];
                          return a < b;
                      });
    order.resize(k);
    return order;
}

/// Written slots of the pool carrying the wanted label, as a SlotSelection
/// scored by the joint posterior (used as the EM selection).
inline SlotSelection matching_written(const MemoryState& state, std::span<const double> q,
                                      std::span<const std::size_t> pool, std::uint8_t label) {
    SlotSelection sel;
    std::vector<double> ls;
    for (std::size_t i : pool) {
        if (state.values[i] != label || !state.written(i)) continue;
        sel.indices.push_back(i);
        ls.push_back(log_score(state, i, q));
        sel.scores.push_back(std::exp(ls.back()));
    }
    if (!sel.indices.empty()) sel.weights = softmax(ls);
    return sel;
}

}  // namespace detail

/// Writes a labelled query into the memory. The k-nearest pool is filtered to
/// written slots carrying the same label; if none survive, the query is copied
/// onto the oldest slot, otherwise the surviving slots are EM-updated.
/// Never-written (zero-key) rows are not valid mixture components, so they are
/// only ever filled through allocation. Ages advance once per call.
inline WriteResult write(MemoryState& state, const Query& q) {
    if (!q.label) fail(ErrorCode::invalid_argument, "write requires a labelled query");
    detail::check_query_dim(state, q);
    const std::uint8_t y = *q.label;

    const std::vector<std::size_t> pool = detail::write_pool(state, q.direction);
    const SlotSelection matched = detail::matching_written(state, q.direction, pool, y);

    WriteResult result;
    if (matched.indices.empty()) {
        result.allocated = true;
        result.touched.push_back(allocate_oldest(state, q.direction, y));
    } else {
        em_update(state, matched, q.direction, state.params.em_iters);
        result.touched = matched.indices;
    }
    tick_ages(state, result.touched);
    return result;
}

/// Real-slot log likelihood of a query with the vMF normalizer dropped:
/// log of the top-k real score mass over the total real prior mass. The
/// prior's global normalizer cancels in the ratio. A selection that contains
/// no real slot is floored at the smallest positive double.
inline double biased_loglik_real(const MemoryState& state, const Query& q) {
    double real_mass = 0.0;
    bool any_real = false;
    for (std::size_t i = 0; i < state.n_slots(); ++i) {
        if (state.values[i]) {
            real_mass += state.histogram[i] + state.params.beta;
            any_real = true;
        }
    }
    if (!any_real) fail(ErrorCode::no_real_slots, "memory holds no real slot");

    const SlotSelection sel = top_k_slots(state, q);
    double num = 0.0;
    for (std::size_t j = 0; j < sel.size(); ++j) {
        if (state.values[sel.indices[j]]) num += sel.scores[j];
    }
    num = std::max(num, std::numeric_limits<double>::min());
    return std::log(num / real_mass);
}

// ---------------------------------------------------------------------------
// Snapshot serialization. Binary, little-endian, doubles as raw IEEE-754 bits:
// integers round-trip bit-for-bit and reals exactly.

namespace detail {
inline constexpr char kMemoryMagic[9] = "MGMEMSNP";
inline constexpr std::uint32_t kMemoryVersion = 1;
}  // namespace detail

inline void save_memory(const MemoryState& state, std::ostream& out) {
    detail::write_magic(out, detail::kMemoryMagic);
    detail::write_u32(out, detail::kMemoryVersion);
    detail::write_u64(out, state.n_slots());
    detail::write_u64(out, state.key_dim());
    detail::write_f64(out, state.params.kappa);
    detail::write_f64(out, state.params.beta);
    detail::write_f64(out, state.params.epsilon);
    detail::write_f64(out, state.params.alpha);
    detail::write_u64(out, state.params.top_k);
    detail::write_u64(out, state.params.em_iters);
    for (double x : state.keys.data) detail::write_f64(out, x);
    for (std::uint8_t v : state.values) detail::write_u8(out, v);
    for (std::uint64_t a : state.ages) detail::write_u64(out, a);
    for (double h : state.histogram) detail::write_f64(out, h);
    if (!out) fail(ErrorCode::io_failure, "memory snapshot write failed");
}

inline MemoryState load_memory(std::istream& in) {
    detail::expect_magic(in, detail::kMemoryMagic, "memory snapshot");
    const std::uint32_t version = detail::read_u32(in);
    if (version != detail::kMemoryVersion)
        fail(ErrorCode::bad_magic, "unsupported memory snapshot version");
    const std::uint64_t n = detail::read_u64(in);
    const std::uint64_t m = detail::read_u64(in);

    MemoryState state;
    state.params.kappa = detail::read_f64(in);
    state.params.beta = detail::read_f64(in);
    state.params.epsilon = detail::read_f64(in);
    state.params.alpha = detail::read_f64(in);
    state.params.top_k = detail::read_u64(in);
    state.params.em_iters = detail::read_u64(in);
    state.keys = Matrix(n, m);
    for (auto& x : state.keys.data) x = detail::read_f64(in);
    state.values.resize(n);
    for (auto& v : state.values) v = detail::read_u8(in);
    state.ages.resize(n);
    for (auto& a : state.ages) a = detail::read_u64(in);
    state.histogram.resize(n);
    for (auto& h : state.histogram) h = detail::read_f64(in);
    return state;
}

inline void save_memory(const MemoryState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::io_failure, "cannot open " + path + " for writing");
    save_memory(state, out);
}

inline MemoryState load_memory(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_failure, "cannot open " + path);
    return load_memory(in);
}

}  // namespace memgan
