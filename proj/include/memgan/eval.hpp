#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "memgan/datasets.hpp"
#include "memgan/error.hpp"
#include "memgan/gan.hpp"
#include "memgan/linalg.hpp"
#include "memgan/memory.hpp"
#include "memgan/mlp.hpp"

// Evaluation probes over frozen model/memory snapshots: mode coverage and
// cluster purity (the desk-scale quality metrics), likelihood and prior
// tracking, key-space interpolation, and nearest-neighbor lookups. Everything
// here is read-only and deterministic.

namespace memgan {

struct MetricsRecord {
    std::uint64_t iteration = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double info_term = 0.0;
    double avg_biased_loglik = 0.0;
    double prior_entropy = 0.0;
    double mode_coverage = 0.0;
    double real_slot_fraction = 0.0;
};

// ---------------------------------------------------------------------------
// Quality probes

struct ModeCoverageResult {
    double coverage = 0.0;            // covered modes / total modes
    std::vector<double> shares;       // fraction of samples assigned to each mode
    std::vector<bool> covered;
};

/// Assigns each sample to its nearest center; a mode counts as covered when it
/// receives at least `min_share` of the batch and its members' mean distance
/// to the center is within `threshold_sigmas * data_std`.
inline ModeCoverageResult mode_coverage(const Matrix& samples, const Matrix& centers,
                                        double data_std, double threshold_sigmas,
                                        double min_share) {
    if (centers.rows == 0) fail(ErrorCode::invalid_argument, "mode coverage needs centers");
    ModeCoverageResult res;
    res.shares.assign(centers.rows, 0.0);
    res.covered.assign(centers.rows, false);
    if (samples.rows == 0) return res;

    std::vector<std::size_t> counts(centers.rows, 0);
    std::vector<double> dist_sum(centers.rows, 0.0);
    for (std::size_t i = 0; i < samples.rows; ++i) {
        std::size_t best = 0;
        double best_d = squared_distance(samples.row(i), centers.row(0));
        for (std::size_t k = 1; k < centers.rows; ++k) {
            const double d = squared_distance(samples.row(i), centers.row(k));
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        counts[best] += 1;
        dist_sum[best] += std::sqrt(best_d);
    }

    std::size_t covered = 0;
    for (std::size_t k = 0; k < centers.rows; ++k) {
        res.shares[k] = static_cast<double>(counts[k]) / static_cast<double>(samples.rows);
        if (counts[k] == 0) continue;
        const double mean_dist = dist_sum[k] / static_cast<double>(counts[k]);
        if (res.shares[k] >= min_share && mean_dist <= threshold_sigmas * data_std) {
            res.covered[k] = true;
            covered += 1;
        }
    }
    res.coverage = static_cast<double>(covered) / static_cast<double>(centers.rows);
    return res;
}

/// Mean memory log-likelihood of held-out real samples under their query
/// embeddings.
inline double avg_biased_loglik(const MemoryState& state, const Mlp& inf_net,
                                const Matrix& held_out) {
    if (held_out.rows == 0) fail(ErrorCode::invalid_argument, "held-out set is empty");
    const Matrix queries = inf_net.forward(held_out);
    double acc = 0.0;
    for (std::size_t i = 0; i < queries.rows; ++i) {
        std::vector<double> q(queries.row(i).begin(), queries.row(i).end());
        normalize(q);
        acc += biased_loglik_real(state, Query(std::move(q)));
    }
    return acc / static_cast<double>(queries.rows);
}

/// Shannon entropy (nats) of the slot prior.
inline double prior_entropy(const MemoryState& state) {
    const std::vector<double> p = slot_prior(state);
    double h = 0.0;
    for (double x : p) {
        if (x > 0.0) h -= x * std::log(x);
    }
    return h;
}

/// Fraction of slots whose value marks them real.
inline double real_slot_fraction(const MemoryState& state) {
    std::size_t real = 0;
    for (auto v : state.values) real += v ? 1 : 0;
    return static_cast<double>(real) / static_cast<double>(state.n_slots());
}

/// Purity of the posterior-argmax slot assignment of labelled queries:
/// sum over slots of the dominant label count, over the total.
inline double cluster_purity(const MemoryState& state, const Matrix& queries,
                             const std::vector<std::size_t>& labels) {
    if (queries.rows != labels.size())
        fail(ErrorCode::dimension_mismatch, "queries and labels disagree in length");
    if (queries.rows == 0) return 1.0;

    const std::size_t n_labels = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<std::size_t>> slot_counts(state.n_slots(),
                                                      std::vector<std::size_t>(n_labels, 0));
    for (std::size_t i = 0; i < queries.rows; ++i) {
        std::vector<double> q(queries.row(i).begin(), queries.row(i).end());
        const std::vector<double> post = posterior_exact(state, Query(std::move(q)));
        const std::size_t slot = static_cast<std::size_t>(
            std::max_element(post.begin(), post.end()) - post.begin());
        slot_counts[slot][labels[i]] += 1;
    }
    std::size_t majority = 0;
    for (const auto& counts : slot_counts)
        majority += *std::max_element(counts.begin(), counts.end());
    return static_cast<double>(majority) / static_cast<double>(queries.rows);
}

// ---------------------------------------------------------------------------
// Interpolation probe

enum class ZPolicy : std::uint8_t { frozen = 0, corners = 1 };

struct InterpolationGrid {
    std::size_t grid = 0;
    Matrix samples;                     // grid*grid rows, row-major over (i, j)
    std::vector<std::size_t> snapped;   // argmax-posterior slot per cell
};

/// Bilinear interpolation between four corner keys over a grid x grid lattice.
/// Each interpolated vector is renormalized, snapped to the slot with the
/// highest posterior (ties toward the lower index), and rendered from the
/// snapped slot's key. Noise is one frozen draw per grid, or bilinear between
/// four corner draws under ZPolicy::corners.
inline InterpolationGrid interpolate_keys(const MemoryState& state, const Mlp& gen,
                                          const std::array<std::size_t, 4>& slots,
                                          std::size_t grid, ZPolicy z_policy, Rng& rng) {
    if (grid < 2) fail(ErrorCode::invalid_argument, "grid must be at least 2");
    for (std::size_t a = 0; a < 4; ++a) {
        if (slots[a] >= state.n_slots())
            fail(ErrorCode::invalid_argument, "slot index out of range");
        for (std::size_t b = a + 1; b < 4; ++b)
            if (slots[a] == slots[b])
                fail(ErrorCode::invalid_argument, "interpolation slots must be distinct");
    }
    for (std::size_t s : slots) {
        if (!state.values[s] || !state.written(s))
            fail(ErrorCode::insufficient_real_slots,
                 "interpolation corners must be written real slots");
    }

    const std::size_t m = state.key_dim();
    if (gen.in_dim() <= m)
        fail(ErrorCode::dimension_mismatch, "generator input must be key_dim + noise_dim");
    const std::size_t dz = gen.in_dim() - m;

    std::array<std::vector<double>, 4> corner_z;
    std::vector<double> frozen_z(dz);
    if (z_policy == ZPolicy::frozen) {
        for (auto& z : frozen_z) z = rng.normal();
    } else {
        for (auto& cz : corner_z) {
            cz.resize(dz);
            for (auto& z : cz) z = rng.normal();
        }
    }

    InterpolationGrid out;
    out.grid = grid;
    out.snapped.resize(grid * grid);
    Matrix gen_input(grid * grid, m + dz);
    const double denom = static_cast<double>(grid - 1);
    for (std::size_t i = 0; i < grid; ++i) {
        const double u = static_cast<double>(i) / denom;
        for (std::size_t j = 0; j < grid; ++j) {
            const double v = static_cast<double>(j) / denom;
            const double w00 = (1.0 - u) * (1.0 - v), w01 = (1.0 - u) * v;
            const double w10 = u * (1.0 - v), w11 = u * v;

            std::vector<double> key(m, 0.0);
            for (std::size_t d = 0; d < m; ++d) {
                key[d] = w00 * state.keys.at(slots[0], d) + w01 * state.keys.at(slots[1], d) +
                         w10 * state.keys.at(slots[2], d) + w11 * state.keys.at(slots[3], d);
            }
            normalize(key);

            const std::vector<double> post = posterior_exact(state, Query(key));
            const std::size_t snapped = static_cast<std::size_t>(
                std::max_element(post.begin(), post.end()) - post.begin());
            out.snapped[i * grid + j] = snapped;

            auto row = gen_input.row(i * grid + j);
            const auto snapped_key = state.keys.row(snapped);
            for (std::size_t d = 0; d < m; ++d) row[d] = snapped_key[d];
            if (z_policy == ZPolicy::frozen) {
                for (std::size_t d = 0; d < dz; ++d) row[m + d] = frozen_z[d];
            } else {
                for (std::size_t d = 0; d < dz; ++d)
                    row[m + d] = w00 * corner_z[0][d] + w01 * corner_z[1][d] +
                                 w10 * corner_z[2][d] + w11 * corner_z[3][d];
            }
        }
    }
    out.samples = gen.forward(gen_input);
    return out;
}

// ---------------------------------------------------------------------------
// Nearest-neighbor generalization probe

struct NeighborResult {
    std::vector<std::size_t> indices;  // training item indices, best first
    std::vector<double> scores;        // cosine similarities, non-increasing
};

/// Ranks training items by cosine similarity between query embeddings of the
/// generated sample and each training item. Ties keep the lower index first.
inline NeighborResult nearest_training_neighbors(const Mlp& inf_net,
                                                 std::span<const double> generated,
                                                 const Matrix& training, std::size_t top_n) {
    if (training.rows == 0) fail(ErrorCode::invalid_argument, "training set is empty");
    Matrix gen_input(1, generated.size());
    copy_into(generated, gen_input.row(0));
    const Matrix q_gen = inf_net.forward(gen_input);
    const Matrix q_train = inf_net.forward(training);

    std::vector<std::size_t> order(training.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> scores(training.rows);
    for (std::size_t i = 0; i < training.rows; ++i) scores[i] = dot(q_train.row(i), q_gen.row(0));

    const std::size_t k = std::min(top_n, training.rows);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;
                      });
    NeighborResult res;
    res.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    res.scores.resize(k);
    for (std::size_t j = 0; j < k; ++j) res.scores[j] = scores[res.indices[j]];
    return res;
}

// ---------------------------------------------------------------------------
// Artifact writers

inline void write_metrics_header_jsonl(std::ostream& out, const std::string& fingerprint) {
    out << "{\"config_fingerprint\":\"" << fingerprint << "\"}\n";
}

inline void write_metrics_record_jsonl(std::ostream& out, const MetricsRecord& r) {
    out << "{\"iteration\":" << r.iteration << ",\"d_loss\":" << format_double(r.d_loss)
        << ",\"g_loss\":" << format_double(r.g_loss)
        << ",\"info_term\":" << format_double(r.info_term)
        << ",\"avg_biased_loglik\":" << format_double(r.avg_biased_loglik)
        << ",\"prior_entropy\":" << format_double(r.prior_entropy)
        << ",\"mode_coverage\":" << format_double(r.mode_coverage)
        << ",\"real_slot_fraction\":" << format_double(r.real_slot_fraction) << "}\n";
}

inline void write_metrics_header_csv(std::ostream& out, const std::string& fingerprint) {
    out << "# config_fingerprint=" << fingerprint << '\n';
    out << "iteration,d_loss,g_loss,info_term,avg_biased_loglik,prior_entropy,mode_coverage,"
           "real_slot_fraction\n";
}

inline void write_metrics_record_csv(std::ostream& out, const MetricsRecord& r) {
    out << r.iteration << ',' << format_double(r.d_loss) << ',' << format_double(r.g_loss) << ','
        << format_double(r.info_term) << ',' << format_double(r.avg_biased_loglik) << ','
        << format_double(r.prior_entropy) << ',' << format_double(r.mode_coverage) << ','
        << format_double(r.real_slot_fraction) << '\n';
}

/// Writes an interpolation grid of side x side tiles as an ASCII PGM image
/// (sample values clamped to [0, 1]). The fingerprint rides in a comment line.
inline void write_grid_pgm(std::ostream& out, const InterpolationGrid& grid, std::size_t side,
                           const std::string& fingerprint) {
    if (side * side != grid.samples.cols)
        fail(ErrorCode::invalid_argument, "samples are not square images");
    const std::size_t px = grid.grid * side;
    out << "P2\n";
    out << "# config_fingerprint=" << fingerprint << '\n';
    out << px << ' ' << px << "\n255\n";
    for (std::size_t row = 0; row < px; ++row) {
        const std::size_t tile_i = row / side;
        const std::size_t r = row % side;
        for (std::size_t col = 0; col < px; ++col) {
            const std::size_t tile_j = col / side;
            const std::size_t c = col % side;
            const double v =
                std::clamp(grid.samples.at(tile_i * grid.grid + tile_j, r * side + c), 0.0, 1.0);
            out << static_cast<int>(std::lround(v * 255.0));
            out << (col + 1 == px ? '\n' : ' ');
        }
    }
}

/// Writes an interpolation grid of low-dimensional points as CSV.
inline void write_grid_csv(std::ostream& out, const InterpolationGrid& grid,
                           const std::string& fingerprint) {
    out << "# config_fingerprint=" << fingerprint << '\n';
    out << "row,col,snapped_slot";
    for (std::size_t d = 0; d < grid.samples.cols; ++d) out << ",dim_" << d;
    out << '\n';
    for (std::size_t i = 0; i < grid.grid; ++i) {
        for (std::size_t j = 0; j < grid.grid; ++j) {
            const std::size_t cell = i * grid.grid + j;
            out << i << ',' << j << ',' << grid.snapped[cell];
            for (double v : grid.samples.row(cell)) out << ',' << format_double(v);
            out << '\n';
        }
    }
}

}  // namespace memgan
