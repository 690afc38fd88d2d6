#pragma once

#include <cmath>
#include <vector>

#include "memgan/memory.hpp"
#include "memgan/rng.hpp"

// Shared test helpers. The brute-force evaluators below deliberately avoid the
// library's selection/softmax code paths: plain loops over the definitional
// formulas, so they stay independent oracles.

namespace testutil {

/// Exhaustive marginalization of the real probability over all slots,
/// straight from the mixture definition (no top-k, no clipping).
inline double brute_real_marginal(const memgan::MemoryState& s, const std::vector<double>& q) {
    long double num = 0.0L, den = 0.0L;
    for (std::size_t i = 0; i < s.n_slots(); ++i) {
        long double d = 0.0L;
        for (std::size_t m = 0; m < s.key_dim(); ++m) d += s.keys.at(i, m) * q[m];
        const long double w =
            std::exp(static_cast<long double>(s.params.kappa) * d) * (s.histogram[i] + s.params.beta);
        den += w;
        if (s.values[i]) num += w;
    }
    return static_cast<double>(num / den);
}

/// Exhaustive posterior over all slots, straight from the definition.
inline std::vector<double> brute_posterior(const memgan::MemoryState& s,
                                           const std::vector<double>& q) {
    std::vector<long double> w(s.n_slots());
    long double den = 0.0L;
    for (std::size_t i = 0; i < s.n_slots(); ++i) {
        long double d = 0.0L;
        for (std::size_t m = 0; m < s.key_dim(); ++m) d += s.keys.at(i, m) * q[m];
        w[i] = std::exp(static_cast<long double>(s.params.kappa) * d) *
               (s.histogram[i] + s.params.beta);
        den += w[i];
    }
    std::vector<double> out(s.n_slots());
    for (std::size_t i = 0; i < s.n_slots(); ++i) out[i] = static_cast<double>(w[i] / den);
    return out;
}

inline std::vector<double> random_unit(memgan::Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double n2 = 0.0;
    do {
        n2 = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            n2 += x * x;
        }
    } while (n2 < 1e-12);
    const double n = std::sqrt(n2);
    for (auto& x : v) x /= n;
    return v;
}

/// Random populated memory: every slot written with a random unit key, random
/// value, and positive histogram mass.
inline memgan::MemoryState random_state(memgan::Rng& rng, std::size_t n, std::size_t m,
                                        std::size_t top_k) {
    memgan::MemoryParams params;
    params.top_k = std::min(top_k, n);
    memgan::MemoryState s = memgan::init_memory(n, m, params, rng.next_u64());
    for (std::size_t i = 0; i < n; ++i) {
        const auto key = random_unit(rng, m);
        memgan::copy_into(key, s.keys.row(i));
        s.histogram[i] = 0.05 + 2.0 * rng.uniform();
        s.values[i] = rng.bernoulli(0.5) ? 1 : 0;
        s.ages[i] = rng.below(100);
    }
    return s;
}

}  // namespace testutil
