#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memgan/error.hpp"
#include "memgan/io.hpp"
#include "memgan/linalg.hpp"
#include "memgan/rng.hpp"

// Small feed-forward networks with explicit reverse-mode gradients. Parameters
// live in one contiguous buffer so optimizers and finite-difference checks can
// treat the network as a flat vector.

namespace memgan {

enum class Activation : std::uint8_t { linear = 0, tanh_act = 1, relu = 2, l2norm = 3 };

/// Per-layer forward intermediates needed by backward().
struct ForwardCache {
    std::vector<Matrix> inputs;    // layer inputs
    std::vector<Matrix> preacts;   // affine outputs before activation
    std::vector<Matrix> outputs;   // activated outputs

    bool empty() const { return inputs.empty(); }
};

class Mlp {
public:
    struct LayerSpec {
        std::size_t in = 0;
        std::size_t out = 0;
        Activation act = Activation::linear;
        std::size_t w_off = 0;  // weight block offset into params (row-major out x in)
        std::size_t b_off = 0;  // bias block offset
    };

    Mlp() = default;

    /// Builds the network with Glorot-uniform weights and zero biases.
    /// l2norm is only valid as the final layer.
    Mlp(std::size_t input_dim, std::span<const std::pair<std::size_t, Activation>> layers, Rng& rng) {
        if (input_dim == 0 || layers.empty())
            fail(ErrorCode::invalid_dimension, "network needs an input dimension and at least one layer");
        std::size_t in = input_dim;
        std::size_t offset = 0;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto [out, act] = layers[l];
            if (out == 0) fail(ErrorCode::invalid_dimension, "layer width cannot be zero");
            if (act == Activation::l2norm && l + 1 != layers.size())
                fail(ErrorCode::invalid_argument, "l2norm is only supported as the final layer");
            LayerSpec spec{in, out, act, offset, offset + in * out};
            offset += in * out + out;
            layers_.push_back(spec);
            in = out;
        }
        in_dim_ = input_dim;
        params_.assign(offset, 0.0);
        for (const auto& spec : layers_) {
            const double bound = std::sqrt(6.0 / static_cast<double>(spec.in + spec.out));
            for (std::size_t i = 0; i < spec.in * spec.out; ++i)
                params_[spec.w_off + i] = (2.0 * rng.uniform() - 1.0) * bound;
            // biases stay zero
        }
    }

    std::size_t in_dim() const { return in_dim_; }
    std::size_t out_dim() const { return layers_.back().out; }
    std::size_t layer_count() const { return layers_.size(); }
    const std::vector<LayerSpec>& layers() const { return layers_; }

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }

    /// Pure forward pass over a batch (rows are samples). Pass a cache to
    /// enable backward().
    Matrix forward(const Matrix& x, ForwardCache* cache = nullptr) const {
        if (x.cols != in_dim_)
            fail(ErrorCode::dimension_mismatch, "input has " + std::to_string(x.cols) +
                                                    " columns, network expects " + std::to_string(in_dim_));
        if (cache) {
            cache->inputs.clear();
            cache->preacts.clear();
            cache->outputs.clear();
        }
        Matrix cur = x;
        for (const auto& spec : layers_) {
            Matrix pre(cur.rows, spec.out);
            for (std::size_t r = 0; r < cur.rows; ++r) {
                const auto in_row = cur.row(r);
                auto out_row = pre.row(r);
                for (std::size_t o = 0; o < spec.out; ++o) {
                    const double* w = &params_[spec.w_off + o * spec.in];
                    double s = params_[spec.b_off + o];
                    for (std::size_t i = 0; i < spec.in; ++i) s += w[i] * in_row[i];
                    out_row[o] = s;
                }
            }
            Matrix act = apply_activation(spec.act, pre);
            if (cache) {
                cache->inputs.push_back(std::move(cur));
                cache->preacts.push_back(pre);
                cache->outputs.push_back(act);
            }
            cur = std::move(act);
        }
        return cur;
    }

    /// Reverse-mode pass. Accumulates parameter gradients into `grads`
    /// (caller-zeroed, same layout as params()) and returns the gradient with
    /// respect to the input batch.
    Matrix backward(const Matrix& dy, const ForwardCache& cache, std::span<double> grads) const {
        if (cache.inputs.size() != layers_.size())
            fail(ErrorCode::missing_cache, "forward cache does not match this network");
        if (grads.size() != params_.size())
            fail(ErrorCode::shape_mismatch, "gradient buffer does not match parameter count");
        if (dy.cols != out_dim() || dy.rows != cache.outputs.back().rows)
            fail(ErrorCode::dimension_mismatch, "output gradient shape mismatch");

        Matrix d = dy;
        for (std::size_t li = layers_.size(); li-- > 0;) {
            const auto& spec = layers_[li];
            const Matrix& x = cache.inputs[li];
            const Matrix& pre = cache.preacts[li];
            const Matrix& y = cache.outputs[li];

            Matrix du(d.rows, spec.out);
            switch (spec.act) {
                case Activation::linear:
                    du = d;
                    break;
                case Activation::tanh_act:
                    for (std::size_t i = 0; i < du.data.size(); ++i)
                        du.data[i] = d.data[i] * (1.0 - y.data[i] * y.data[i]);
                    break;
                case Activation::relu:
                    for (std::size_t i = 0; i < du.data.size(); ++i)
                        du.data[i] = pre.data[i] > 0.0 ? d.data[i] : 0.0;
                    break;
                case Activation::l2norm:
                    // du = (dy - (y . dy) y) / ||u||: the gradient is projected
                    // onto the tangent space of the sphere and rescaled.
                    for (std::size_t r = 0; r < d.rows; ++r) {
                        const double n = std::max(norm(pre.row(r)), 1e-12);
                        const double proj = dot(y.row(r), d.row(r));
                        auto du_row = du.row(r);
                        const auto dy_row = d.row(r);
                        const auto y_row = y.row(r);
                        for (std::size_t c = 0; c < spec.out; ++c)
                            du_row[c] = (dy_row[c] - proj * y_row[c]) / n;
                    }
                    break;
            }

            Matrix dx(d.rows, spec.in, 0.0);
            for (std::size_t r = 0; r < d.rows; ++r) {
                const auto du_row = du.row(r);
                const auto x_row = x.row(r);
                auto dx_row = dx.row(r);
                for (std::size_t o = 0; o < spec.out; ++o) {
                    const double g = du_row[o];
                    if (g == 0.0) continue;
                    double* dw = &grads[spec.w_off + o * spec.in];
                    const double* w = &params_[spec.w_off + o * spec.in];
                    for (std::size_t i = 0; i < spec.in; ++i) {
                        dw[i] += g * x_row[i];
                        dx_row[i] += g * w[i];
                    }
                    grads[spec.b_off + o] += g;
                }
            }
            d = std::move(dx);
        }
        return d;
    }

    void save(std::ostream& out) const {
        detail::write_u32(out, static_cast<std::uint32_t>(layers_.size()));
        detail::write_u64(out, in_dim_);
        for (const auto& spec : layers_) {
            detail::write_u64(out, spec.out);
            detail::write_u8(out, static_cast<std::uint8_t>(spec.act));
        }
        for (double p : params_) detail::write_f64(out, p);
    }

    static Mlp load(std::istream& in) {
        const std::uint32_t n_layers = detail::read_u32(in);
        if (n_layers == 0) fail(ErrorCode::bad_magic, "network with zero layers");
        const std::uint64_t in_dim = detail::read_u64(in);
        std::vector<std::pair<std::size_t, Activation>> specs;
        for (std::uint32_t l = 0; l < n_layers; ++l) {
            const std::uint64_t out = detail::read_u64(in);
            const auto act = static_cast<Activation>(detail::read_u8(in));
            specs.emplace_back(out, act);
        }
        Rng dummy(0);
        Mlp net(in_dim, specs, dummy);
        for (auto& p : net.params_) p = detail::read_f64(in);
        return net;
    }

private:
    static Matrix apply_activation(Activation act, const Matrix& pre) {
        Matrix out = pre;
        switch (act) {
            case Activation::linear:
                break;
            case Activation::tanh_act:
                for (auto& v : out.data) v = std::tanh(v);
                break;
            case Activation::relu:
                for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
                break;
            case Activation::l2norm:
                for (std::size_t r = 0; r < out.rows; ++r) {
                    auto row = out.row(r);
                    const double n = std::max(norm(row), 1e-12);
                    for (auto& v : row) v /= n;
                }
                break;
        }
        return out;
    }

    std::vector<LayerSpec> layers_;
    std::vector<double> params_;
    std::size_t in_dim_ = 0;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;
    double rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState make_adam(std::size_t param_count, double rate, double beta1 = 0.5,
                           double beta2 = 0.999, double eps = 1e-8) {
    AdamState s;
    s.m.assign(param_count, 0.0);
    s.v.assign(param_count, 0.0);
    s.rate = rate;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
}

/// One bias-corrected Adam update, in place.
inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != state.m.size() || grads.size() != state.m.size())
        fail(ErrorCode::shape_mismatch, "adam buffers do not match parameter count");
    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= state.rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

/// Central finite differences on every entry of `params` against `analytic`.
/// `eval` re-evaluates the scalar loss at the current parameter values.
/// Returns the maximum relative error |fd - an| / max(|fd| + |an|, 1e-6).
inline double finite_diff_max_rel_err(std::span<double> params, const std::function<double()>& eval,
                                      std::span<const double> analytic, double step = 1e-5) {
    if (params.size() != analytic.size())
        fail(ErrorCode::shape_mismatch, "analytic gradient size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + step;
        const double up = eval();
        params[i] = saved - step;
        const double down = eval();
        params[i] = saved;
        const double fd = (up - down) / (2.0 * step);
        const double rel = std::abs(fd - analytic[i]) / std::max(std::abs(fd) + std::abs(analytic[i]), 1e-6);
        worst = std::max(worst, rel);
    }
    return worst;
}

/// Gradient check for a single network under a scalar loss on its output.
/// `loss` maps the output batch to a scalar; `dloss` is its gradient with
/// respect to the output batch.
inline double grad_check(Mlp& net, const Matrix& input,
                         const std::function<double(const Matrix&)>& loss,
                         const std::function<Matrix(const Matrix&)>& dloss, double step = 1e-5) {
    ForwardCache cache;
    const Matrix out = net.forward(input, &cache);
    std::vector<double> analytic(net.param_count(), 0.0);
    net.backward(dloss(out), cache, analytic);
    const auto eval = [&]() { return loss(net.forward(input)); };
    return finite_diff_max_rel_err(net.params(), eval, analytic, step);
}

// ---------------------------------------------------------------------------
// Checkpoint helpers

inline void save_mlp(const Mlp& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::io_failure, "cannot open " + path + " for writing");
    net.save(out);
    if (!out) fail(ErrorCode::io_failure, "network write failed");
}

inline Mlp load_mlp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_failure, "cannot open " + path);
    return Mlp::load(in);
}

}  // namespace memgan
