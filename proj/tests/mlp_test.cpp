#include "memgan/mlp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"

using namespace memgan;

namespace {

using LayerList = std::vector<std::pair<std::size_t, Activation>>;

Mlp make_net(std::size_t in, const LayerList& layers, std::uint64_t seed) {
    Rng rng(seed);
    return Mlp(in, layers, rng);
}

/// Single-layer net with explicit weights/bias.
Mlp explicit_single(std::size_t in, std::size_t out, Activation act,
                    const std::vector<double>& w, const std::vector<double>& b) {
    Mlp net = make_net(in, {{out, act}}, 1);
    auto params = net.params();
    const auto& spec = net.layers()[0];
    for (std::size_t i = 0; i < w.size(); ++i) params[spec.w_off + i] = w[i];
    for (std::size_t i = 0; i < b.size(); ++i) params[spec.b_off + i] = b[i];
    return net;
}

Matrix row_matrix(const std::vector<double>& v) {
    Matrix m(1, v.size());
    copy_into(v, m.row(0));
    return m;
}

}  // namespace

TEST(Forward, SingleAffineLayer) {
    const Mlp net = explicit_single(1, 1, Activation::linear, {2.0}, {1.0});
    const Matrix y = net.forward(row_matrix({3.0}));
    EXPECT_DOUBLE_EQ(y.at(0, 0), 7.0);
}

TEST(Forward, L2NormLayer) {
    const Mlp net = explicit_single(2, 2, Activation::l2norm, {1, 0, 0, 1}, {0, 0});
    const Matrix y = net.forward(row_matrix({3.0, 4.0}));
    EXPECT_NEAR(y.at(0, 0), 0.6, 1e-12);
    EXPECT_NEAR(y.at(0, 1), 0.8, 1e-12);
    EXPECT_NEAR(norm(y.row(0)), 1.0, 1e-9);
}

TEST(Forward, IdentityPassThrough) {
    const Mlp net = explicit_single(3, 3, Activation::linear,
                                    {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0});
    const Matrix x = row_matrix({0.3, -1.7, 2.2});
    const Matrix y = net.forward(x);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y.at(0, i), x.at(0, i));
}

TEST(Forward, PureAndRepeatable) {
    const Mlp net = make_net(3, {{8, Activation::tanh_act}, {2, Activation::linear}}, 7);
    Rng rng(9);
    Matrix x(4, 3);
    for (auto& v : x.data) v = rng.normal();
    const Matrix a = net.forward(x);
    const Matrix b = net.forward(x);
    for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_EQ(a.data[i], b.data[i]);
}

TEST(Forward, DimensionMismatch) {
    const Mlp net = make_net(3, {{2, Activation::linear}}, 1);
    try {
        net.forward(Matrix(1, 4));
        FAIL() << "expected dimension mismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
    }
}

TEST(Mlp, L2NormOnlyFinal) {
    EXPECT_THROW(make_net(2, {{2, Activation::l2norm}, {2, Activation::linear}}, 1), Error);
}

TEST(Backward, SquareLossThroughLinear) {
    // y = w * x with w = 3, x = 1; loss = y^2 -> dL/dw = 2*y*x = 6
    Mlp net = explicit_single(1, 1, Activation::linear, {3.0}, {0.0});
    ForwardCache cache;
    const Matrix y = net.forward(row_matrix({1.0}), &cache);
    Matrix dy(1, 1);
    dy.at(0, 0) = 2.0 * y.at(0, 0);
    std::vector<double> grads(net.param_count(), 0.0);
    net.backward(dy, cache, grads);
    EXPECT_DOUBLE_EQ(grads[net.layers()[0].w_off], 6.0);
}

TEST(Backward, L2NormJacobian) {
    Mlp net = explicit_single(2, 2, Activation::l2norm, {1, 0, 0, 1}, {0, 0});
    ForwardCache cache;
    net.forward(row_matrix({3.0, 4.0}), &cache);
    Matrix dy(1, 2, 0.0);
    dy.at(0, 0) = 1.0;
    std::vector<double> grads(net.param_count(), 0.0);
    const Matrix dx = net.backward(dy, cache, grads);
    EXPECT_NEAR(dx.at(0, 0), 0.128, 1e-12);
    EXPECT_NEAR(dx.at(0, 1), -0.096, 1e-12);
}

TEST(Backward, ZeroUpstreamGivesZeroGrads) {
    Mlp net = make_net(3, {{4, Activation::tanh_act}, {2, Activation::linear}}, 3);
    ForwardCache cache;
    const Matrix y = net.forward(row_matrix({0.5, -0.2, 1.0}), &cache);
    Matrix dy(1, 2, 0.0);
    std::vector<double> grads(net.param_count(), 0.0);
    net.backward(dy, cache, grads);
    for (double g : grads) EXPECT_EQ(g, 0.0);
    (void)y;
}

TEST(Backward, MissingCache) {
    Mlp net = make_net(2, {{2, Activation::linear}}, 1);
    ForwardCache empty;
    std::vector<double> grads(net.param_count(), 0.0);
    try {
        net.backward(Matrix(1, 2), empty, grads);
        FAIL() << "expected missing cache";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::missing_cache);
    }
}

TEST(Backward, TangentSpaceProperty) {
    // through the normalization Jacobian, gradients are orthogonal to the output
    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        Mlp net = explicit_single(3, 3, Activation::l2norm,
                                  {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0});
        ForwardCache cache;
        Matrix x(1, 3);
        for (auto& v : x.data) v = rng.normal() * 2.0;
        const Matrix y = net.forward(x, &cache);
        Matrix dy(1, 3);
        for (auto& v : dy.data) v = rng.normal();
        std::vector<double> grads(net.param_count(), 0.0);
        const Matrix dx = net.backward(dy, cache, grads);
        EXPECT_NEAR(dot(y.row(0), dx.row(0)), 0.0, 1e-9);
    }
}

TEST(GradCheck, PolynomialLoss) {
    Mlp net = make_net(3, {{5, Activation::tanh_act}, {2, Activation::linear}}, 23);
    Rng rng(5);
    Matrix x(4, 3);
    for (auto& v : x.data) v = rng.normal();
    const auto loss = [](const Matrix& y) {
        double acc = 0.0;
        for (double v : y.data) acc += 0.5 * v * v;
        return acc;
    };
    const auto dloss = [](const Matrix& y) { return y; };
    EXPECT_LT(grad_check(net, x, loss, dloss), 1e-6);
}

TEST(GradCheck, ReluAndDeepStack) {
    Mlp net = make_net(4, {{6, Activation::relu}, {6, Activation::tanh_act},
                           {3, Activation::linear}}, 29);
    Rng rng(31);
    Matrix x(5, 4);
    for (auto& v : x.data) v = rng.normal();
    const auto loss = [](const Matrix& y) {
        double acc = 0.0;
        for (double v : y.data) acc += std::cos(v) + 0.25 * v * v;
        return acc;
    };
    const auto dloss = [](const Matrix& y) {
        Matrix d = y;
        for (std::size_t i = 0; i < y.data.size(); ++i)
            d.data[i] = -std::sin(y.data[i]) + 0.5 * y.data[i];
        return d;
    };
    EXPECT_LT(grad_check(net, x, loss, dloss), 1e-6);
}

TEST(GradCheck, L2NormNetworkWithinLooserTolerance) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Mlp net = make_net(3, {{6, Activation::tanh_act}, {4, Activation::l2norm}}, seed);
        Rng rng(seed + 100);
        Matrix x(3, 3);
        for (auto& v : x.data) v = rng.normal();
        const auto loss = [](const Matrix& y) {
            double acc = 0.0;
            for (double v : y.data) acc += std::sin(2.0 * v);
            return acc;
        };
        const auto dloss = [](const Matrix& y) {
            Matrix d = y;
            for (std::size_t i = 0; i < y.data.size(); ++i)
                d.data[i] = 2.0 * std::cos(2.0 * y.data[i]);
            return d;
        };
        EXPECT_LT(grad_check(net, x, loss, dloss), 1e-3) << "seed " << seed;
    }
}

TEST(GradCheck, PlainNetsTightToleranceAcrossSeeds) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Mlp net = make_net(2, {{8, Activation::tanh_act}, {8, Activation::tanh_act},
                               {2, Activation::linear}}, seed);
        Rng rng(seed + 50);
        Matrix x(4, 2);
        for (auto& v : x.data) v = rng.normal();
        const auto loss = [](const Matrix& y) {
            double acc = 0.0;
            for (double v : y.data) acc += 0.5 * v * v;
            return acc;
        };
        const auto dloss = [](const Matrix& y) { return y; };
        EXPECT_LT(grad_check(net, x, loss, dloss), 1e-6) << "seed " << seed;
    }
}

TEST(Adam, ZeroGradientIsFixedPoint) {
    AdamState opt = make_adam(3, 0.1);
    std::vector<double> params{1.0, -2.0, 0.5};
    const std::vector<double> before = params;
    const std::vector<double> grads{0.0, 0.0, 0.0};
    adam_step(opt, params, grads);
    EXPECT_EQ(params, before);
}

TEST(Adam, FirstStepApproximatesSignedRate) {
    AdamState opt = make_adam(2, 0.01, 0.5, 0.999, 1e-12);
    std::vector<double> params{0.0, 0.0};
    const std::vector<double> grads{0.5, -2.0};
    adam_step(opt, params, grads);
    // bias-corrected first step: m_hat = g, v_hat = g^2 -> update = -rate * sign(g)
    EXPECT_NEAR(params[0], -0.01, 1e-8);
    EXPECT_NEAR(params[1], 0.01, 1e-8);
}

TEST(Adam, Deterministic) {
    AdamState a = make_adam(2, 0.05);
    AdamState b = make_adam(2, 0.05);
    std::vector<double> pa{0.3, -0.4}, pb{0.3, -0.4};
    const std::vector<double> g{0.2, 0.7};
    for (int i = 0; i < 5; ++i) {
        adam_step(a, pa, g);
        adam_step(b, pb, g);
    }
    EXPECT_EQ(pa, pb);
    EXPECT_EQ(a.step, b.step);
}

TEST(Adam, ShapeMismatch) {
    AdamState opt = make_adam(2, 0.1);
    std::vector<double> params{1.0, 2.0, 3.0};
    const std::vector<double> grads{0.1, 0.1, 0.1};
    try {
        adam_step(opt, params, grads);
        FAIL() << "expected shape mismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::shape_mismatch);
    }
}

TEST(Checkpoint, ExactRoundTrip) {
    const Mlp net = make_net(3, {{6, Activation::tanh_act}, {4, Activation::l2norm}}, 77);
    std::stringstream buf;
    net.save(buf);
    const Mlp loaded = Mlp::load(buf);
    ASSERT_EQ(loaded.param_count(), net.param_count());
    for (std::size_t i = 0; i < net.param_count(); ++i)
        EXPECT_EQ(loaded.params()[i], net.params()[i]);
    EXPECT_EQ(loaded.in_dim(), net.in_dim());
    EXPECT_EQ(loaded.out_dim(), net.out_dim());
    ASSERT_EQ(loaded.layer_count(), net.layer_count());
    for (std::size_t l = 0; l < net.layer_count(); ++l)
        EXPECT_EQ(loaded.layers()[l].act, net.layers()[l].act);
}
