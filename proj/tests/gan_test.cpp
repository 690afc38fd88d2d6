#include "memgan/gan.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace memgan;

namespace {

/// Inference net that normalizes its input: a single l2norm layer with
/// identity weights, so mu(x) = x / ||x||.
Mlp identity_inference(std::size_t dim) {
    Rng rng(1);
    const std::vector<std::pair<std::size_t, Activation>> layers{{dim, Activation::l2norm}};
    Mlp net(dim, layers, rng);
    auto params = net.params();
    const auto& spec = net.layers()[0];
    for (std::size_t i = 0; i < dim * dim; ++i) params[spec.w_off + i] = 0.0;
    for (std::size_t i = 0; i < dim; ++i) params[spec.w_off + i * dim + i] = 1.0;
    for (std::size_t i = 0; i < dim; ++i) params[spec.b_off + i] = 0.0;
    return net;
}

MemoryState two_slot_memory(std::uint8_t v0, std::uint8_t v1, double kappa = 1.0) {
    MemoryParams params;
    params.top_k = 2;
    params.kappa = kappa;
    MemoryState s = init_memory(2, 2, params, 3);
    copy_into(std::vector<double>{1.0, 0.0}, s.keys.row(0));
    copy_into(std::vector<double>{0.0, 1.0}, s.keys.row(1));
    s.histogram = {1.0, 1.0};
    s.values = {v0, v1};
    return s;
}

FakeBatch unconditioned_batch(const std::vector<std::vector<double>>& rows) {
    FakeBatch fb;
    fb.x = Matrix(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) copy_into(rows[i], fb.x.row(i));
    return fb;
}

FakeBatch conditioned_batch(const std::vector<std::vector<double>>& rows,
                            const std::vector<std::vector<double>>& keys) {
    FakeBatch fb = unconditioned_batch(rows);
    fb.latents.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        fb.latents[i].key = keys[i];
        fb.latents[i].slot = 0;
        fb.latents[i].noise = {0.0};
    }
    return fb;
}

}  // namespace

TEST(InfoTerm, AlignedQueriesGiveMinusOne) {
    const Mlp inf = identity_inference(2);
    const MemoryState s = two_slot_memory(1, 0);
    const FakeBatch fb = conditioned_batch({{1.0, 0.0}, {0.0, 1.0}}, {{1.0, 0.0}, {0.0, 1.0}});
    EXPECT_NEAR(info_term(s, inf, fb), -1.0, 1e-12);
}

TEST(InfoTerm, OrthogonalQueriesGiveZero) {
    const Mlp inf = identity_inference(2);
    const MemoryState s = two_slot_memory(1, 0);
    const FakeBatch fb = conditioned_batch({{0.0, 1.0}, {1.0, 0.0}}, {{1.0, 0.0}, {0.0, 1.0}});
    EXPECT_NEAR(info_term(s, inf, fb), 0.0, 1e-12);
}

TEST(InfoTerm, AntipodalQueriesGivePlusOne) {
    const Mlp inf = identity_inference(2);
    const MemoryState s = two_slot_memory(1, 0);
    const FakeBatch fb = conditioned_batch({{-1.0, 0.0}, {0.0, -1.0}}, {{1.0, 0.0}, {0.0, 1.0}});
    EXPECT_NEAR(info_term(s, inf, fb), 1.0, 1e-12);
}

TEST(InfoTerm, BoundedByKappa) {
    Rng rng(44);
    for (int rep = 0; rep < 30; ++rep) {
        const double kappa = 0.5 + 3.0 * rng.uniform();
        Matrix q(4, 3);
        std::vector<LatentSample> latents(4);
        for (std::size_t b = 0; b < 4; ++b) {
            const auto qr = testutil::random_unit(rng, 3);
            copy_into(qr, q.row(b));
            latents[b].key = testutil::random_unit(rng, 3);
        }
        const double value = info_term_from_queries(kappa, q, latents);
        EXPECT_LE(std::abs(value), kappa + 1e-12);
    }
}

TEST(DLoss, SymmetricDiscriminatorGivesTwoLnTwo) {
    const Mlp inf = identity_inference(2);
    const MemoryState s = two_slot_memory(1, 0);
    // both keys equidistant from [1,1]: D = 0.5 for real and fake alike
    const Matrix real = unconditioned_batch({{1.0, 1.0}}).x;
    const FakeBatch fake = unconditioned_batch({{1.0, 1.0}});
    EXPECT_NEAR(d_loss(s, inf, real, fake, 0.0), 2.0 * std::log(2.0), 1e-9);
    EXPECT_NEAR(d_loss(s, inf, real, fake, 0.0), 1.3863, 1e-4);
}

TEST(DLoss, PerfectDiscriminatorHitsClipBounds) {
    const Mlp inf = identity_inference(2);
    const MemoryState s = two_slot_memory(1, 0, /*kappa=*/50.0);
    const Matrix real = unconditioned_batch({{1.0, 0.0}}).x;     // at the real key
    const FakeBatch fake = unconditioned_batch({{0.0, 1.0}});    // at the fake key
    EXPECT_NEAR(d_loss(s, inf, real, fake, 0.0), -2.0 * std::log(0.999), 1e-9);
    EXPECT_NEAR(d_loss(s, inf, real, fake, 0.0), 0.002001, 1e-6);
}

TEST(DLoss, LambdaZeroIsPlainGanLoss) {
    Rng rng(7);
    const MemoryState s = testutil::random_state(rng, 10, 3, 4);
    const Mlp inf = identity_inference(3);
    Matrix real(3, 3);
    for (auto& v : real.data) v = rng.normal();
    FakeBatch fake;
    fake.x = Matrix(3, 3);
    for (auto& v : fake.x.data) v = rng.normal();

    double expected = 0.0;
    for (std::size_t b = 0; b < 3; ++b) {
        std::vector<double> qr(real.row(b).begin(), real.row(b).end());
        std::vector<double> qf(fake.x.row(b).begin(), fake.x.row(b).end());
        normalize(qr);
        normalize(qf);
        expected -= std::log(discriminative_prob(s, Query(qr))) / 3.0;
        expected -= std::log(1.0 - discriminative_prob(s, Query(qf))) / 3.0;
    }
    EXPECT_NEAR(d_loss(s, inf, real, fake, 0.0), expected, 1e-12);
}

TEST(GLoss, SymmetricCase) {
    const Mlp inf = identity_inference(2);
    const MemoryState s = two_slot_memory(1, 0);
    const FakeBatch fake = unconditioned_batch({{1.0, 1.0}});
    EXPECT_NEAR(g_loss(s, inf, fake, 0.0), std::log(0.5), 1e-9);
    EXPECT_NEAR(g_loss(s, inf, fake, 0.0), -0.6931, 1e-4);
}

TEST(GLoss, FooledDiscriminatorHitsClipBound) {
    const Mlp inf = identity_inference(2);
    const MemoryState s = two_slot_memory(1, 0, /*kappa=*/50.0);
    const FakeBatch fake = unconditioned_batch({{1.0, 0.0}});  // lands on the real key
    EXPECT_NEAR(g_loss(s, inf, fake, 0.0), std::log(0.001), 1e-9);
    EXPECT_NEAR(g_loss(s, inf, fake, 0.0), -6.9078, 1e-4);
}

TEST(GLoss, LambdaScalesInfoContributionLinearly) {
    const Mlp inf = identity_inference(2);
    const MemoryState s = two_slot_memory(1, 0);
    const FakeBatch fake =
        conditioned_batch({{0.6, 0.8}, {1.0, 0.0}}, {{1.0, 0.0}, {0.0, 1.0}});
    const double base = g_loss(s, inf, fake, 0.0);
    const double one = g_loss(s, inf, fake, 0.5);
    const double two = g_loss(s, inf, fake, 1.0);
    EXPECT_NEAR(two - base, 2.0 * (one - base), 1e-12);
}

TEST(McgnSample, SingleRealSlotAlwaysChosen) {
    MemoryState s = two_slot_memory(0, 1);
    Rng model_rng(5);
    const std::vector<std::pair<std::size_t, Activation>> layers{{2, Activation::linear}};
    Mlp gen(2 + 1, layers, model_rng);  // key_dim 2 + noise 1
    Rng rng(11);
    const FakeBatch fb = mcgn_sample(gen, s, rng, 16);
    ASSERT_EQ(fb.latents.size(), 16u);
    for (const auto& ls : fb.latents) {
        EXPECT_EQ(ls.slot, 1u);
        EXPECT_EQ(ls.key, (std::vector<double>{0.0, 1.0}));
    }
}

TEST(McgnSample, SlotFrequenciesFollowHistogram) {
    MemoryParams params;
    params.top_k = 3;
    MemoryState s = init_memory(3, 2, params, 3);
    copy_into(std::vector<double>{1.0, 0.0}, s.keys.row(0));
    copy_into(std::vector<double>{0.0, 1.0}, s.keys.row(1));
    copy_into(std::vector<double>{-1.0, 0.0}, s.keys.row(2));
    s.values = {1, 1, 0};
    s.histogram = {2.0, 2.0, 4.0};
    Rng model_rng(5);
    const std::vector<std::pair<std::size_t, Activation>> layers{{2, Activation::linear}};
    const Mlp gen(3, layers, model_rng);
    Rng rng(13);
    std::vector<std::size_t> counts(3, 0);
    const std::size_t draws = 8000;
    const FakeBatch fb = mcgn_sample(gen, s, rng, draws);
    for (const auto& ls : fb.latents) counts[ls.slot]++;
    EXPECT_NEAR(static_cast<double>(counts[0]) / draws, 0.5, 0.02);
    EXPECT_NEAR(static_cast<double>(counts[1]) / draws, 0.5, 0.02);
    EXPECT_EQ(counts[2], 0u);
}

TEST(McgnSample, DeterministicGivenRngState) {
    Rng rng_state(9);
    const MemoryState s = testutil::random_state(rng_state, 6, 3, 3);
    Rng model_rng(5);
    const std::vector<std::pair<std::size_t, Activation>> layers{{4, Activation::linear}};
    const Mlp gen(3 + 2, layers, model_rng);
    Rng a(77), b(77);
    const FakeBatch fa = mcgn_sample(gen, s, a, 8);
    const FakeBatch fb = mcgn_sample(gen, s, b, 8);
    for (std::size_t i = 0; i < fa.x.data.size(); ++i) EXPECT_EQ(fa.x.data[i], fb.x.data[i]);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(fa.latents[i].slot, fb.latents[i].slot);
}

TEST(RunningAverageWrite, NormalizedSum) {
    MemoryParams params;
    params.top_k = 1;
    MemoryState s = init_memory(1, 2, params, 1);
    copy_into(std::vector<double>{1.0, 0.0}, s.keys.row(0));
    s.values[0] = 1;
    s.histogram[0] = 0.8;
    running_average_write(s, Query({0.0, 1.0}, std::uint8_t{1}));
    const double r = std::sqrt(0.5);
    EXPECT_NEAR(s.keys.at(0, 0), r, 1e-12);
    EXPECT_NEAR(s.keys.at(0, 1), r, 1e-12);
    EXPECT_DOUBLE_EQ(s.histogram[0], 0.8);  // histogram untouched on this path
}

TEST(RunningAverageWrite, FixedPointAtKey) {
    MemoryParams params;
    params.top_k = 1;
    MemoryState s = init_memory(1, 2, params, 1);
    copy_into(std::vector<double>{0.0, 1.0}, s.keys.row(0));
    s.values[0] = 1;
    s.histogram[0] = 1.0;
    running_average_write(s, Query({0.0, 1.0}, std::uint8_t{1}));
    EXPECT_NEAR(s.keys.at(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(s.keys.at(0, 1), 1.0, 1e-12);
}

TEST(RunningAverageWrite, SharedAllocationPath) {
    Rng rng(15);
    MemoryState a = init_memory(8, 3, MemoryParams{.top_k = 4}, 19);
    MemoryState b = a;
    const auto q = testutil::random_unit(rng, 3);
    const WriteResult ra = running_average_write(a, Query(q, std::uint8_t{1}));
    const WriteResult rb = write(b, Query(q, std::uint8_t{1}));
    EXPECT_TRUE(ra.allocated);
    EXPECT_TRUE(rb.allocated);
    EXPECT_EQ(ra.touched, rb.touched);
    for (std::size_t i = 0; i < a.keys.data.size(); ++i)
        EXPECT_EQ(a.keys.data[i], b.keys.data[i]);
}

namespace {

GanModel small_model(AblationMode mode, std::uint64_t seed, std::size_t data_dim = 2,
                     std::size_t key_dim = 4) {
    NetsConfig cfg;
    cfg.data_dim = data_dim;
    cfg.key_dim = key_dim;
    cfg.noise_dim = 2;
    cfg.hidden = 8;
    cfg.learning_rate = 1e-3;
    cfg.lambda = 2e-6;
    cfg.mode = mode;
    return make_gan_model(cfg, seed);
}

MemoryState small_memory(std::uint64_t seed, std::size_t key_dim = 4) {
    MemoryParams params;
    params.top_k = 4;
    return init_memory(16, key_dim, params, seed);
}

Matrix random_batch(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (auto& v : m.data) v = rng.normal();
    return m;
}

}  // namespace

TEST(TrainStep, ParametersMoveOnNonzeroGradients) {
    GanModel model = small_model(AblationMode::full, 3);
    MemoryState mem = small_memory(5);
    Rng data_rng(31), step_rng(33);
    const std::vector<double> gen_before(model.generator.params().begin(),
                                         model.generator.params().end());
    const std::vector<double> inf_before(model.inference.params().begin(),
                                         model.inference.params().end());
    // two steps: the first one populates the fresh memory, after which the
    // discriminator gradient is nonzero
    for (int step = 0; step < 2; ++step) {
        const Matrix batch = random_batch(data_rng, 8, 2);
        train_step(model, mem, batch, step_rng);
    }
    std::size_t gen_moved = 0, inf_moved = 0;
    for (std::size_t i = 0; i < gen_before.size(); ++i)
        gen_moved += model.generator.params()[i] != gen_before[i];
    for (std::size_t i = 0; i < inf_before.size(); ++i)
        inf_moved += model.inference.params()[i] != inf_before[i];
    EXPECT_GT(gen_moved, 0u);
    EXPECT_GT(inf_moved, 0u);
}

TEST(TrainStep, NoMemoryModeLeavesMemoryUntouched) {
    GanModel model = small_model(AblationMode::no_memory, 3);
    MemoryState mem = small_memory(5);
    const MemoryState before = mem;
    Rng data_rng(31), step_rng(33);
    const Matrix batch = random_batch(data_rng, 8, 2);
    const GanLosses losses = train_step(model, mem, batch, step_rng);
    EXPECT_EQ(mem.values, before.values);
    EXPECT_EQ(mem.ages, before.ages);
    for (std::size_t i = 0; i < mem.keys.data.size(); ++i)
        EXPECT_EQ(mem.keys.data[i], before.keys.data[i]);
    for (std::size_t i = 0; i < mem.histogram.size(); ++i)
        EXPECT_EQ(mem.histogram[i], before.histogram[i]);
    EXPECT_EQ(losses.info_term, 0.0);
}

TEST(TrainStep, DeterministicAcrossIdenticalRuns) {
    for (const AblationMode mode : {AblationMode::full, AblationMode::no_em,
                                    AblationMode::no_mcgn, AblationMode::no_memory}) {
        GanModel m1 = small_model(mode, 7);
        GanModel m2 = small_model(mode, 7);
        MemoryState s1 = small_memory(9);
        MemoryState s2 = small_memory(9);
        Rng d1(41), d2(41), t1(43), t2(43);
        for (int step = 0; step < 3; ++step) {
            const Matrix b1 = random_batch(d1, 6, 2);
            const Matrix b2 = random_batch(d2, 6, 2);
            const GanLosses l1 = train_step(m1, s1, b1, t1);
            const GanLosses l2 = train_step(m2, s2, b2, t2);
            EXPECT_EQ(l1.d_loss, l2.d_loss);
            EXPECT_EQ(l1.g_loss, l2.g_loss);
            EXPECT_EQ(l1.info_term, l2.info_term);
        }
        for (std::size_t i = 0; i < m1.generator.param_count(); ++i)
            EXPECT_EQ(m1.generator.params()[i], m2.generator.params()[i]);
    }
}

TEST(TrainStep, NoMcgnWithFullKMatchesExactMarginalization) {
    // with k = N and lambda = 0, the discriminator pipeline is the exact
    // mixture classifier; compare against a brute-force evaluation
    Rng rng(51);
    MemoryState mem = testutil::random_state(rng, 12, 4, 12);
    mem.params.top_k = 12;
    GanModel model = small_model(AblationMode::no_mcgn, 3, 2, 4);
    model.lambda = 0.0;

    const Matrix real = random_batch(rng, 5, 2);
    Rng fake_rng(53);
    const FakeBatch fake = plain_sample(model.generator, fake_rng, 5);

    const Matrix q_real = model.inference.forward(real);
    const Matrix q_fake = model.inference.forward(fake.x);
    double expected = 0.0;
    const double eps = mem.params.epsilon;
    for (std::size_t b = 0; b < 5; ++b) {
        std::vector<double> qr(q_real.row(b).begin(), q_real.row(b).end());
        std::vector<double> qf(q_fake.row(b).begin(), q_fake.row(b).end());
        const double pr = std::clamp(testutil::brute_real_marginal(mem, qr), eps, 1.0 - eps);
        const double pf = std::clamp(testutil::brute_real_marginal(mem, qf), eps, 1.0 - eps);
        expected += (-std::log(pr) - std::log(1.0 - pf)) / 5.0;
    }
    EXPECT_NEAR(d_loss(mem, model.inference, real, fake, 0.0), expected, 1e-9);
}

TEST(Gradients, DiscriminatorLossMatchesFiniteDifferences) {
    for (std::uint64_t seed : {1ull, 2ull}) {
        Rng rng(seed);
        MemoryState mem = testutil::random_state(rng, 10, 4, 5);
        GanModel model = small_model(AblationMode::full, seed, 3, 4);
        const Matrix real = random_batch(rng, 4, 3);
        Rng fake_rng(seed + 10);
        const FakeBatch fake = mcgn_sample(model.generator, mem, fake_rng, 4);
        const double lambda = 0.01;  // large enough for the info term to register

        std::vector<double> analytic(model.inference.param_count(), 0.0);
        d_loss_with_grads(mem, model.inference, real, fake, lambda, analytic);
        const auto eval = [&]() { return d_loss(mem, model.inference, real, fake, lambda); };
        const double err =
            finite_diff_max_rel_err(model.inference.params(), eval, analytic, 1e-5);
        EXPECT_LT(err, 1e-3) << "seed " << seed;
    }
}

TEST(Gradients, GeneratorLossMatchesFiniteDifferences) {
    for (std::uint64_t seed : {3ull, 4ull}) {
        Rng rng(seed);
        MemoryState mem = testutil::random_state(rng, 10, 4, 5);
        GanModel model = small_model(AblationMode::full, seed, 3, 4);
        std::vector<LatentSample> latents;
        Rng sample_rng(seed + 20);
        const Matrix gen_input = memgan::detail::build_mcgn_input(mem, sample_rng, 4, 2, latents);
        const double lambda = 0.01;

        std::vector<double> analytic(model.generator.param_count(), 0.0);
        g_loss_with_grads(mem, model.inference, model.generator, gen_input, latents, lambda,
                          false, analytic);
        const auto eval = [&]() {
            FakeBatch fb;
            fb.x = model.generator.forward(gen_input);
            fb.latents = latents;
            return g_loss(mem, model.inference, fb, lambda, false);
        };
        const double err =
            finite_diff_max_rel_err(model.generator.params(), eval, analytic, 1e-5);
        EXPECT_LT(err, 1e-3) << "seed " << seed;
    }
}

TEST(Gradients, PlainPathMatchesFiniteDifferences) {
    Rng rng(61);
    GanModel model = small_model(AblationMode::no_memory, 5, 2, 4);
    const Matrix real = random_batch(rng, 4, 2);
    Rng fake_rng(62);
    const FakeBatch fake = plain_sample(model.generator, fake_rng, 4);
    const double eps = 1e-3;

    std::vector<double> analytic(model.plain_disc.param_count(), 0.0);
    plain_d_loss_with_grads(model.plain_disc, real, fake.x, eps, analytic);
    const auto eval = [&]() {
        std::vector<double> scratch(model.plain_disc.param_count(), 0.0);
        return plain_d_loss_with_grads(model.plain_disc, real, fake.x, eps, scratch);
    };
    EXPECT_LT(finite_diff_max_rel_err(model.plain_disc.params(), eval, analytic, 1e-5), 1e-3);

    Matrix z = random_batch(rng, 4, 2);
    std::vector<double> gen_analytic(model.generator.param_count(), 0.0);
    plain_g_loss_with_grads(model.plain_disc, model.generator, z, eps, false, gen_analytic);
    const auto gen_eval = [&]() {
        std::vector<double> scratch(model.generator.param_count(), 0.0);
        return plain_g_loss_with_grads(model.plain_disc, model.generator, z, eps, false, scratch);
    };
    EXPECT_LT(finite_diff_max_rel_err(model.generator.params(), gen_eval, gen_analytic, 1e-5),
              1e-3);
}
