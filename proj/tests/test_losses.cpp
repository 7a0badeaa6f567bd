#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rca/losses.hpp"

using namespace rca;

namespace {

Arch toy_arch(std::size_t k) {
    Arch a;
    a.input_dim = 2;
    a.encoder_widths = {6};
    a.num_classes = k;
    return a;
}

Dataset labeled_batch(std::size_t n, std::size_t k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Dataset ds;
    ds.features = Tensor({n, 2});
    for (auto& v : ds.features.data()) v = nd(rng);
    std::vector<std::size_t> cls(n);
    for (std::size_t i = 0; i < n; ++i) cls[i] = i % k;
    ds.labels = one_hot(cls, k);
    return ds;
}

ParamSet uniform_params(std::size_t k) { return ParamSet::zeros_like(init_params(toy_arch(k), 0)); }

LossWeights no_vat() {
    LossWeights w;
    w.lambda_svat = w.lambda_tvat = 0;
    w.eps_x = 0.1;
    return w;
}

}  // namespace

TEST(CrossEntropy, Examples) {
    std::vector<double> p(10, 0.1), y(10, 0.0);
    y[4] = 1;
    EXPECT_NEAR(cross_entropy(p, y), std::log(10.0), 1e-12);
    EXPECT_LE(cross_entropy(y, y), -std::log(1 - 1e-12));
    const std::vector<double> q{0.7, 0.2, 0.1}, e1{1, 0, 0};
    EXPECT_NEAR(cross_entropy(q, e1), 0.356675, 1e-6);
    EXPECT_THROW(cross_entropy(q, y), std::invalid_argument);
}

TEST(Entropy, Examples) {
    EXPECT_NEAR(entropy(std::vector<double>(4, 0.25)), std::log(4.0), 1e-12);
    EXPECT_EQ(entropy(std::vector<double>{0, 1, 0}), 0.0);
    EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.5, 0, 0}), std::log(2.0), 1e-12);
}

TEST(JointLabel, Layout) {
    const std::vector<double> e2{0, 1, 0}, e1{1, 0};
    EXPECT_EQ(joint_label(e2, Domain::Source, false), (std::vector<double>{0, 1, 0, 0, 0, 0}));
    EXPECT_EQ(joint_label(e2, Domain::Source, true), (std::vector<double>{0, 0, 0, 0, 1, 0}));
    EXPECT_EQ(joint_label(e1, Domain::Target, true), (std::vector<double>{1, 0, 0, 0}));
    EXPECT_EQ(joint_label(e1, Domain::Target, false), (std::vector<double>{0, 0, 1, 0}));
    EXPECT_THROW(joint_label(std::vector<double>{0.5, 0.5}, Domain::Source, false), std::invalid_argument);
}

TEST(JointLabel, SupportHalvesAreComplementary) {
    const Dataset b = labeled_batch(9, 3, 1);
    const Tensor plain = joint_labels(*b.labels, Domain::Source, false);
    const Tensor flipped = joint_labels(*b.labels, Domain::Source, true);
    for (std::size_t r = 0; r < 9; ++r)
        for (std::size_t c = 0; c < 3; ++c) {
            EXPECT_EQ(plain(r, c + 3), 0.0);
            EXPECT_EQ(flipped(r, c), 0.0);
            EXPECT_EQ(plain(r, c), flipped(r, c + 3));
        }
}

TEST(Vat, PerturbationNormEqualsEps) {
    const ParamSet p = init_params(toy_arch(3), 2);
    const Dataset b = labeled_batch(20, 3, 2);
    for (double eps : {1e-3, 0.3, 2.0}) {
        std::vector<bool> fb;
        const Tensor d = vat_perturbation(p, b.features, eps, 1e-6, 5, &fb);
        for (std::size_t r = 0; r < 20; ++r) {
            EXPECT_NEAR(std::hypot(d(r, 0), d(r, 1)), eps, 1e-9);
            EXPECT_FALSE(fb[r]);
        }
    }
}

TEST(Vat, ConstantPredictorTakesFallback) {
    ParamSet p = init_params(toy_arch(2), 2);
    for (auto& v : p.class_head.back().weight.data()) v = 0.0;
    std::vector<bool> fb;
    const Tensor d = vat_perturbation(p, labeled_batch(5, 2, 0).features, 0.5, 10.0, 1, &fb);
    for (std::size_t r = 0; r < 5; ++r) {
        EXPECT_TRUE(fb[r]);
        EXPECT_NEAR(std::hypot(d(r, 0), d(r, 1)), 0.5, 1e-9);
    }
}

TEST(Vat, ZeroRadiusGivesEntropy) {
    const ParamSet p = init_params(toy_arch(3), 4);
    const Dataset b = labeled_batch(12, 3, 4);
    const Prediction pr = class_predict(p, encode(p, b.features));
    double h = 0;
    for (std::size_t r = 0; r < 12; ++r) h += entropy(pr.probs.row(r)) / 12;
    EXPECT_NEAR(vat_loss(p, b.features, 0.0, 10.0, 0), h, 1e-12);
}

TEST(Vat, LocallyConstantPredictorGivesEntropy) {
    ParamSet p = init_params(toy_arch(3), 4);
    for (auto& v : p.encoder[0].weight.data()) v = 0.0;
    p.encoder[0].bias = Tensor::row_vector({1, -1, 0.5, 2, 0, -0.3});
    const Dataset b = labeled_batch(6, 3, 4);
    const Prediction pr = class_predict(p, encode(p, b.features));
    double h = 0;
    for (std::size_t r = 0; r < 6; ++r) h += entropy(pr.probs.row(r)) / 6;
    EXPECT_NEAR(vat_loss(p, b.features, 0.7, 10.0, 0), h, 1e-9);
}

TEST(Vat, LossBetweenEntropyAndDirectionalScanMaximum) {
    const ParamSet p = init_params(toy_arch(2), 8);
    const Dataset b = labeled_batch(1, 2, 8);
    const double eps = 0.4;
    const Prediction clean = class_predict(p, encode(p, b.features));
    double best = 0;
    for (int a = 0; a < 360; ++a) {
        const double th = a * std::numbers::pi / 180;
        Tensor x = b.features;
        x(0, 0) += eps * std::cos(th);
        x(0, 1) += eps * std::sin(th);
        best = std::max(best, cross_entropy(class_predict(p, encode(p, x)).probs.row(0), clean.probs.row(0)));
    }
    // CE(p, q) is not symmetric; the scan uses the same argument order as the loss.
    const double loss = vat_loss(p, b.features, eps, 1e-6, 3);
    EXPECT_GE(loss, entropy(clean.probs.row(0)) - 1e-9);
    EXPECT_LE(loss, best + 1e-6);
}

TEST(SourceLosses, UniformPredictor) {
    const auto s = source_losses(uniform_params(3), labeled_batch(7, 3, 0), no_vat());
    EXPECT_NEAR(s.sc, std::log(3.0), 1e-12);
    EXPECT_NEAR(s.jsc, std::log(6.0), 1e-12);
    LossWeights w = no_vat();
    w.lambda_jsc = 0;
    const auto plain = source_losses(init_params(toy_arch(3), 1), labeled_batch(7, 3, 0), w);
    EXPECT_EQ(plain.total, plain.sc);
    EXPECT_THROW(source_losses(uniform_params(3), labeled_batch(3, 3, 0).without_labels(), w), std::exception);
}

TEST(SourceLosses, SingleSampleByHand) {
    Arch a;
    a.encoder_widths = {2};
    a.encoder_output_activation = false;
    a.num_classes = 3;
    ParamSet p = init_params(a, 0);
    p.encoder[0].weight = Tensor::matrix(2, 2, {1, 0, 0, 1});
    p.class_head[0].weight = Tensor::matrix(2, 3, {0.5, -1, 2, 1.5, 0.25, -0.5});
    p.class_head[0].bias = Tensor::row_vector({0.1, 0.2, -0.3});
    Dataset b;
    b.features = Tensor::matrix(1, 2, {0.8, -0.4});
    b.labels = Tensor::matrix(1, 3, {0, 0, 1});
    const double l0 = 0.8 * 0.5 - 0.4 * 1.5 + 0.1;
    const double l1 = 0.8 * -1 - 0.4 * 0.25 + 0.2;
    const double l2 = 0.8 * 2 - 0.4 * -0.5 - 0.3;
    const double expected = -(l2 - std::log(std::exp(l0) + std::exp(l1) + std::exp(l2)));
    EXPECT_NEAR(source_losses(p, b, no_vat()).sc, expected, 1e-12);
}

TEST(TargetLosses, UniformAndConfident) {
    const Dataset t = labeled_batch(5, 3, 1).without_labels();
    const auto u = target_losses(uniform_params(3), t, no_vat());
    EXPECT_NEAR(u.te, std::log(3.0), 1e-12);
    EXPECT_NEAR(u.jtc, std::log(6.0), 1e-12);

    ParamSet p = uniform_params(3);
    p.class_head.back().bias = Tensor::row_vector({60, 0, 0});
    LossWeights w = no_vat();
    w.lambda_jtc = 0;
    const auto c = target_losses(p, t, w);
    EXPECT_LE(c.te, 1e-9);
    EXPECT_EQ(c.total, c.te);
}

TEST(AdversarialLoss, UniformAndZeroWeights) {
    const Dataset s = labeled_batch(4, 3, 0), t = labeled_batch(6, 3, 1).without_labels();
    LossWeights w = no_vat();
    w.lambda_jsa = w.lambda_jta = 1;
    EXPECT_NEAR(adversarial_loss(uniform_params(3), s, t, w), 2 * std::log(6.0), 1e-12);
    w.lambda_jsa = w.lambda_jta = 0;
    EXPECT_EQ(adversarial_loss(init_params(toy_arch(3), 3), s, t, w), 0.0);
}

TEST(TotalLoss, Examples) {
    const Dataset s = labeled_batch(4, 3, 0), t = labeled_batch(6, 3, 1).without_labels();
    LossWeights w = no_vat();
    w.lambda_jsc = w.lambda_jtc = 1;
    w.lambda_t = 0.1;
    EXPECT_NEAR(total_loss(uniform_params(3), s, t, w), 1.1 * (std::log(3.0) + std::log(6.0)), 1e-12);
    w.lambda_t = 0;
    const ParamSet p = init_params(toy_arch(3), 6);
    EXPECT_EQ(total_loss(p, s, t, w), source_losses(p, s, w).total);
}

TEST(Graph, PseudoLabelsAndCleanBranchCarryNoGradient) {
    const ParamSet p = init_params(toy_arch(3), 3);
    const Dataset t = labeled_batch(8, 3, 2).without_labels();
    ad::Tape tape;
    const BoundParams b = bind(tape, p, GroupMask{});
    std::mt19937_64 rng(0);
    GraphContext ctx;
    ctx.params = &p;
    ctx.bound = &b;
    ctx.vat_rng = &rng;
    LossWeights w = no_vat();
    w.lambda_tvat = 1;
    const TargetTerms terms = build_target_terms(ctx, tape.constant(t.features), w);
    // Joint terms reach the joint head only.
    const ParamSet g = collect_gradients(tape.backward(terms.jtc), b, p, GroupMask{});
    for (const auto& l : g.encoder)
        for (double v : l.weight.data()) EXPECT_EQ(v, 0.0);
    for (const auto& l : g.class_head)
        for (double v : l.weight.data()) EXPECT_EQ(v, 0.0);
    double joint_norm = 0;
    for (const auto& l : g.joint_head)
        for (double v : l.weight.data()) joint_norm += std::abs(v);
    EXPECT_GT(joint_norm, 0.0);
    ASSERT_TRUE(terms.tvat.has_value());
    EXPECT_TRUE(std::isfinite(terms.tvat->value().item()));
}

TEST(Invariants, LossesFiniteAndNonnegative) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ParamSet p = init_params(toy_arch(3), seed);
        for (auto& v : p.class_head.back().weight.data()) v *= 200;
        const Dataset s = labeled_batch(5, 3, seed), t = labeled_batch(5, 3, seed + 50).without_labels();
        LossWeights w;
        w.eps_x = 0.2;
        const auto sl = source_losses(p, s, w, seed);
        const auto tl = target_losses(p, t, w, seed);
        for (double v : {sl.sc, sl.svat, sl.jsc, sl.total, tl.te, tl.tvat, tl.jtc, tl.total,
                         adversarial_loss(p, s, t, w)}) {
            EXPECT_TRUE(std::isfinite(v));
            EXPECT_GE(v, 0.0);
        }
    }
}
