#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "rca/theory.hpp"

using namespace rca;
using namespace rca::theory;

namespace {

Tensor gaussian(std::size_t n, std::size_t d, double mean, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(mean, 1.0);
    Tensor t({n, d});
    for (auto& v : t.data()) v = nd(rng);
    return t;
}

}  // namespace

TEST(Lemma1, ClosedForm) {
    const std::vector<double> a{1, 1}, b{1, 3};
    EXPECT_EQ(lemma1_minimizer(a).entries(), (std::vector<double>{0.5, 0.5}));
    EXPECT_EQ(lemma1_minimizer(b).entries(), (std::vector<double>{0.25, 0.75}));
    EXPECT_THROW(lemma1_minimizer(std::vector<double>{1, 0}), std::invalid_argument);
}

TEST(Lemma1, ProjectedGradientMatchesClosedForm) {
    const std::vector<double> alpha{0.3, 2.0, 5.5, 1.2};
    const auto it = lemma1_projected_gradient(alpha, 3);
    ASSERT_TRUE(it.converged);
    const auto exact = lemma1_minimizer(alpha);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(it.solution[i], exact[i], 1e-6);
    const auto rec = lemma1_oracle(0, 100);
    EXPECT_TRUE(rec.passed) << rec.value;
}

TEST(Lemma1, MinimizerIsProjectionFixedPoint) {
    const std::vector<double> alpha{2, 1, 4};
    const auto th = lemma1_minimizer(alpha);
    // Gradient -alpha/theta equals -sum(alpha) on every coordinate.
    std::vector<double> stepped(3);
    for (std::size_t i = 0; i < 3; ++i) stepped[i] = th[i] + 0.01 * alpha[i] / th[i];
    const auto back = project_to_simplex(stepped);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(back[i], th[i], 1e-12);
}

TEST(Lemma2, ValuesAndSymmetry) {
    const std::vector<double> p{0.2, 0.5, 0.3}, q{0.6, 0.1, 0.3};
    EXPECT_NEAR(lemma2_objective(p, p), std::log(4.0), 1e-9);
    EXPECT_GE(lemma2_objective(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 20.0);
    EXPECT_DOUBLE_EQ(lemma2_objective(p, q), lemma2_objective(q, p));
    EXPECT_GT(lemma2_objective(p, q), std::log(4.0));
    EXPECT_THROW(lemma2_objective(p, std::vector<double>{1, 0}), std::invalid_argument);
}

TEST(Lemma2, GridSearchFindsP) {
    const std::vector<double> p{0.23, 0.41, 0.36};
    const auto g = lemma2_grid_search(p);
    EXPECT_LE(std::abs(g.value - std::log(4.0)), 5e-3);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(std::abs(g.q[i] - p[i]), 0.02 + 1e-12);
    EXPECT_TRUE(lemma2_oracle(1, 20).passed);
}

TEST(Prop1, Examples) {
    DiscreteJoint one(1, 2);
    one.at(Domain::Source, 0, 0) = 1;
    one.at(Domain::Target, 0, 0) = 1;
    const auto h = prop1_optimal_predictor(one);
    EXPECT_EQ(h[0].entries(), (std::vector<double>{0.5, 0, 0.5, 0}));

    DiscreteJoint two(2, 2);
    two.at(Domain::Source, 0, 0) = 0.5;
    two.at(Domain::Source, 1, 1) = 0.5;
    two.at(Domain::Target, 1, 0) = 1;
    const auto h2 = prop1_optimal_predictor(two);
    EXPECT_EQ(h2[0][2], 0.0);
    EXPECT_EQ(h2[0][3], 0.0);

    DiscreteJoint empty(2, 2);
    empty.at(Domain::Source, 0, 0) = 1;
    empty.at(Domain::Target, 0, 1) = 1;
    EXPECT_THROW(prop1_optimal_predictor(empty), std::invalid_argument);
}

TEST(Prop1, GradientDescentConvergesToClosedForm) {
    const DiscreteJoint dj = random_dense(4, 2, 5);
    const auto closed = prop1_optimal_predictor(dj);
    const auto fit = prop1_gradient_descent(dj);
    for (std::size_t b = 0; b < 4; ++b) {
        double s = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            EXPECT_NEAR(fit.probs[b][i], closed[b][i], 1e-4);
            s += closed[b][i];
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    std::vector<std::vector<double>> closed_rows;
    for (const auto& r : closed) closed_rows.push_back(r.entries());
    EXPECT_LE(joint_classifier_objective(dj, closed_rows), joint_classifier_objective(dj, fit.probs) + 1e-12);
}

TEST(Theorem1, AlignedDisjointInstance) {
    DiscreteJoint dj(3, 3);
    for (std::size_t k = 0; k < 3; ++k) {
        dj.at(Domain::Source, k, k) = 1.0 / 3;
        dj.at(Domain::Target, k, k) = 1.0 / 3;
    }
    const auto r = theorem1_check(dj);
    EXPECT_TRUE(r.aligned);
    EXPECT_TRUE(r.disjoint);
    EXPECT_NEAR(r.encoder_objective, 2 * std::log(2.0), 1e-12);

    const std::vector<double> fractions{0.1};
    Perturbation p;
    p.domain = Domain::Target;
    p.cls = 0;
    p.from_bin = 0;
    p.to_bin = 1;
    p.fraction = 0.1;
    EXPECT_GT(encoder_objective(apply_perturbation(dj, p)), r.encoder_objective);
    for (const auto& q : perturbation_grid(dj, fractions))
        EXPECT_GT(encoder_objective(apply_perturbation(dj, q)), r.encoder_objective) << q.from_bin << q.to_bin;
}

TEST(Theorem1, SwappedTargetIsNotAligned) {
    DiscreteJoint dj(2, 2);
    dj.at(Domain::Source, 0, 0) = 0.5;
    dj.at(Domain::Source, 1, 1) = 0.5;
    dj.at(Domain::Target, 0, 1) = 0.5;
    dj.at(Domain::Target, 1, 0) = 0.5;
    const auto r = theorem1_check(dj);
    EXPECT_FALSE(r.aligned);
    // Each bin now holds a source class and a different target class.
    EXPECT_FALSE(r.disjoint);
}

TEST(Theorem1, RandomInstancesAreLocalMinima) {
    const auto rec = theorem1_oracle(2, 4);
    EXPECT_TRUE(rec.passed) << rec.value;
    const auto dj = random_aligned_disjoint(5, 2, 3);
    dj.validate();
    EXPECT_TRUE(theorem1_check(dj).aligned);
}

TEST(Discretize, KMeansSeparatesClusters) {
    Tensor pts({40, 2});
    for (std::size_t r = 0; r < 40; ++r) {
        pts(r, 0) = (r < 20 ? 0.0 : 10.0) + 0.01 * r;
        pts(r, 1) = 0.02 * r;
    }
    const KMeans km = kmeans(pts, 2, 25, 1);
    for (std::size_t r = 1; r < 20; ++r) EXPECT_EQ(km.assignment[r], km.assignment[0]);
    for (std::size_t r = 21; r < 40; ++r) EXPECT_EQ(km.assignment[r], km.assignment[20]);
    EXPECT_NE(km.assignment[0], km.assignment[20]);
    EXPECT_EQ(nearest_centroid(km.centroids, pts.row(39)), km.assignment[39]);

    const Dataset s = gen_moons(200, 0.1, 0), t = gen_moons(200, 0.1, 1);
    const DiscreteJoint dj = discretize(s, t, 16, 25, 0);
    dj.validate();
    EXPECT_EQ(dj.bins, 16u);
}

TEST(HDivergence, IdenticalDistributionsNearZero) {
    EXPECT_LE(h_divergence_proxy(gaussian(500, 2, 0, 1), gaussian(500, 2, 0, 2), 0), 0.15);
}

TEST(HDivergence, SeparableNearTwo) {
    EXPECT_GE(h_divergence_proxy(gaussian(300, 2, 0, 1), gaussian(300, 2, 10, 2), 0), 1.8);
    EXPECT_THROW(h_divergence_proxy(gaussian(3, 2, 0, 1), gaussian(30, 2, 0, 2), 0), std::invalid_argument);
}

TEST(HDivergence, GaussianThresholdScan) {
    const Tensor a = gaussian(2000, 1, 0, 3), b = gaussian(2000, 1, 2, 4);
    double best_err = 1;
    for (double th = -4; th <= 6; th += 0.001) {
        std::size_t wrong_a = 0, wrong_b = 0;
        for (double v : a.data()) wrong_a += v > th;
        for (double v : b.data()) wrong_b += v <= th;
        best_err = std::min(best_err, 0.5 * (double(wrong_a) / 2000 + double(wrong_b) / 2000));
    }
    const double optimum = 2 * (1 - 2 * best_err);
    EXPECT_NEAR(h_divergence_proxy(a, b, 0), optimum, 0.15);
}

TEST(HDivergence, AffineInvariance) {
    const Tensor a = gaussian(600, 2, 0, 5);
    Tensor b = gaussian(600, 2, 0, 6);
    for (std::size_t r = 0; r < 600; ++r) b(r, 0) += 1.0;
    auto affine = [](const Tensor& x) {
        Tensor y = x;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            y(r, 0) = 3 * x(r, 0) - x(r, 1) + 5;
            y(r, 1) = 0.5 * x(r, 0) + 2 * x(r, 1) - 1;
        }
        return y;
    };
    EXPECT_NEAR(h_divergence_proxy(a, b, 0), h_divergence_proxy(affine(a), affine(b), 0), 0.1);
}

TEST(OracleSuite, AllChecksPass) {
    for (const auto& rec : run_oracle_suite(0)) {
        EXPECT_TRUE(rec.passed) << rec.check << " value " << rec.value;
        EXPECT_EQ(rec.inputs_digest.size(), 16u);
    }
}
