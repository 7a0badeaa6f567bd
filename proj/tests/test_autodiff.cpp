#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "rca/autodiff.hpp"

using namespace rca;
using ad::Tape;
using ad::Var;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Tensor t({r, c});
    for (auto& v : t.data()) v = n(rng);
    return t;
}

}  // namespace

TEST(Forward, Square) {
    Tape tape;
    Var x = tape.input("x", Tensor::scalar(3.0), true);
    Var y = x * x;
    tape.mark_output("y", y);
    EXPECT_EQ(y.value().item(), 9.0);
    EXPECT_EQ(tape.forward({{"x", Tensor::scalar(3.0)}})["y"].item(), 9.0);
    EXPECT_EQ(tape.forward({{"x", Tensor::scalar(-2.0)}})["y"].item(), 4.0);
}

TEST(Forward, SoftmaxOfZeros) {
    Tape tape;
    Var s = tape.softmax(tape.constant(Tensor({1, 4})));
    for (double v : s.value().data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Forward, IdentityMatmul) {
    Tape tape;
    const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
    Var m = matmul(tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})), tape.constant(a));
    EXPECT_EQ(m.value(), a);
}

TEST(Forward, ReplayIsBitwiseDeterministicAndLeavesTapeUntouched) {
    std::mt19937_64 rng(1);
    Tape tape;
    const Tensor x0 = random_matrix(5, 3, rng);
    Var x = tape.input("x", x0);
    Var w = tape.parameter("w", random_matrix(3, 4, rng));
    Var y = tape.sum(tape.log_softmax(tape.leaky_relu(matmul(x, w), 0.1)));
    tape.mark_output("y", y);
    const Tensor recorded = y.value();
    const Tensor x1 = random_matrix(5, 3, rng);
    const auto a = tape.forward({{"x", x1}});
    const auto b = tape.forward({{"x", x1}});
    EXPECT_EQ(a["y"], b["y"]);
    EXPECT_EQ(y.value(), recorded);
    EXPECT_EQ(tape.forward({{"x", x0}})["y"], recorded);
}

TEST(Forward, Errors) {
    Tape tape;
    Var x = tape.input("x", Tensor({2, 3}));
    tape.mark_output("y", tape.sum(x));
    EXPECT_THROW(tape.forward({}), std::invalid_argument);
    EXPECT_THROW(tape.forward({{"x", Tensor({3, 2})}}), ad::ShapeError);
    EXPECT_THROW(tape.forward({{"x", Tensor({2, 3})}, {"nope", Tensor({1})}}), std::invalid_argument);
    try {
        tape.forward({{"x", Tensor({3, 3})}});
        FAIL();
    } catch (const ad::ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("x"), std::string::npos);
    }
}

TEST(Forward, ShapeMismatchNamesTheOp) {
    Tape tape;
    try {
        matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3})));
        FAIL();
    } catch (const ad::ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("node"), std::string::npos);
    }
}

TEST(Forward, NonFiniteIntermediateNamesTheOp) {
    Tape tape;
    Var big = tape.constant(Tensor::scalar(1e200));
    try {
        big * big;
        FAIL();
    } catch (const ad::NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("mul"), std::string::npos) << e.what();
    }
}

TEST(Backward, SquareGradient) {
    Tape tape;
    Var x = tape.input("x", Tensor::scalar(3.0), true);
    EXPECT_EQ(tape.backward(x * x).wrt(x).item(), 6.0);
}

TEST(Backward, NonScalarOutputRejected) {
    Tape tape;
    Var x = tape.input("x", Tensor({1, 2}), true);
    EXPECT_THROW(tape.backward(x * x), ad::ShapeError);
}

TEST(Backward, CrossEntropyGradientIsSoftmaxMinusTarget) {
    std::mt19937_64 rng(7);
    Tape tape;
    const Tensor logits0 = random_matrix(1, 5, rng, 2.0);
    Tensor y({1, 5});
    y[3] = 1.0;
    Var logits = tape.input("logits", logits0, true);
    Var loss = tape.scale(tape.sum(tape.mul(tape.constant(y), tape.log_softmax(logits))), -1.0);
    const Tensor g = tape.backward(loss).wrt(logits);
    const Tensor p = tape.softmax(logits).value();
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(g[i], p[i] - y[i], 1e-15);
}

TEST(Backward, StopGradientLeafIsExactlyZero) {
    Tape tape;
    Var x = tape.input("x", Tensor::scalar(2.0), false);
    Var w = tape.parameter("w", Tensor::scalar(3.0));
    Var y = x * w;
    const auto g = tape.backward(y);
    EXPECT_EQ(g.wrt(x).item(), 0.0);
    EXPECT_EQ(g.wrt("w").item(), 2.0);
}

TEST(Backward, StopGradientNodeBlocksFlow) {
    Tape tape;
    Var w = tape.parameter("w", Tensor::scalar(3.0));
    Var y = tape.stop_gradient(w) * w;
    EXPECT_EQ(tape.backward(y).wrt(w).item(), 3.0);
}

TEST(Backward, ReplayValuesAreUsed) {
    Tape tape;
    Var x = tape.input("x", Tensor::scalar(3.0), true);
    Var y = x * x;
    const auto eval = tape.forward({{"x", Tensor::scalar(5.0)}});
    EXPECT_EQ(tape.backward(y, eval).wrt(x).item(), 10.0);
}

TEST(GradCheck, LinearLayerIsExact) {
    std::mt19937_64 rng(3);
    Tape tape;
    Var x = tape.input("x", random_matrix(4, 3, rng));
    Var w = tape.parameter("w", random_matrix(3, 2, rng));
    Var b = tape.parameter("b", random_matrix(1, 2, rng));
    Var c = tape.constant(random_matrix(4, 2, rng));
    Var loss = tape.sum(tape.mul(c, tape.add_row(matmul(x, w), b)));
    EXPECT_LT(ad::grad_check(tape, loss, {{"x", x.value()}}, 1e-5), 1e-7);
}

TEST(GradCheck, LeakyReluNetAwayFromKinks) {
    const double step = 1e-5;
    for (std::uint64_t seed = 0;; ++seed) {
        ASSERT_LT(seed, 100u);
        std::mt19937_64 rng(seed);
        Tape tape;
        Var x = tape.input("x", random_matrix(6, 3, rng));
        Var w1 = tape.parameter("w1", random_matrix(3, 8, rng));
        Var b1 = tape.parameter("b1", random_matrix(1, 8, rng, 0.1));
        Var w2 = tape.parameter("w2", random_matrix(8, 8, rng, 0.5));
        Var w3 = tape.parameter("w3", random_matrix(8, 4, rng, 0.5));
        Var h = tape.leaky_relu(tape.add_row(matmul(x, w1), b1), 0.1);
        h = tape.leaky_relu(matmul(h, w2), 0.1);
        Tensor y({6, 4});
        for (std::size_t r = 0; r < 6; ++r) y(r, r % 4) = 1.0;
        Var loss = tape.scale(tape.sum(tape.mul(tape.constant(y), tape.log_softmax(matmul(h, w3)))), -1.0 / 6);
        if (tape.min_abs_preactivation() <= 10 * step) continue;
        EXPECT_LT(ad::grad_check(tape, loss, {{"x", x.value()}}, step), 1e-4);
        break;
    }
}

TEST(GradCheck, EveryOpAgainstFiniteDifferences) {
    std::mt19937_64 rng(11);
    Tape tape;
    Var a = tape.parameter("a", random_matrix(3, 4, rng));
    Var b = tape.parameter("b", random_matrix(3, 4, rng));
    Var p = tape.parameter("p", Tensor::matrix(3, 4, {0.2, 0.5, 0.9, 1.4, 0.3, 0.7, 1.1, 0.6, 0.8, 0.4, 1.3, 0.25}));
    Var s = tape.sum(tape.mul(a - b, a + b));
    s = s + tape.mean(tape.softmax(a) * b);
    s = s + tape.sum(tape.log_clamped(p));
    s = s + tape.sum(tape.row_sum(tape.mul(a, a)));
    s = s + 0.5 * tape.mean(tape.dropout(b, Tensor::matrix(3, 4, {0, 2, 2, 0, 2, 2, 0, 2, 0, 0, 2, 2})));
    EXPECT_LT(ad::grad_check(tape, s, {}, 1e-5), 1e-6);
}

TEST(Numerics, SoftmaxRowsSumToOne) {
    std::mt19937_64 rng(5);
    Tape tape;
    Var s = tape.softmax(tape.constant(random_matrix(20, 7, rng, 30.0)));
    for (std::size_t r = 0; r < 20; ++r) {
        double sum = 0;
        for (double v : s.value().row(r)) {
            EXPECT_GE(v, 0.0);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Numerics, LogSoftmaxIsClamped) {
    Tape tape;
    Var l = tape.log_softmax(tape.constant(Tensor::row_vector({0.0, 1000.0})));
    EXPECT_DOUBLE_EQ(l.value()[0], std::log(ad::kLogFloor));
    EXPECT_TRUE(l.value().all_finite());
    Var c = tape.log_clamped(tape.constant(Tensor::row_vector({0.0})));
    EXPECT_DOUBLE_EQ(c.value()[0], std::log(ad::kLogFloor));
}
