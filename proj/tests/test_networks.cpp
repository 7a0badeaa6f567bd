#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "rca/networks.hpp"

using namespace rca;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    Tensor t({r, c});
    for (auto& v : t.data()) v = n(rng);
    return t;
}

Arch small_arch(std::size_t k = 3) {
    Arch a;
    a.input_dim = 2;
    a.encoder_widths = {5, 4};
    a.num_classes = k;
    return a;
}

}  // namespace

TEST(Encode, IdentityLinearEncoder) {
    Arch a;
    a.encoder_widths = {2};
    a.encoder_output_activation = false;
    ParamSet p = init_params(a, 0);
    p.encoder[0].weight = Tensor::matrix(2, 2, {1, 0, 0, 1});
    const Tensor x = Tensor::matrix(3, 2, {1, -2, 0.5, 3, -1, -1});
    EXPECT_EQ(encode(p, x), x);
}

TEST(Encode, ZeroWeightsReplicateBias) {
    Arch a;
    a.encoder_widths = {3};
    a.encoder_output_activation = false;
    ParamSet p = init_params(a, 0);
    for (auto& v : p.encoder[0].weight.data()) v = 0.0;
    p.encoder[0].bias = Tensor::row_vector({1, -2, 3});
    const Tensor z = encode(p, random_matrix(4, 2, 1));
    for (std::size_t r = 0; r < 4; ++r) {
        EXPECT_EQ(z(r, 0), 1.0);
        EXPECT_EQ(z(r, 1), -2.0);
        EXPECT_EQ(z(r, 2), 3.0);
    }
}

TEST(Encode, TwoLayerShapeAndHandComputedRow) {
    Arch a = small_arch();
    const ParamSet p = init_params(a, 4);
    const Tensor x = random_matrix(4, 2, 2);
    const Tensor z = encode(p, x);
    ASSERT_EQ(z.rows(), 4u);
    ASSERT_EQ(z.cols(), a.feature_dim());
    // Row 2 by hand.
    std::vector<double> h(5), out(4);
    for (std::size_t j = 0; j < 5; ++j) {
        double s = p.encoder[0].bias[j];
        for (std::size_t i = 0; i < 2; ++i) s += x(2, i) * p.encoder[0].weight(i, j);
        h[j] = s > 0 ? s : 0.1 * s;
    }
    for (std::size_t j = 0; j < 4; ++j) {
        double s = p.encoder[1].bias[j];
        for (std::size_t i = 0; i < 5; ++i) s += h[i] * p.encoder[1].weight(i, j);
        out[j] = s > 0 ? s : 0.1 * s;
    }
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(z(2, j), out[j], 1e-14);
}

TEST(Encode, DimensionMismatch) {
    const ParamSet p = init_params(small_arch(), 0);
    EXPECT_THROW(encode(p, Tensor({2, 3})), std::exception);
}

TEST(Predict, ZeroLogitsAreUniform) {
    Arch a = small_arch(10);
    ParamSet p = ParamSet::zeros_like(init_params(a, 0));
    const Prediction c = class_predict(p, Tensor({2, a.feature_dim()}));
    for (double v : c.probs.data()) EXPECT_DOUBLE_EQ(v, 0.1);
    a.num_classes = 3;
    p = ParamSet::zeros_like(init_params(a, 0));
    const Prediction j = joint_predict(p, Tensor({1, a.feature_dim()}));
    ASSERT_EQ(j.probs.cols(), 6u);
    for (double v : j.probs.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 6.0);
}

TEST(Predict, JointWidthIsTwiceK) {
    for (std::size_t k : {2u, 3u, 10u}) {
        const ParamSet p = init_params(small_arch(k), 1);
        EXPECT_EQ(joint_predict(p, encode(p, random_matrix(3, 2, 0))).probs.cols(), 2 * k);
    }
}

TEST(Predict, ProbabilitiesAreSimplexRows) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ParamSet p = init_params(small_arch(4), seed);
        const Tensor z = encode(p, random_matrix(8, 2, seed + 10));
        for (const Prediction& pr : {class_predict(p, z), joint_predict(p, z)})
            for (std::size_t r = 0; r < 8; ++r) {
                double s = 0;
                for (double v : pr.probs.row(r)) {
                    EXPECT_GE(v, 0.0);
                    s += v;
                }
                EXPECT_NEAR(s, 1.0, 1e-9);
            }
    }
}

TEST(Argmax, LowestIndexWinsTies) {
    const std::vector<double> a{10, 0, 0}, b{0.1, 0.7, 0.2}, c{0.5, 0.5}, d{0.25, 0.25, 0.25, 0.25};
    EXPECT_EQ(argmax(a), 0u);
    EXPECT_EQ(pseudo_label(b), (std::vector<double>{0, 1, 0}));
    EXPECT_EQ(pseudo_label(c), (std::vector<double>{1, 0}));
    EXPECT_EQ(pseudo_label(d), (std::vector<double>{1, 0, 0, 0}));
}

TEST(Argmax, PseudoLabelIsIdempotentAndMonotoneInvariant) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> p(5);
        double s = 0;
        for (auto& v : p) s += (v = u(rng));
        for (auto& v : p) v /= s;
        const auto once = pseudo_label(p);
        EXPECT_EQ(pseudo_label(once), once);
        std::vector<double> transformed(5);
        for (std::size_t i = 0; i < 5; ++i) transformed[i] = std::exp(3 * p[i]) - 7;
        EXPECT_EQ(pseudo_label(transformed), once);
    }
}

TEST(Params, GroupsPartitionEveryParameter) {
    const ParamSet p = init_params(small_arch(3), 0);
    std::size_t total = 0;
    for (auto g : kAllGroups)
        for (const auto& l : p.group(g)) total += l.weight.size() + l.bias.size();
    EXPECT_EQ(total, p.parameter_count());
    EXPECT_EQ(p.joint_head.back().weight.cols(), 6u);

    ad::Tape tape;
    const BoundParams b = bind(tape, p, GroupMask{});
    std::set<std::string> names;
    for (auto leaf : tape.leaves()) names.insert(tape.leaf_name(leaf.id()));
    EXPECT_EQ(names.size(), 2 * (p.encoder.size() + p.class_head.size() + p.joint_head.size()));
    EXPECT_TRUE(names.count("encoder.0.weight"));
    EXPECT_TRUE(names.count("joint_head.0.bias"));
}

TEST(Params, GlorotRangeAndZeroBias) {
    const Arch a = small_arch();
    const ParamSet p = init_params(a, 9);
    const double limit = std::sqrt(6.0 / (2 + 5));
    for (double v : p.encoder[0].weight.data()) EXPECT_LE(std::abs(v), limit);
    for (double v : p.encoder[0].bias.data()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(init_params(a, 9), p);
    EXPECT_FALSE(init_params(a, 10) == p);
}

TEST(Params, SaveLoadRoundTrip) {
    const ParamSet p = init_params(small_arch(3), 5);
    const auto path = std::filesystem::temp_directory_path() / "rca_params_roundtrip.bin";
    save_params(p, path);
    EXPECT_EQ(load_params(path), p);
    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out << 'x';
    }
    EXPECT_THROW(load_params(path), std::exception);
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE1";
    }
    EXPECT_THROW(load_params(path), std::exception);
    std::filesystem::remove(path);
}

TEST(Graph, TapeEncoderMatchesValueEncoder) {
    const ParamSet p = init_params(small_arch(3), 2);
    const Tensor x = random_matrix(6, 2, 8);
    ad::Tape tape;
    const BoundParams b = bind(tape, p, GroupMask::only(ParamGroup::Encoder));
    ad::Var z = encode(b, p.arch, tape.constant(x));
    EXPECT_EQ(z.value(), encode(p, x));
    EXPECT_EQ(head_logits(b.class_head, z).value(), class_predict(p, z.value()).logits);
    const auto grads = collect_gradients(tape.backward(tape.sum(z)), b, p, GroupMask::only(ParamGroup::Encoder));
    for (const auto& l : grads.class_head)
        for (double v : l.weight.data()) EXPECT_EQ(v, 0.0);
}
