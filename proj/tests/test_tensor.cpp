#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "rca/tensor.hpp"

using rca::Tensor;

TEST(Tensor, ShapeAndRowMajorLayout) {
    const Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.cols(), 3u);
    EXPECT_EQ(t(1, 0), 4.0);
    EXPECT_EQ(t.row(1)[2], 6.0);
    EXPECT_EQ(rca::shape_size(t.shape()), t.size());
}

TEST(Tensor, LowRanksBehaveAsMatrices) {
    EXPECT_EQ(Tensor::scalar(2.5).rows(), 1u);
    EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
    const Tensor v = Tensor::row_vector({1, 2, 3});
    EXPECT_EQ(v.rows(), 1u);
    EXPECT_EQ(v.cols(), 3u);
}

TEST(Tensor, RejectsZeroExtentAndBadLength) {
    EXPECT_THROW(Tensor({0, 2}), std::invalid_argument);
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Tensor, ItemNeedsOneElement) { EXPECT_THROW(Tensor({2}).item(), std::logic_error); }

TEST(Tensor, GatherRows) {
    const Tensor t = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
    const std::vector<std::size_t> idx{2, 0, 2};
    const Tensor g = t.gather_rows(idx);
    EXPECT_EQ(g, Tensor::matrix(3, 2, {5, 6, 1, 2, 5, 6}));
    const std::vector<std::size_t> bad{3};
    EXPECT_THROW(t.gather_rows(bad), std::out_of_range);
}

TEST(Tensor, FinitenessAndDiff) {
    Tensor t = Tensor::matrix(1, 2, {1, 2});
    EXPECT_TRUE(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(t.all_finite());
    EXPECT_DOUBLE_EQ(rca::max_abs_diff(Tensor::row_vector({1, 5}), Tensor::row_vector({2, 3})), 2.0);
}
