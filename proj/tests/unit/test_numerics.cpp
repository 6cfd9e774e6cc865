#include <gtest/gtest.h>

#include <cmath>

#include "splate/numerics.hpp"
#include "test_support.hpp"

using namespace splate;
using splate::testing::central_difference;
using splate::testing::random_matrix;
using splate::testing::random_vector;
using splate::testing::relative_error;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b)
{
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += a.data()[i * a.cols() + k] * b.data()[k * b.cols() + j];
            }
            out.data()[i * out.cols() + j] = acc;
        }
    }
    return out;
}

}  // namespace

TEST(Matmul, IdentityIsNeutral)
{
    rng gen(1);
    Matrix m = random_matrix(gen, 3, 4);
    EXPECT_EQ(matmul(Matrix::identity(3), m), m);
    EXPECT_EQ(matmul(m, Matrix::identity(4)), m);
}

TEST(Matmul, OneByOne)
{
    Matrix a(1, 1, std::vector<double>{2.0});
    Matrix b(1, 1, std::vector<double>{3.0});
    EXPECT_EQ(matmul(a, b)(0, 0), 6.0);
}

TEST(Matmul, MatchesTripleLoopOracle)
{
    rng gen(2);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix a = random_matrix(gen, 4, 5);
        Matrix b = random_matrix(gen, 5, 2);
        // Same summation order, so equality is exact, well inside 1e-12.
        EXPECT_EQ(matmul(a, b), naive_matmul(a, b));
    }
}

TEST(Matmul, ShapeMismatchThrows)
{
    EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), dimension_error);
    EXPECT_THROW(Matrix(2, 2, std::vector<double>{1.0}), dimension_error);
}

TEST(Relu, Examples)
{
    EXPECT_EQ(relu(Vector{-1.0, 0.0, 2.0}), (Vector{0.0, 0.0, 2.0}));
    EXPECT_EQ(relu(Vector{-3.0, -0.5}), (Vector{0.0, 0.0}));
}

TEST(Relu, MatchesScalarLoop)
{
    rng gen(3);
    Vector x = random_vector(gen, 100);
    Vector y = relu(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_EQ(y[i], x[i] < 0.0 ? 0.0 : x[i]);
    }
}

TEST(Relu, SubgradientAtZeroIsZero)
{
    EXPECT_EQ(relu_backward(Vector{0.0, 1.0, -1.0}, Vector{5.0, 5.0, 5.0}), (Vector{0.0, 5.0, 0.0}));
    EXPECT_EQ(log1p_relu_derivative(0.0), 0.0);
}

TEST(Log1pRelu, Values)
{
    EXPECT_EQ(log1p_relu(-2.0), 0.0);
    EXPECT_EQ(log1p_relu(0.0), 0.0);
    EXPECT_NEAR(log1p_relu(std::exp(1.0) - 1.0), 1.0, 1e-15);
}

TEST(AffineBackward, SumOfProductGivesOuterProduct)
{
    // loss = sum(W x + b): dL/dW = 1 x^T, dL/db = 1, dL/dx = W^T 1.
    rng gen(4);
    Matrix w = random_matrix(gen, 3, 5);
    Vector x = random_vector(gen, 5);
    Vector b = random_vector(gen, 3);
    Matrix gw(3, 5);
    Vector gb(3, 0.0);
    Vector gx = affine_backward(w, x, Vector(3, 1.0), gw, gb);
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_EQ(gb[r], 1.0);
        for (std::size_t c = 0; c < 5; ++c) {
            EXPECT_EQ(gw(r, c), x[c]);
        }
    }
    auto loss = [&] {
        double s = 0.0;
        for (double y : affine(w, x, b)) {
            s += y;
        }
        return s;
    };
    for (std::size_t i = 0; i < w.size(); ++i) {
        EXPECT_LT(relative_error(central_difference(w.data(), i, loss), gw.data()[i]), 1e-6);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_LT(relative_error(central_difference(x, i, loss), gx[i]), 1e-6);
    }
}

TEST(AffineBackward, IndependentParameterGetsZeroGradient)
{
    // Loss only reads y[0]; row 1 of W must receive nothing.
    rng gen(5);
    Matrix w = random_matrix(gen, 2, 3);
    Vector x = random_vector(gen, 3);
    Matrix gw(2, 3);
    Vector gb(2, 0.0);
    (void)affine_backward(w, x, Vector{1.0, 0.0}, gw, gb);
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(gw(1, c), 0.0);
    }
    EXPECT_EQ(gb[1], 0.0);
}

TEST(Softmax, StableAndNormalized)
{
    Vector p = softmax(Vector{1000.0, 1000.0, -1000.0});
    EXPECT_NEAR(p[0], 0.5, 1e-15);
    EXPECT_EQ(p[2], 0.0);
    EXPECT_EQ(softmax(Vector{1e308, -1e308}), (Vector{1.0, 0.0}));
    Vector q = softmax(Vector{0.3, -1.2, 2.0, 0.0});
    double total = 0.0;
    for (double v : q) {
        total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-15);
    EXPECT_THROW(log_softmax(Vector{}), validation_error);
}

TEST(GradientTape, ForeignHandleIsUsageError)
{
    gradient_tape<int> a;
    gradient_tape<int> b;
    auto h = a.record(3);
    EXPECT_EQ(a.trace(h), 3);
    EXPECT_THROW((void)b.trace(h), usage_error);
    a.clear();
    EXPECT_THROW((void)a.trace(h), usage_error);
}

TEST(Numerics, FiniteOnFiniteInputs)
{
    rng gen(6);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix w = random_matrix(gen, 4, 6, 10.0);
        Vector x = random_vector(gen, 6, 10.0);
        EXPECT_TRUE(all_finite(affine(w, x, Vector(4, 0.0))));
        EXPECT_TRUE(all_finite(softmax(x)));
        EXPECT_TRUE(all_finite(matmul(w, random_matrix(gen, 6, 2)).data()));
    }
}
