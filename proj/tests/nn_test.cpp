#include "evoia/nn.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "evoia/rng.hpp"
#include "test_util.hpp"

using evoia::Matrix;

namespace {

TEST(DenseForward, Examples) {
    // identity weights, zero bias
    Matrix input = Matrix::from_rows({{1.0, 2.0}, {3.0, -4.0}});
    Matrix eye = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    Matrix zero_bias(1, 2);
    EXPECT_EQ(evoia::dense_forward(input, eye, zero_bias).data, input.data);

    // hand arithmetic: [1 2] * [[1],[1]] + 0.5
    Matrix x = Matrix::from_rows({{1.0, 2.0}});
    Matrix w = Matrix::from_rows({{1.0}, {1.0}});
    Matrix b = Matrix::from_rows({{0.5}});
    EXPECT_DOUBLE_EQ(evoia::dense_forward(x, w, b).at(0, 0), 3.5);

    // zero input: bias repeated per row
    Matrix zeros(3, 2);
    Matrix bias = Matrix::from_rows({{0.25, -1.0}});
    Matrix out = evoia::dense_forward(zeros, eye, bias);
    for (int i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(out.at(i, 0), 0.25);
        EXPECT_DOUBLE_EQ(out.at(i, 1), -1.0);
    }

    Matrix w3 = Matrix::from_rows({{1.0}, {1.0}, {1.0}});  // 3 rows vs 2 input cols
    EXPECT_THROW(evoia::dense_forward(x, w3, Matrix(1, 1)), std::invalid_argument);
    EXPECT_THROW(evoia::dense_forward(x, w, zero_bias), std::invalid_argument);  // bias width
}

TEST(DenseBackward, TrivialCases) {
    Matrix input = Matrix::from_rows({{1.0, 2.0, 3.0}});
    Matrix w = Matrix::from_rows({{1.0, 2.0}, {0.0, 1.0}, {1.0, 1.0}});
    Matrix upstream(1, 2);  // all zero
    auto g = evoia::dense_backward(upstream, input, w);
    for (double v : g.input.data) EXPECT_EQ(v, 0.0);
    for (double v : g.weights.data) EXPECT_EQ(v, 0.0);
    for (double v : g.bias.data) EXPECT_EQ(v, 0.0);

    // 1x1 scalar chain rule: grad_w = g*x, grad_in = g*w
    Matrix x1 = Matrix::from_rows({{3.0}});
    Matrix w1 = Matrix::from_rows({{-2.0}});
    Matrix up = Matrix::from_rows({{0.7}});
    auto g1 = evoia::dense_backward(up, x1, w1);
    EXPECT_DOUBLE_EQ(g1.weights.at(0, 0), 0.7 * 3.0);
    EXPECT_DOUBLE_EQ(g1.input.at(0, 0), 0.7 * -2.0);
    EXPECT_DOUBLE_EQ(g1.bias.at(0, 0), 0.7);
}

TEST(DenseBackward, FiniteDifferenceOracle) {
    evoia::Rng rng(5, 0);
    Matrix input(2, 3), w(3, 4), b(1, 4), upstream(2, 4);
    for (double& v : input.data) v = rng.normal();
    for (double& v : w.data) v = rng.normal();
    for (double& v : b.data) v = rng.normal();
    for (double& v : upstream.data) v = rng.normal();

    // scalar objective: sum(upstream .* (input*w + b))
    auto objective = [&](const Matrix& xi, const Matrix& wi, const Matrix& bi) {
        const Matrix out = evoia::dense_forward(xi, wi, bi);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += upstream.data[i] * out.data[i];
        return acc;
    };
    const auto grads = evoia::dense_backward(upstream, input, w);
    const double h = 1e-5;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double fd = test_util::central_difference(
            [&](double v) {
                Matrix wc = w;
                wc.data[i] = v;
                return objective(input, wc, b);
            },
            w.data[i], h);
        EXPECT_TRUE(test_util::close_rel(grads.weights.data[i], fd, 1e-6, 1e-8));
    }
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double fd = test_util::central_difference(
            [&](double v) {
                Matrix xc = input;
                xc.data[i] = v;
                return objective(xc, w, b);
            },
            input.data[i], h);
        EXPECT_TRUE(test_util::close_rel(grads.input.data[i], fd, 1e-6, 1e-8));
    }
}

TEST(Activations, Examples) {
    EXPECT_NEAR(evoia::softplus(0.0), std::log(2.0), 1e-15);
    EXPECT_NEAR(evoia::softplus(50.0), 50.0, 1e-12);
    EXPECT_NEAR(evoia::softplus(-50.0), std::exp(-50.0), 1e-30);
    EXPECT_EQ(evoia::relu(-3.0), 0.0);
    EXPECT_EQ(evoia::relu_grad(-3.0), 0.0);
    EXPECT_EQ(evoia::relu(2.5), 2.5);
    EXPECT_EQ(evoia::relu_grad(2.5), 1.0);
    // softplus_grad is the logistic sigmoid
    EXPECT_NEAR(evoia::softplus_grad(0.0), 0.5, 1e-15);
    const double fd = test_util::central_difference([](double x) { return evoia::softplus(x); },
                                                    1.3, 1e-6);
    EXPECT_NEAR(evoia::softplus_grad(1.3), fd, 1e-8);
}

TEST(Softmax, Examples) {
    const auto uniform = evoia::softmax({2.0, 2.0, 2.0});
    for (double v : uniform) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);

    const auto two_thirds = evoia::softmax({std::log(2.0), 0.0});
    EXPECT_NEAR(two_thirds[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(two_thirds[1], 1.0 / 3.0, 1e-15);

    const auto extreme = evoia::softmax({1000.0, 0.0});
    EXPECT_NEAR(extreme[0], 1.0, 1e-15);
    EXPECT_NEAR(extreme[1], 0.0, 1e-15);
}

TEST(Softmax, SumAndShiftInvariance) {
    evoia::Rng rng(7, 0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> scores(1 + trial % 7);
        for (double& s : scores) s = rng.uniform(-5.0, 5.0);
        const auto base = evoia::softmax(scores);
        double total = 0.0;
        for (double v : base) total += v;
        EXPECT_NEAR(total, 1.0, 1e-12);

        const double c = rng.uniform(-100.0, 100.0);
        std::vector<double> shifted = scores;
        for (double& s : shifted) s += c;
        const auto moved = evoia::softmax(shifted);
        for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(moved[i], base[i], 1e-12);
    }
}

TEST(SoftmaxBackward, MatchesFiniteDifferences) {
    evoia::Rng rng(9, 0);
    std::vector<double> z = {0.3, -1.2, 0.8, 2.0};
    std::vector<double> dy(z.size());
    for (double& v : dy) v = rng.normal();
    const auto y = evoia::softmax(z);
    const auto dz = evoia::softmax_backward(y, dy);
    for (std::size_t k = 0; k < z.size(); ++k) {
        const double fd = test_util::central_difference(
            [&](double v) {
                std::vector<double> zc = z;
                zc[k] = v;
                const auto yc = evoia::softmax(zc);
                double acc = 0.0;
                for (std::size_t i = 0; i < yc.size(); ++i) acc += dy[i] * yc[i];
                return acc;
            },
            z[k], 1e-6);
        EXPECT_NEAR(dz[k], fd, 1e-8);
    }
}

TEST(Adam, FirstStepExamples) {
    evoia::ParamStore store;
    store.add("theta", Matrix(1, 1));
    store.grad("theta").at(0, 0) = 2.0;
    evoia::AdamState adam(store, 0.001, 0.0);
    adam.step(store);
    EXPECT_NEAR(store.param("theta").at(0, 0), -0.001, 1e-8);
}

TEST(Adam, ZeroGradientKeepsParams) {
    evoia::ParamStore store;
    Matrix init = Matrix::from_rows({{1.0, -2.0}});
    store.add("theta", init);
    evoia::AdamState adam(store, 0.01, 0.0);
    for (int i = 0; i < 5; ++i) adam.step(store);
    EXPECT_EQ(store.param("theta").data, init.data);
}

TEST(Adam, DecoupledDecayOnly) {
    evoia::ParamStore store;
    store.add("theta", Matrix::from_rows({{1.0}}));
    evoia::AdamState adam(store, 0.01, 0.1);
    adam.step(store);  // gradient zero: only the decay moves theta
    EXPECT_NEAR(store.param("theta").at(0, 0), 0.999, 1e-15);
}

TEST(Adam, RejectsNonFiniteGradients) {
    evoia::ParamStore store;
    store.add("theta", Matrix(1, 1));
    store.grad("theta").at(0, 0) = std::nan("");
    evoia::AdamState adam(store, 0.001, 0.0);
    EXPECT_THROW(adam.step(store), std::runtime_error);
}

TEST(ParamStore, NamesAndErrors) {
    evoia::ParamStore store;
    store.add("a", Matrix(2, 3));
    store.add("b", Matrix(1, 4));
    EXPECT_THROW(store.add("a", Matrix(1, 1)), std::invalid_argument);
    EXPECT_THROW(store.param("missing"), std::out_of_range);
    EXPECT_EQ(store.names(), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(store.total_params(), 10u);

    store.grad("a").fill(3.0);
    store.scale_grads(0.5);
    EXPECT_EQ(store.grad("a").at(0, 0), 1.5);
    store.zero_grads();
    EXPECT_EQ(store.grad("a").at(0, 0), 0.0);
}

TEST(Rng, DeterministicAndStreamIndependent) {
    evoia::Rng a(42, 0), b(42, 0);
    for (int i = 0; i < 16; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());

    // distinct streams diverge in the first draws
    evoia::Rng s0(42, 0), s1(42, 1), s2(42, 2);
    int diffs = 0;
    for (int i = 0; i < 4; ++i) {
        const auto v0 = s0.next_u64(), v1 = s1.next_u64(), v2 = s2.next_u64();
        if (v0 != v1 && v1 != v2 && v0 != v2) ++diffs;
    }
    EXPECT_EQ(diffs, 4);
}

TEST(Rng, RangesAndShuffle) {
    evoia::Rng rng(1, 0);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        const int k = rng.uniform_int(3, 7);
        EXPECT_GE(k, 3);
        EXPECT_LE(k, 7);
    }
    std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7};
    evoia::Rng r1(9, 4), r2(9, 4);
    auto v1 = v, v2 = v;
    r1.shuffle(v1);
    r2.shuffle(v2);
    EXPECT_EQ(v1, v2);
    std::sort(v1.begin(), v1.end());
    EXPECT_EQ(v1, v);
}

TEST(HeInit, ScaleRoughlyCorrect) {
    evoia::Rng rng(3, 0);
    const Matrix m = evoia::he_init(400, 50, rng);
    double sq = 0.0;
    for (double v : m.data) sq += v * v;
    const double emp_var = sq / static_cast<double>(m.size());
    EXPECT_NEAR(emp_var, 2.0 / 400.0, 0.2 * 2.0 / 400.0);
}

}  // namespace
