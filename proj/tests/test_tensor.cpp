#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cpfc/tensor.hpp"
#include "cpfc/tensor_ops.hpp"

using namespace cpfc;

TEST_CASE("constant-input convolution matches hand count") {
    // 3x3 of ones, 2x2 all-ones kernel, stride 1, no padding -> 2x2 of 4s
    Tensor in = Tensor::full({1, 3, 3}, 1.0f);
    Tensor w = Tensor::full({1, 1, 2, 2}, 1.0f);
    Tensor out = conv2d(in, w, Tensor(), 1, 0);
    REQUIRE(out.shape() == std::vector<int>({1, 2, 2}));
    for (float v : out.data()) CHECK(v == doctest::Approx(4.0f));
}

TEST_CASE("relu clamps negatives") {
    Tensor in = Tensor::from({3}, {-1.0f, 0.0f, 2.0f});
    Tensor out = relu(in);
    CHECK(out.data()[0] == 0.0f);
    CHECK(out.data()[1] == 0.0f);
    CHECK(out.data()[2] == 2.0f);
}

TEST_CASE("batchnorm maps a zero-variance channel to beta") {
    Tensor in = Tensor::full({1, 2, 2}, 2.0f);
    Tensor gamma = Tensor::full({1}, 1.0f);
    Tensor beta = Tensor::zeros({1});
    Tensor out = batchnorm(in, gamma, beta, 1e-5f);
    for (float v : out.data()) CHECK(v == doctest::Approx(0.0f).epsilon(1e-6));
}

TEST_CASE("identity kernel with same padding reproduces the input") {
    Rng rng(3);
    Tensor in = Tensor::uniform({2, 5, 5}, -1.0f, 1.0f, rng);
    Tensor w = Tensor::zeros({2, 2, 3, 3});
    // single 1 at center, diagonal channel map
    w.data()[(0 * 2 + 0) * 9 + 4] = 1.0f;
    w.data()[(1 * 2 + 1) * 9 + 4] = 1.0f;
    Tensor out = conv2d(in, w, Tensor(), 1, 1);
    REQUIRE(out.shape() == in.shape());
    for (size_t i = 0; i < out.data().size(); ++i) CHECK(out.data()[i] == in.data()[i]);
}

TEST_CASE("softmax closed forms and direct-formula oracle") {
    SUBCASE("symmetry") {
        Tensor out = softmax(Tensor::from({2}, {0.0f, 0.0f}), 0);
        CHECK(out.data()[0] == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(out.data()[1] == doctest::Approx(0.5).epsilon(1e-6));
    }
    SUBCASE("ln 2 closed form") {
        Tensor out = softmax(Tensor::from({2}, {std::log(2.0f), 0.0f}), 0);
        CHECK(out.data()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
        CHECK(out.data()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    }
    SUBCASE("random 5-vector vs direct formula") {
        Rng rng(11);
        Tensor z = Tensor::uniform({5}, -2.0f, 2.0f, rng);
        Tensor out = softmax(z, 0);
        double denom = 0.0;
        for (float v : z.data()) denom += std::exp(static_cast<double>(v));
        for (int i = 0; i < 5; ++i)
            CHECK(out.data()[static_cast<size_t>(i)] ==
                  doctest::Approx(std::exp(static_cast<double>(z.data()[static_cast<size_t>(i)])) / denom)
                      .epsilon(1e-6));
    }
}

TEST_CASE("softmax sums to one along its axis for random tensors") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor t = Tensor::uniform({3, 4, 5}, -8.0f, 8.0f, rng);
        int axis = static_cast<int>(rng.uniform_index(3));
        Tensor out = softmax(t, axis);
        int axis_len = t.dim(axis);
        int inner = 1, outer = 1;
        for (int i = axis + 1; i < 3; ++i) inner *= t.dim(i);
        for (int i = 0; i < axis; ++i) outer *= t.dim(i);
        for (int o = 0; o < outer; ++o) {
            for (int in = 0; in < inner; ++in) {
                double s = 0.0;
                for (int k = 0; k < axis_len; ++k)
                    s += out.data()[static_cast<size_t>(o) * axis_len * inner +
                                    static_cast<size_t>(k) * inner + static_cast<size_t>(in)];
                CHECK(std::abs(s - 1.0) < 1e-6);
            }
        }
    }
}

TEST_CASE("backward of a linear form returns the weights") {
    Tensor w = Tensor::from({4}, {0.5f, -1.5f, 2.0f, 3.0f});
    Tensor x = Tensor::from({4}, {1.0f, 2.0f, 3.0f, 4.0f});
    x.set_requires_grad(true);
    ComputationRecord record;
    RecordScope scope(record);
    Tensor loss = sum(mul(w, x));
    record.backward(loss);
    for (int i = 0; i < 4; ++i)
        CHECK(x.grad()[static_cast<size_t>(i)] == w.data()[static_cast<size_t>(i)]);
}

TEST_CASE("backward of the L1 norm of a positive vector is all ones") {
    Tensor x = Tensor::from({3}, {0.5f, 1.0f, 2.5f});
    x.set_requires_grad(true);
    ComputationRecord record;
    RecordScope scope(record);
    Tensor loss = sum(x);  // equals the L1 norm for positive entries
    record.backward(loss);
    for (float g : x.grad()) CHECK(g == 1.0f);
}

TEST_CASE("backward requires a scalar loss") {
    Tensor x = Tensor::from({2}, {1.0f, 2.0f});
    x.set_requires_grad(true);
    ComputationRecord record;
    RecordScope scope(record);
    Tensor y = scale(x, 2.0f);
    CHECK_THROWS_AS(record.backward(y), std::invalid_argument);
}

TEST_CASE("replaying backward twice produces identical gradients") {
    Rng rng(17);
    Tensor x = Tensor::uniform({6}, -1.0f, 1.0f, rng);
    x.set_requires_grad(true);
    ComputationRecord record;
    RecordScope scope(record);
    Tensor loss = sum(mul(sigmoid(x), x));
    record.backward(loss);
    std::vector<float> first = x.grad();
    record.backward(loss);
    CHECK(x.grad() == first);
}

TEST_CASE("tensors not reachable from the loss keep zero gradient") {
    Tensor x = Tensor::from({2}, {1.0f, 2.0f});
    Tensor y = Tensor::from({2}, {3.0f, 4.0f});
    x.set_requires_grad(true);
    y.set_requires_grad(true);
    ComputationRecord record;
    RecordScope scope(record);
    Tensor unused = scale(y, 2.0f);  // recorded but never feeds the loss
    (void)unused;
    Tensor loss = sum(x);
    record.backward(loss);
    CHECK(x.grad()[0] == 1.0f);
    for (float g : y.grad()) CHECK(g == 0.0f);
}

TEST_CASE("grad_check on an exact quadratic") {
    Tensor x = Tensor::from({2}, {1.0f, 2.0f});
    auto builder = [](const Tensor& t) { return sum(mul(t, t)); };
    GradCheckResult r = grad_check(builder, x, 0.0009765625);
    CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("grad_check rejects eps outside its range") {
    Tensor x = Tensor::from({1}, {1.0f});
    auto builder = [](const Tensor& t) { return sum(t); };
    CHECK_THROWS_AS(grad_check(builder, x, 1e-7), std::invalid_argument);
    CHECK_THROWS_AS(grad_check(builder, x, 0.5), std::invalid_argument);
}

TEST_CASE("grad_check on a convolution + activation stack") {
    Rng rng(23);
    Tensor x = Tensor::uniform({2, 5, 5}, -1.0f, 1.0f, rng);
    Tensor w1 = Tensor::uniform({3, 2, 3, 3}, -0.5f, 0.5f, rng);
    Tensor b1 = Tensor::uniform({3}, -0.2f, 0.2f, rng);
    Tensor mixer = Tensor::uniform({3 * 5 * 5}, -1.0f, 1.0f, rng);
    auto builder = [&](const Tensor& t) {
        Tensor h = relu(conv2d(t, w1, b1, 1, 1));
        return sum(mul(flatten(h), mixer));
    };
    GradCheckResult r = grad_check(builder, x, 1e-2);
    CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("grad_check covers conv weights, batchnorm, pooling and linear") {
    Rng rng(29);
    Tensor x = Tensor::uniform({2, 6, 6}, -1.0f, 1.0f, rng);
    Tensor gamma = Tensor::uniform({2}, 0.5f, 1.5f, rng);
    Tensor beta = Tensor::uniform({2}, -0.3f, 0.3f, rng);
    Tensor lw = Tensor::uniform({3, 2 * 3 * 3}, -0.5f, 0.5f, rng);
    Tensor lb = Tensor::uniform({3}, -0.2f, 0.2f, rng);
    Tensor pick = Tensor::uniform({3}, -1.0f, 1.0f, rng);

    SUBCASE("through batchnorm input") {
        auto builder = [&](const Tensor& t) {
            Tensor h = maxpool2d(batchnorm(t, gamma, beta), 2, 2);
            return sum(mul(linear(flatten(h), lw, lb), pick));
        };
        GradCheckResult r = grad_check(builder, x, 1e-2);
        CHECK(r.max_rel_error < 1e-3);
    }
    SUBCASE("through batchnorm gamma") {
        auto builder = [&](const Tensor& g) {
            Tensor h = maxpool2d(batchnorm(x, g, beta), 2, 2);
            return sum(mul(linear(flatten(h), lw, lb), pick));
        };
        GradCheckResult r = grad_check(builder, gamma, 1e-2);
        CHECK(r.max_rel_error < 1e-3);
    }
    SUBCASE("through conv weight") {
        Tensor w = Tensor::uniform({2, 2, 3, 3}, -0.5f, 0.5f, rng);
        auto builder = [&](const Tensor& wt) {
            Tensor h = conv2d(x, wt, Tensor(), 1, 1);
            return mean(mul(h, h));
        };
        GradCheckResult r = grad_check(builder, w, 1e-2);
        CHECK(r.max_rel_error < 1e-3);
    }
}

TEST_CASE("grad_check on strided convolution") {
    Rng rng(31);
    Tensor x = Tensor::uniform({1, 7, 7}, -1.0f, 1.0f, rng);
    Tensor w = Tensor::uniform({2, 1, 3, 3}, -0.5f, 0.5f, rng);
    Tensor b = Tensor::uniform({2}, -0.1f, 0.1f, rng);
    auto builder = [&](const Tensor& t) {
        Tensor h = conv2d(t, w, b, 2, 1);
        return sum(mul(h, h));
    };
    GradCheckResult r = grad_check(builder, x, 1e-2);
    CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("reflect-padded convolution preserves a constant field") {
    Tensor field = Tensor::full({6, 6}, 0.7f);
    Tensor kernel = Tensor::full({3, 3}, 1.0f / 9.0f);
    Tensor out = conv2d_reflect(field, kernel);
    for (float v : out.data()) CHECK(v == doctest::Approx(0.7f).epsilon(1e-6));
}

TEST_CASE("grad_check through reflect-padded convolution") {
    Rng rng(37);
    Tensor field = Tensor::uniform({5, 5}, -1.0f, 1.0f, rng);
    Tensor kernel = Tensor::uniform({3, 3}, 0.0f, 0.3f, rng);
    Tensor mixer = Tensor::uniform({5 * 5}, -1.0f, 1.0f, rng);
    auto builder = [&](const Tensor& t) {
        return sum(mul(flatten(conv2d_reflect(t, kernel)), mixer));
    };
    GradCheckResult r = grad_check(builder, field, 1e-2);
    CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("conv2d reports the offending dimension") {
    Tensor in = Tensor::full({4, 3, 3}, 1.0f);
    Tensor w = Tensor::full({1, 3, 2, 2}, 1.0f);
    CHECK_THROWS_WITH_AS(conv2d(in, w, Tensor(), 1, 0, "conv2d (layer 3)"),
                         doctest::Contains("conv2d (layer 3)"), std::invalid_argument);
}

TEST_CASE("maxpool routes gradient to the first maximum on ties") {
    Tensor in = Tensor::full({1, 2, 2}, 1.0f);
    in.set_requires_grad(true);
    ComputationRecord record;
    RecordScope scope(record);
    Tensor loss = sum(maxpool2d(in, 2, 2));
    record.backward(loss);
    CHECK(in.grad()[0] == 1.0f);
    CHECK(in.grad()[1] == 0.0f);
    CHECK(in.grad()[2] == 0.0f);
    CHECK(in.grad()[3] == 0.0f);
}
