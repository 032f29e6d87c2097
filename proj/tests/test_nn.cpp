#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "compseg/model/networks.hpp"
#include "compseg/nn/adam.hpp"
#include "test_support.hpp"

using namespace compseg;
using compseg::testing::central_difference;
using compseg::testing::random_tensor;
using compseg::testing::relative_error;

namespace {

double weighted_sum(const Tensor& y, const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * w.data()[i];
    return s;
}

// Checks d(sum w * forward(x)) against finite differences for inputs and params.
template <typename Forward, typename Backward>
void check_layer(Tensor x, nn::ParamList params, Forward fwd, Backward bwd, std::mt19937_64& rng, double tol = 1e-6) {
    const Tensor y0 = fwd(x);
    const Tensor w = random_tensor(y0.n(), y0.c(), y0.h(), y0.w(), rng);
    nn::zero_grad(params);
    fwd(x);
    const Tensor dx = bwd(w);
    auto f = [&] { return weighted_sum(fwd(x), w); };
    for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 40))
        CHECK(relative_error(dx.data()[i], central_difference(x.data(), i, f)) < tol);
    for (auto* p : params)
        for (std::size_t i = 0; i < p->value.size(); i += std::max<std::size_t>(1, p->value.size() / 20))
            CHECK(relative_error(p->grad[i], central_difference(p->value, i, f)) < tol);
}

}  // namespace

TEST_CASE("Conv2d gradients: 3x3 stride 1, 3x3 stride 2, 1x1") {
    std::mt19937_64 rng(1);
    for (auto [k, s] : {std::pair{3, 1}, std::pair{3, 2}, std::pair{1, 1}}) {
        nn::Conv2d conv(3, 4, k, s, "c");
        conv.init(rng);
        for (auto& b : conv.parameters()[1]->value) b = 0.1;
        check_layer(random_tensor(2, 3, 7, 6, rng), conv.parameters(), [&](const Tensor& t) { return conv.forward(t); },
                    [&](const Tensor& g) { return conv.backward(g); }, rng);
    }
}

TEST_CASE("Conv2d output geometry and channel check") {
    nn::Conv2d s2(2, 3, 3, 2, "s2");
    CHECK(s2.output_size(16) == 8);
    CHECK(s2.output_size(7) == 4);
    Tensor x(1, 3, 4, 4);
    CHECK_THROWS_AS(s2.forward(x), std::invalid_argument);
}

TEST_CASE("pooling, upsampling and softmax gradients") {
    std::mt19937_64 rng(2);
    nn::MaxPool2 pool;
    check_layer(random_tensor(2, 2, 6, 6, rng), {}, [&](const Tensor& t) { return pool.forward(t); },
                [&](const Tensor& g) { return pool.backward(g); }, rng);
    nn::Upsample2 up;
    check_layer(random_tensor(1, 2, 3, 3, rng), {}, [&](const Tensor& t) { return up.forward(t, 6, 6); },
                [&](const Tensor& g) { return up.backward(g); }, rng);
    Tensor probs;
    check_layer(random_tensor(2, 4, 3, 3, rng, -3, 3), {},
                [&](const Tensor& t) { return probs = nn::softmax_channels(t); },
                [&](const Tensor& g) { return nn::softmax_channels_backward(probs, g); }, rng);
}

TEST_CASE("softmax rows sum to one and are stable for large logits") {
    Tensor t(1, 3, 1, 2);
    t.at(0, 0, 0, 0) = 1000;
    t.at(0, 1, 0, 0) = 999;
    t.at(0, 2, 0, 1) = -1000;
    const Tensor p = nn::softmax_channels(t);
    for (int x = 0; x < 2; ++x) CHECK(p.at(0, 0, 0, x) + p.at(0, 1, 0, x) + p.at(0, 2, 0, x) == doctest::Approx(1.0));
    CHECK(p.at(0, 0, 0, 0) > p.at(0, 1, 0, 0));
}

TEST_CASE("global average pool, linear and sigmoid gradients") {
    std::mt19937_64 rng(3);
    nn::Linear fc(5, 3, "fc");
    fc.init(rng);
    Tensor y;
    check_layer(random_tensor(3, 5, 4, 4, rng), fc.parameters(),
                [&](const Tensor& t) { return y = nn::sigmoid(fc.forward(nn::global_avg_pool(t))); },
                [&](const Tensor& g) { return nn::global_avg_pool_backward(fc.backward(nn::sigmoid_backward(y, g)), 4, 4); },
                rng);
}

TEST_CASE("feature extractor, task head and weak classifier gradients") {
    std::mt19937_64 rng(4);
    const auto cfg = model::ModelConfig::gradient_check();
    model::FeatureExtractor fx(cfg);
    fx.init(rng);
    check_layer(random_tensor(2, 4, 16, 16, rng), fx.parameters(), [&](const Tensor& t) { return fx.forward(t); },
                [&](const Tensor& g) { return fx.backward(g); }, rng, 1e-5);
    model::TaskHead head(cfg);
    head.init(rng);
    check_layer(random_tensor(2, cfg.num_kernels, 8, 8, rng, 0, 1), head.parameters(),
                [&](const Tensor& t) { return head.forward(t); }, [&](const Tensor& g) { return head.backward(g); }, rng,
                1e-5);
    model::WeakClassifier weak(cfg);
    weak.init(rng);
    check_layer(random_tensor(2, cfg.num_classes, 16, 16, rng, 0, 1), weak.parameters(),
                [&](const Tensor& t) { return weak.forward(t); }, [&](const Tensor& g) { return weak.backward(g); }, rng,
                1e-5);
}

TEST_CASE("feature extractor with three levels keeps the input resolution") {
    auto cfg = model::ModelConfig::desk(32);
    model::FeatureExtractor fx(cfg);
    std::mt19937_64 rng(5);
    fx.init(rng);
    const Tensor y = fx.forward(random_tensor(2, 4, 32, 32, rng));
    CHECK(y.n() == 2);
    CHECK(y.c() == cfg.feature_dim);
    CHECK(y.h() == 32);
    CHECK(y.w() == 32);
    CHECK_THROWS_AS(fx.forward(Tensor(1, 3, 32, 32)), std::invalid_argument);
    CHECK_THROWS_AS(fx.forward(Tensor(1, 4, 16, 16)), std::invalid_argument);
}

TEST_CASE("Adam minimizes a quadratic") {
    nn::Param p("x", 3);
    p.value = {5.0, -3.0, 1.0};
    nn::Adam adam({&p}, {.learning_rate = 0.1});
    for (int i = 0; i < 500; ++i) {
        adam.zero_grad();
        for (std::size_t k = 0; k < 3; ++k) p.grad[k] = 2.0 * (p.value[k] - static_cast<double>(k));
        adam.step();
    }
    for (std::size_t k = 0; k < 3; ++k) CHECK(p.value[k] == doctest::Approx(static_cast<double>(k)).epsilon(1e-3));
    CHECK(adam.steps() == 500);
    CHECK_THROWS_AS(nn::Adam({&p}, {.learning_rate = 0.0}), std::invalid_argument);
}
