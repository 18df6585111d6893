#include "adq/error.hpp"
#include "adq/network.hpp"
#include "doctest.h"
#include "support.hpp"

#include <cmath>

using namespace adq;
using adq::testing::random_tensor;
using adq::testing::spec;

namespace {

// Direct seven-loop convolution with zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad)
{
    const auto B = x.dim(0), C = x.dim(1);
    const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    const auto O = w.dim(0);
    const int K = static_cast<int>(w.dim(2));
    const int OH = (H + 2 * pad - K) / stride + 1, OW = (W + 2 * pad - K) / stride + 1;
    Tensor y({B, O, static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)});
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (int i = 0; i < OH; ++i)
                for (int j = 0; j < OW; ++j) {
                    double s = b[o];
                    for (std::size_t c = 0; c < C; ++c)
                        for (int u = 0; u < K; ++u)
                            for (int v = 0; v < K; ++v) {
                                const int hi = i * stride + u - pad, wi = j * stride + v - pad;
                                if (hi < 0 || hi >= H || wi < 0 || wi >= W) continue;
                                s += w.at(o, c, static_cast<std::size_t>(u), static_cast<std::size_t>(v)) *
                                     x.at(n, c, static_cast<std::size_t>(hi), static_cast<std::size_t>(wi));
                            }
                    y.at(n, o, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = s;
                }
    return y;
}

NetworkArch single_conv(int C, int O, int HW, int k, int stride, int pad)
{
    NetworkArch a;
    a.input_shape = {C, HW, HW};
    const int side = (HW + 2 * pad - k) / stride + 1;
    a.num_classes = O * side * side;
    a.layers = {spec(0, LayerKind::conv2d, C, O, k, stride, pad), spec(1, LayerKind::flatten)};
    return a;
}

double dot(const Tensor& a, const Tensor& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

bool grad_close(double analytic, double numeric)
{
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / scale < 1e-4;
}

} // namespace

TEST_CASE("conv forward matches the direct loop oracle")
{
    struct Case { int C, O, HW, k, s, p; };
    for (const auto& c : {Case{1, 1, 5, 3, 1, 1}, Case{2, 3, 7, 3, 2, 1}, Case{3, 2, 6, 1, 2, 0}, Case{2, 2, 5, 5, 1, 2},
                          Case{1, 4, 8, 3, 3, 0}}) {
        auto arch = single_conv(c.C, c.O, c.HW, c.k, c.s, c.p);
        auto st = init_state(arch, 7);
        st.layers[0].bias.value = random_tensor({static_cast<std::size_t>(c.O)}, 3);
        const auto x = random_tensor({2, static_cast<std::size_t>(c.C), static_cast<std::size_t>(c.HW),
                                      static_cast<std::size_t>(c.HW)}, 11);
        const auto got = forward(arch, st, x, {}).logits;
        const auto want = naive_conv(x, st.layers[0].weight.value, st.layers[0].bias.value, c.s, c.p);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-10);
    }
}

TEST_CASE("backward matches central finite differences for every layer kind")
{
    const auto arch = adq::testing::tiny_residual_net();
    auto st = init_state(arch, 5);
    // Non-trivial batchnorm affine parameters and biases.
    for (std::size_t id : {1u, 4u, 6u}) {
        st.layers[id].weight.value = random_tensor(st.layers[id].weight.value.shape(), 100 + id, 0.5, 1.5);
        st.layers[id].bias.value = random_tensor(st.layers[id].bias.value.shape(), 200 + id);
    }
    for (std::size_t id : {0u, 3u, 5u, 12u}) st.layers[id].bias.value = random_tensor(st.layers[id].bias.value.shape(), 300 + id);

    const auto x = random_tensor({3, 2, 6, 6}, 21);
    const auto probe = random_tensor({3, 3}, 22);
    auto loss = [&](TrainState& s, const Tensor& in) { return dot(forward(arch, s, in, {}).logits, probe); };

    auto fr = forward(arch, st, x, {});
    const auto g = backward(arch, st, fr.cache, probe);
    const double h = 1e-5;

    auto check_param = [&](Tensor& value, const Tensor& grad, const char* what, std::size_t id) {
        REQUIRE(grad.shape() == value.shape());
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double keep = value[i];
            value[i] = keep + h;
            const double up = loss(st, x);
            value[i] = keep - h;
            const double down = loss(st, x);
            value[i] = keep;
            const double numeric = (up - down) / (2 * h);
            INFO(what << " of layer " << id << " index " << i);
            CHECK(grad_close(grad[i], numeric));
        }
    };
    for (const auto& l : arch.layers) {
        const auto id = static_cast<std::size_t>(l.id);
        if (!st.layers[id].weight) continue;
        check_param(st.layers[id].weight.value, g.weight[id], "weight", id);
        check_param(st.layers[id].bias.value, g.bias[id], "bias", id);
    }
    Tensor xi = x;
    REQUIRE(g.input.shape() == x.shape());
    for (std::size_t i = 0; i < xi.size(); ++i) {
        const double keep = xi[i];
        xi[i] = keep + h;
        const double up = loss(st, xi);
        xi[i] = keep - h;
        const double down = loss(st, xi);
        xi[i] = keep;
        INFO("input index " << i);
        CHECK(grad_close(g.input[i], (up - down) / (2 * h)));
    }
}

TEST_CASE("softmax cross-entropy matches the direct formula")
{
    const Tensor logits({2, 3}, std::vector<double>{1.0, 2.0, 0.5, -1.0, 0.0, 3.0});
    const std::vector<int> labels{1, 2};
    const auto r = softmax_xent(logits, labels);
    double want = 0.0;
    for (int n = 0; n < 2; ++n) {
        double z = 0.0;
        for (int k = 0; k < 3; ++k) z += std::exp(logits[static_cast<std::size_t>(n * 3 + k)]);
        want += -std::log(std::exp(logits[static_cast<std::size_t>(n * 3 + labels[static_cast<std::size_t>(n)])]) / z);
        for (int k = 0; k < 3; ++k) {
            const double p = std::exp(logits[static_cast<std::size_t>(n * 3 + k)]) / z;
            const double onehot = k == labels[static_cast<std::size_t>(n)] ? 1.0 : 0.0;
            CHECK(r.grad[static_cast<std::size_t>(n * 3 + k)] == doctest::Approx((p - onehot) / 2).epsilon(1e-12));
        }
    }
    CHECK(r.loss == doctest::Approx(want / 2).epsilon(1e-12));
    const std::vector<int> bad{0, 3};
    CHECK_THROWS_AS(softmax_xent(logits, bad), InputError);
}

TEST_CASE("Adam step matches a scalar reference")
{
    NetworkArch a;
    a.input_shape = {1, 1, 1};
    a.num_classes = 1;
    a.layers = {spec(0, LayerKind::flatten), spec(1, LayerKind::linear, 1, 1, 1)};
    auto st = init_state(a, 1);
    double w = st.layers[1].weight.value[0], m = 0, v = 0;
    const AdamConfig cfg;
    const double grads[] = {0.3, -1.2, 0.05, 2.0};
    for (int t = 1; t <= 4; ++t) {
        const double gr = grads[t - 1];
        Gradients g;
        g.weight = {Tensor(), Tensor({1, 1}, gr)};
        g.bias = {Tensor(), Tensor({1}, 0.0)};
        optimizer_step(st, g, cfg);
        m = 0.9 * m + 0.1 * gr;
        v = 0.999 * v + 0.001 * gr * gr;
        const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
        w -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
        CHECK(st.layers[1].weight.value[0] == doctest::Approx(w).epsilon(1e-14));
    }
    CHECK(st.step == 4);
}

TEST_CASE("stale caches and mismatched inputs are rejected")
{
    const auto arch = adq::testing::tiny_residual_net();
    auto st = init_state(arch, 5);
    const auto x = random_tensor({1, 2, 6, 6}, 1);
    auto fr = forward(arch, st, x, {});
    auto g = backward(arch, st, fr.cache, Tensor({1, 3}, 1.0));
    optimizer_step(st, g, {});
    CHECK_THROWS_AS(backward(arch, st, fr.cache, Tensor({1, 3}, 1.0)), UsageError);
    CHECK_THROWS_AS(forward(arch, st, random_tensor({1, 3, 6, 6}, 2), {}), ConfigError);
    auto wrong = st;
    wrong.layers[5].weight.value = Tensor({4, 3, 1, 1});
    CHECK_THROWS_WITH_AS(forward(arch, wrong, x, {}), doctest::Contains("layer 5"), ConfigError);
}

TEST_CASE("batchnorm uses batch statistics in training and running statistics in eval")
{
    NetworkArch a;
    a.input_shape = {1, 1, 4};
    a.num_classes = 4;
    a.layers = {spec(0, LayerKind::batchnorm, 1, 1), spec(1, LayerKind::flatten)};
    auto st = init_state(a, 0);
    const Tensor x({2, 1, 1, 4}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
    ForwardOptions train;
    const auto y = forward(a, st, x, train).logits;
    double mean = 0.0;
    for (double v : y.values()) mean += v;
    CHECK(std::abs(mean) < 1e-12);
    // mean 4.5, biased variance 5.25, unbiased 6.0
    CHECK(st.layers[0].running_mean[0] == doctest::Approx(0.45));
    CHECK(st.layers[0].running_var[0] == doctest::Approx(0.9 + 0.6));
    ForwardOptions eval;
    eval.training = false;
    const auto ye = forward(a, st, x, eval).logits;
    CHECK(ye[0] == doctest::Approx((1 - 0.45) / std::sqrt(1.5 + 1e-5)));
}

TEST_CASE("observers see the ReLU output before activation quantization")
{
    const auto arch = adq::testing::tiny_residual_net();
    auto st = init_state(arch, 9);
    QuantPlan plan;
    plan.activations[2] = ActivationQuant{1, RangeTracker(RangeTracker::Mode::ema, 0.99)};
    std::vector<Tensor> seen;
    ForwardOptions opt;
    opt.quant = &plan;
    opt.observers.push_back([&](int id, const Tensor& t) {
        if (id == 2) seen.push_back(t);
    });
    const auto x = random_tensor({2, 2, 6, 6}, 4);
    forward(arch, st, x, opt);
    REQUIRE(seen.size() == 1);
    std::size_t distinct_positive = 0;
    double first = -1;
    for (double v : seen[0].values()) {
        CHECK(v >= 0.0);
        if (v > 0 && v != first) {
            first = v;
            ++distinct_positive;
        }
    }
    CHECK(distinct_positive > 2); // a 1-bit quantized map would hold at most one positive value
}
