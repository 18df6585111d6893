#pragma once

#include "adq/arch.hpp"
#include "adq/tensor.hpp"

#include <random>

namespace adq::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

inline LayerSpec spec(int id, LayerKind kind, int in = 0, int out = 0, int k = 0, int stride = 1, int pad = 0,
                      std::optional<int> skip = std::nullopt)
{
    return {id, kind, in, out, k, stride, pad, skip};
}

// Every layer kind, a strided 1x1 shortcut and a residual add, small enough
// for exhaustive finite differences.
inline NetworkArch tiny_residual_net()
{
    NetworkArch a;
    a.name = "tiny";
    a.input_shape = {2, 6, 6};
    a.num_classes = 3;
    using K = LayerKind;
    a.layers = {
        spec(0, K::conv2d, 2, 3, 3, 1, 1),
        spec(1, K::batchnorm, 3, 3),
        spec(2, K::relu),
        spec(3, K::conv2d, 3, 4, 1, 2, 0, 2),
        spec(4, K::batchnorm, 4, 4),
        spec(5, K::conv2d, 3, 4, 3, 2, 1, 2),
        spec(6, K::batchnorm, 4, 4),
        spec(7, K::residual_add, 0, 0, 0, 1, 0, 4),
        spec(8, K::relu),
        spec(9, K::maxpool, 0, 0, 2, 1),
        spec(10, K::avgpool, 0, 0, 2, 2),
        spec(11, K::flatten),
        spec(12, K::linear, 4, 3, 1),
    };
    return a;
}

} // namespace adq::testing
