#pragma once

#include "adq/arch.hpp"
#include "adq/quant.hpp"
#include "adq/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace adq {

/// A trainable tensor with its Adam moments.
struct Param {
    Tensor value;
    Tensor m;
    Tensor v;

    explicit operator bool() const noexcept { return !value.empty(); }
};

/// conv/linear: weight [O, I, p, p] / [O, I] and bias [O].
/// batchnorm: weight = gamma, bias = beta, plus running statistics.
struct LayerState {
    Param weight;
    Param bias;
    Tensor running_mean;
    Tensor running_var;
};

struct TrainState {
    std::vector<LayerState> layers;
    std::uint64_t rng_seed = 0;
    int epoch = 0;
    std::int64_t step = 0;
    /// Bumped whenever weights change; caches from older versions are stale.
    std::uint64_t version = 0;
};

/// He-normal weights, zero biases, identity batchnorm.
TrainState init_state(const NetworkArch& arch, std::uint64_t seed);

/// Throws ConfigError naming the first layer whose parameters disagree with the arch.
void check_state(const NetworkArch& arch, const TrainState& state);

/// Called with (relu layer id, relu output) once per ReLU per forward, before
/// any activation quantization.
using ActivationObserver = std::function<void(int, const Tensor&)>;

struct ForwardOptions {
    bool training = true;
    QuantPlan* quant = nullptr;
    std::vector<ActivationObserver> observers;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
};

struct LayerCache {
    Tensor input;
    Shape input_shape;
    Tensor weight_used;             // fake-quantized weights for conv/linear
    Tensor xhat;                    // batchnorm
    std::vector<double> inv_std;    // batchnorm
    std::vector<std::uint8_t> mask; // relu: pass-through mask; add: skip STE mask
    std::vector<std::size_t> argmax;
    bool batch_stats = false;
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    std::uint64_t state_version = 0;
    Shape input_shape;
    bool valid = false;
};

struct ForwardResult {
    Tensor logits;
    ForwardCache cache;
};

/// Batch is [B, C, H, W] matching arch.input_shape. Returns [B, num_classes] logits.
ForwardResult forward(const NetworkArch& arch, TrainState& state, const Tensor& batch, const ForwardOptions& options);

struct Gradients {
    std::vector<Tensor> weight; // empty tensor for layers without parameters
    std::vector<Tensor> bias;
    Tensor input;
};

/// Gradients of the loss with respect to every parameter (full-precision
/// shadow weights, via straight-through quantizers) and the input batch.
Gradients backward(const NetworkArch& arch, const TrainState& state, const ForwardCache& cache, const Tensor& loss_grad);

struct LossResult {
    double loss = 0.0;
    Tensor grad;
};

/// Mean softmax cross-entropy over the batch and its gradient wrt the logits.
LossResult softmax_xent(const Tensor& logits, std::span<const int> labels);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// One bias-corrected Adam update of every parameter.
void optimizer_step(TrainState& state, const Gradients& grads, const AdamConfig& config);

} // namespace adq
