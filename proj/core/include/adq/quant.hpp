#pragma once

#include "adq/tensor.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace adq {

/// Uniform affine k-bit quantizer over [x_min, x_max].
struct QuantParams {
    int bits = 16;
    double x_min = 0.0;
    double x_max = 1.0;

    /// Throws ConfigError unless 1 <= bits <= 16, both bounds finite and x_min <= x_max.
    void validate() const;
    bool degenerate() const noexcept { return x_max == x_min; }
    std::uint32_t max_level() const noexcept { return (std::uint32_t{1} << bits) - 1; }

    bool operator==(const QuantParams&) const = default;
};

/// Integer levels produced by quantize().
struct LevelTensor {
    Shape shape;
    std::vector<std::uint32_t> levels;
};

std::uint32_t quantize_value(double x, const QuantParams& qp);
double dequantize_value(std::uint32_t level, const QuantParams& qp);
double fake_quant_value(double x, const QuantParams& qp);

/// round((clamp(x) - x_min) * (2^k - 1) / (x_max - x_min)), rounding half away
/// from zero. A degenerate range yields all-zero levels.
LevelTensor quantize(const Tensor& x, const QuantParams& qp);

/// level * (x_max - x_min) / (2^k - 1) + x_min. Throws InputError on a level above 2^k - 1.
Tensor dequantize(const LevelTensor& levels, const QuantParams& qp);

/// dequantize(quantize(x)); a degenerate range returns x unchanged.
Tensor fake_quant(const Tensor& x, const QuantParams& qp);

/// Straight-through gradient: upstream where x lies in [x_min, x_max], zero elsewhere.
Tensor ste_grad(const Tensor& upstream, const Tensor& x, const QuantParams& qp);

/// Running estimate of an activation range.
class RangeTracker {
public:
    enum class Mode { minmax, ema };

    RangeTracker() = default;
    RangeTracker(Mode mode, double ema_decay);

    /// minmax: running min/max. ema: the first batch sets the bounds, later
    /// batches move them by bound = decay * bound + (1 - decay) * batch_bound.
    void observe(const Tensor& x);
    void observe(double batch_min, double batch_max);

    bool initialized() const noexcept { return initialized_; }
    double x_min() const noexcept { return min_; }
    double x_max() const noexcept { return max_; }
    Mode mode() const noexcept { return mode_; }
    double decay() const noexcept { return decay_; }

    /// Overwrite the bounds (checkpoint restore).
    void restore(double x_min, double x_max);

    QuantParams params(int bits) const { return {bits, min_, max_}; }

private:
    Mode mode_ = Mode::ema;
    double decay_ = 0.99;
    bool initialized_ = false;
    double min_ = 0.0;
    double max_ = 0.0;
};

/// Fake quantization applied on the forward pass at one activation site.
struct ActivationQuant {
    int bits = 16;
    RangeTracker range;
};

/// Where and how the forward pass fake-quantizes a network. Keys are layer
/// ids: weighted layers for weights, relu layers for their outputs and
/// residual-add layers for the incoming skip operand. Sites without an entry
/// run at full precision.
struct QuantPlan {
    std::map<int, int> weight_bits;
    std::map<int, ActivationQuant> activations;
    /// Trackers update only while training; evaluation uses the frozen ranges.
    bool update_ranges = true;

    /// Per-tensor min/max of the current weights, the range used for weight quantization.
    static QuantParams weight_params(const Tensor& w, int bits);
};

} // namespace adq
