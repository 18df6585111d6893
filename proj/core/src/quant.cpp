#include "adq/quant.hpp"

#include "adq/error.hpp"

#include <algorithm>
#include <cmath>

namespace adq {

void QuantParams::validate() const
{
    if (bits < 1 || bits > 16) throw ConfigError("quantization bits must be in [1, 16], got " + std::to_string(bits));
    if (!std::isfinite(x_min) || !std::isfinite(x_max)) throw ConfigError("quantization range must be finite");
    if (x_max < x_min) throw ConfigError("quantization range has x_max < x_min");
}

std::uint32_t quantize_value(double x, const QuantParams& qp)
{
    if (qp.degenerate()) return 0;
    const double c = std::clamp(x, qp.x_min, qp.x_max);
    // std::round breaks ties away from zero.
    const double level = std::round((c - qp.x_min) * static_cast<double>(qp.max_level()) / (qp.x_max - qp.x_min));
    return static_cast<std::uint32_t>(std::min(level, static_cast<double>(qp.max_level())));
}

double dequantize_value(std::uint32_t level, const QuantParams& qp)
{
    return static_cast<double>(level) * (qp.x_max - qp.x_min) / static_cast<double>(qp.max_level()) + qp.x_min;
}

double fake_quant_value(double x, const QuantParams& qp)
{
    if (qp.degenerate()) return x;
    return dequantize_value(quantize_value(x, qp), qp);
}

LevelTensor quantize(const Tensor& x, const QuantParams& qp)
{
    qp.validate();
    LevelTensor out{x.shape(), std::vector<std::uint32_t>(x.size())};
    for (std::size_t i = 0; i < x.size(); ++i) out.levels[i] = quantize_value(x[i], qp);
    return out;
}

Tensor dequantize(const LevelTensor& levels, const QuantParams& qp)
{
    qp.validate();
    std::vector<double> d(levels.levels.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (levels.levels[i] > qp.max_level())
            throw InputError("level " + std::to_string(levels.levels[i]) + " exceeds " +
                             std::to_string(qp.max_level()) + " for " + std::to_string(qp.bits) + "-bit params");
        d[i] = dequantize_value(levels.levels[i], qp);
    }
    return Tensor(levels.shape, std::move(d));
}

Tensor fake_quant(const Tensor& x, const QuantParams& qp)
{
    qp.validate();
    Tensor out = x;
    if (qp.degenerate()) return out;
    for (auto& v : out.values()) v = fake_quant_value(v, qp);
    return out;
}

Tensor ste_grad(const Tensor& upstream, const Tensor& x, const QuantParams& qp)
{
    if (upstream.shape() != x.shape()) throw InputError("ste_grad: shape mismatch");
    Tensor g = upstream;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] < qp.x_min || x[i] > qp.x_max) g[i] = 0.0;
    return g;
}

RangeTracker::RangeTracker(Mode mode, double ema_decay) : mode_(mode), decay_(ema_decay)
{
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in (0, 1)");
}

void RangeTracker::observe(const Tensor& x)
{
    if (x.empty()) return;
    const auto [lo, hi] = std::minmax_element(x.values().begin(), x.values().end());
    observe(*lo, *hi);
}

void RangeTracker::observe(double batch_min, double batch_max)
{
    if (!initialized_) {
        min_ = batch_min;
        max_ = batch_max;
        initialized_ = true;
        return;
    }
    if (mode_ == Mode::minmax) {
        min_ = std::min(min_, batch_min);
        max_ = std::max(max_, batch_max);
    } else {
        min_ = decay_ * min_ + (1.0 - decay_) * batch_min;
        max_ = decay_ * max_ + (1.0 - decay_) * batch_max;
    }
}

void RangeTracker::restore(double x_min, double x_max)
{
    min_ = x_min;
    max_ = x_max;
    initialized_ = true;
}

QuantParams QuantPlan::weight_params(const Tensor& w, int bits)
{
    const auto [lo, hi] = std::minmax_element(w.values().begin(), w.values().end());
    return {bits, *lo, *hi};
}

} // namespace adq
