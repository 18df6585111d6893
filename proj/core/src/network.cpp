#include "adq/network.hpp"

#include "adq/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace adq {

namespace {

std::string where(const LayerSpec& l)
{
    return "layer " + std::to_string(l.id) + " (" + std::string(to_string(l.kind)) + ")";
}

Param make_param(Shape shape)
{
    Param p;
    p.value = Tensor(shape);
    p.m = Tensor(shape);
    p.v = Tensor(std::move(shape));
    return p;
}

// Element count per channel and channel count for [B, C, ...] tensors.
std::pair<std::size_t, std::size_t> channel_layout(const Tensor& x)
{
    const std::size_t c = x.dim(1);
    const std::size_t inner = x.size() / (x.dim(0) * c);
    return {c, inner};
}

void apply_activation_quant(Tensor& x, ActivationQuant& aq, bool update, std::vector<std::uint8_t>& mask)
{
    if (update || !aq.range.initialized()) aq.range.observe(x);
    const QuantParams qp = aq.range.params(aq.bits);
    mask.assign(x.size(), 1);
    if (qp.degenerate()) return;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < qp.x_min || x[i] > qp.x_max) mask[i] = 0;
        x[i] = fake_quant_value(x[i], qp);
    }
}

// ---- conv -------------------------------------------------------------------

Tensor conv_forward(const Tensor& x, const Tensor& w, const Tensor& b, const LayerSpec& l)
{
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = w.dim(0), K = w.dim(2);
    const auto s = static_cast<std::size_t>(l.stride);
    const auto p = static_cast<std::ptrdiff_t>(l.padding);
    const std::size_t OH = (H + 2 * static_cast<std::size_t>(p) - K) / s + 1;
    const std::size_t OW = (W + 2 * static_cast<std::size_t>(p) - K) / s + 1;
    Tensor y({B, O, OH, OW});
    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
            double* out = &y.at(n, o, 0, 0);
            std::fill(out, out + OH * OW, b[o]);
            for (std::size_t c = 0; c < C; ++c) {
                const double* in = &x.at(n, c, 0, 0);
                for (std::size_t kh = 0; kh < K; ++kh) {
                    for (std::size_t kw = 0; kw < K; ++kw) {
                        const double wv = w.at(o, c, kh, kw);
                        for (std::size_t oh = 0; oh < OH; ++oh) {
                            const auto ih = static_cast<std::ptrdiff_t>(oh * s + kh) - p;
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                            const double* row = in + static_cast<std::size_t>(ih) * W;
                            double* orow = out + oh * OW;
                            for (std::size_t ow = 0; ow < OW; ++ow) {
                                const auto iw = static_cast<std::ptrdiff_t>(ow * s + kw) - p;
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                                orow[ow] += wv * row[iw];
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

void conv_backward(const Tensor& x, const Tensor& w, const Tensor& gy, const LayerSpec& l, Tensor& gx, Tensor& gw,
                   Tensor& gb)
{
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = w.dim(0), K = w.dim(2);
    const std::size_t OH = gy.dim(2), OW = gy.dim(3);
    const auto s = static_cast<std::size_t>(l.stride);
    const auto p = static_cast<std::ptrdiff_t>(l.padding);
    gx = Tensor(x.shape());
    gw = Tensor(w.shape());
    gb = Tensor({O});
    for (std::size_t n = 0; n < B; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
            const double* g = &gy.at(n, o, 0, 0);
            double bsum = 0.0;
            for (std::size_t i = 0; i < OH * OW; ++i) bsum += g[i];
            gb[o] += bsum;
            for (std::size_t c = 0; c < C; ++c) {
                const double* in = &x.at(n, c, 0, 0);
                double* gin = &gx.at(n, c, 0, 0);
                for (std::size_t kh = 0; kh < K; ++kh) {
                    for (std::size_t kw = 0; kw < K; ++kw) {
                        const double wv = w.at(o, c, kh, kw);
                        double acc = 0.0;
                        for (std::size_t oh = 0; oh < OH; ++oh) {
                            const auto ih = static_cast<std::ptrdiff_t>(oh * s + kh) - p;
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                            const std::size_t roff = static_cast<std::size_t>(ih) * W;
                            const double* grow = g + oh * OW;
                            for (std::size_t ow = 0; ow < OW; ++ow) {
                                const auto iw = static_cast<std::ptrdiff_t>(ow * s + kw) - p;
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                                acc += grow[ow] * in[roff + static_cast<std::size_t>(iw)];
                                gin[roff + static_cast<std::size_t>(iw)] += grow[ow] * wv;
                            }
                        }
                        gw.at(o, c, kh, kw) += acc;
                    }
                }
            }
        }
    }
}

// ---- linear -----------------------------------------------------------------

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b)
{
    const std::size_t B = x.dim(0), F = x.dim(1), O = w.dim(0);
    Tensor y({B, O});
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < O; ++o) {
            double acc = b[o];
            for (std::size_t f = 0; f < F; ++f) acc += w[o * F + f] * x[n * F + f];
            y[n * O + o] = acc;
        }
    return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor& gx, Tensor& gw, Tensor& gb)
{
    const std::size_t B = x.dim(0), F = x.dim(1), O = w.dim(0);
    gx = Tensor(x.shape());
    gw = Tensor(w.shape());
    gb = Tensor({O});
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < O; ++o) {
            const double g = gy[n * O + o];
            gb[o] += g;
            for (std::size_t f = 0; f < F; ++f) {
                gw[o * F + f] += g * x[n * F + f];
                gx[n * F + f] += g * w[o * F + f];
            }
        }
}

// ---- pooling ----------------------------------------------------------------

Tensor pool_forward(const Tensor& x, const LayerSpec& l, std::vector<std::size_t>* argmax)
{
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto K = static_cast<std::size_t>(l.kernel);
    const auto S = static_cast<std::size_t>(l.stride > 0 ? l.stride : l.kernel);
    const std::size_t OH = (H - K) / S + 1, OW = (W - K) / S + 1;
    Tensor y({B, C, OH, OW});
    if (argmax) argmax->assign(y.size(), 0);
    std::size_t idx = 0;
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow, ++idx) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_at = 0;
                    double sum = 0.0;
                    for (std::size_t kh = 0; kh < K; ++kh)
                        for (std::size_t kw = 0; kw < K; ++kw) {
                            const std::size_t at = ((n * C + c) * H + oh * S + kh) * W + ow * S + kw;
                            sum += x[at];
                            if (x[at] > best) {
                                best = x[at];
                                best_at = at;
                            }
                        }
                    if (argmax) {
                        y[idx] = best;
                        (*argmax)[idx] = best_at;
                    } else {
                        y[idx] = sum / static_cast<double>(K * K);
                    }
                }
    return y;
}

Tensor avgpool_backward(const Shape& in_shape, const Tensor& gy, const LayerSpec& l)
{
    Tensor gx(in_shape);
    const std::size_t B = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
    const auto K = static_cast<std::size_t>(l.kernel);
    const auto S = static_cast<std::size_t>(l.stride > 0 ? l.stride : l.kernel);
    const std::size_t OH = gy.dim(2), OW = gy.dim(3);
    const double scale = 1.0 / static_cast<double>(K * K);
    std::size_t idx = 0;
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oh = 0; oh < OH; ++oh)
                for (std::size_t ow = 0; ow < OW; ++ow, ++idx)
                    for (std::size_t kh = 0; kh < K; ++kh)
                        for (std::size_t kw = 0; kw < K; ++kw)
                            gx[((n * C + c) * H + oh * S + kh) * W + ow * S + kw] += gy[idx] * scale;
    return gx;
}

// ---- batchnorm --------------------------------------------------------------

Tensor bn_forward(const Tensor& x, LayerState& st, LayerCache& cache, bool training, double momentum, double eps)
{
    const auto [C, inner] = channel_layout(x);
    const std::size_t B = x.dim(0);
    const double count = static_cast<double>(B * inner);
    Tensor y(x.shape());
    cache.xhat = Tensor(x.shape());
    cache.inv_std.assign(C, 0.0);
    cache.batch_stats = training;
    for (std::size_t c = 0; c < C; ++c) {
        double mean, var;
        if (training) {
            double sum = 0.0;
            for (std::size_t n = 0; n < B; ++n)
                for (std::size_t i = 0; i < inner; ++i) sum += x[(n * C + c) * inner + i];
            mean = sum / count;
            double sq = 0.0;
            for (std::size_t n = 0; n < B; ++n)
                for (std::size_t i = 0; i < inner; ++i) {
                    const double d = x[(n * C + c) * inner + i] - mean;
                    sq += d * d;
                }
            var = sq / count;
            const double unbiased = count > 1 ? sq / (count - 1) : var;
            st.running_mean[c] = (1 - momentum) * st.running_mean[c] + momentum * mean;
            st.running_var[c] = (1 - momentum) * st.running_var[c] + momentum * unbiased;
        } else {
            mean = st.running_mean[c];
            var = st.running_var[c];
        }
        const double inv = 1.0 / std::sqrt(var + eps);
        cache.inv_std[c] = inv;
        const double g = st.weight.value[c], b = st.bias.value[c];
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t at = (n * C + c) * inner + i;
                const double xh = (x[at] - mean) * inv;
                cache.xhat[at] = xh;
                y[at] = g * xh + b;
            }
    }
    return y;
}

void bn_backward(const Tensor& gy, const LayerState& st, const LayerCache& cache, Tensor& gx, Tensor& gw, Tensor& gb)
{
    const auto [C, inner] = channel_layout(gy);
    const std::size_t B = gy.dim(0);
    const double count = static_cast<double>(B * inner);
    gx = Tensor(gy.shape());
    gw = Tensor({C});
    gb = Tensor({C});
    for (std::size_t c = 0; c < C; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t at = (n * C + c) * inner + i;
                sum_g += gy[at];
                sum_gx += gy[at] * cache.xhat[at];
            }
        gw[c] = sum_gx;
        gb[c] = sum_g;
        const double gamma = st.weight.value[c];
        const double inv = cache.inv_std[c];
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t at = (n * C + c) * inner + i;
                if (cache.batch_stats)
                    gx[at] = gamma * inv * (gy[at] - sum_g / count - cache.xhat[at] * sum_gx / count);
                else
                    gx[at] = gamma * inv * gy[at];
            }
    }
}

void accumulate(Tensor& into, const Tensor& g)
{
    if (into.empty()) {
        into = g;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) into[i] += g[i];
}

} // namespace

TrainState init_state(const NetworkArch& arch, std::uint64_t seed)
{
    validate(arch);
    TrainState st;
    st.rng_seed = seed;
    st.layers.resize(arch.layers.size());
    std::mt19937_64 rng(seed);
    for (const auto& l : arch.layers) {
        auto& ls = st.layers[static_cast<std::size_t>(l.id)];
        const auto I = static_cast<std::size_t>(l.in_channels);
        const auto O = static_cast<std::size_t>(l.out_channels);
        if (l.is_weighted()) {
            const auto K = static_cast<std::size_t>(l.kind == LayerKind::conv2d ? l.kernel : 1);
            ls.weight = make_param(l.kind == LayerKind::conv2d ? Shape{O, I, K, K} : Shape{O, I});
            ls.bias = make_param({O});
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(I * K * K)));
            for (auto& v : ls.weight.value.values()) v = dist(rng);
        } else if (l.kind == LayerKind::batchnorm) {
            ls.weight = make_param({O});
            ls.weight.value.fill(1.0);
            ls.bias = make_param({O});
            ls.running_mean = Tensor({O});
            ls.running_var = Tensor({O}, 1.0);
        }
    }
    return st;
}

void check_state(const NetworkArch& arch, const TrainState& state)
{
    if (state.layers.size() != arch.layers.size())
        throw ConfigError("train state has " + std::to_string(state.layers.size()) + " layers, architecture has " +
                          std::to_string(arch.layers.size()));
    for (const auto& l : arch.layers) {
        const auto& ls = state.layers[static_cast<std::size_t>(l.id)];
        const auto I = static_cast<std::size_t>(l.in_channels);
        const auto O = static_cast<std::size_t>(l.out_channels);
        Shape expect;
        if (l.kind == LayerKind::conv2d) expect = {O, I, static_cast<std::size_t>(l.kernel), static_cast<std::size_t>(l.kernel)};
        else if (l.kind == LayerKind::linear) expect = {O, I};
        else if (l.kind == LayerKind::batchnorm) expect = {O};
        if (ls.weight.value.shape() != expect)
            throw ConfigError(where(l) + ": weight shape " + shape_string(ls.weight.value.shape()) + " expected " +
                              shape_string(expect));
    }
}

ForwardResult forward(const NetworkArch& arch, TrainState& state, const Tensor& batch, const ForwardOptions& options)
{
    const auto& in = arch.input_shape;
    if (batch.rank() != 4 || batch.dim(0) < 1 || batch.dim(1) != static_cast<std::size_t>(in[0]) ||
        batch.dim(2) != static_cast<std::size_t>(in[1]) || batch.dim(3) != static_cast<std::size_t>(in[2]))
        throw ConfigError((arch.layers.empty() ? std::string("network input") : where(arch.layers.front())) +
                          ": batch shape " + shape_string(batch.shape()) + " does not match input_shape");
    check_state(arch, state);

    ForwardResult result;
    auto& cache = result.cache;
    cache.layers.resize(arch.layers.size());
    cache.input_shape = batch.shape();
    std::vector<Tensor> outs(arch.layers.size());
    QuantPlan* plan = options.quant;
    const bool update_ranges = plan && plan->update_ranges && options.training;

    for (const auto& l : arch.layers) {
        const auto id = static_cast<std::size_t>(l.id);
        const int src = input_of(arch, l.id);
        const Tensor& x = src < 0 ? batch : outs[static_cast<std::size_t>(src)];
        auto& lc = cache.layers[id];
        auto& ls = state.layers[id];
        switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::linear: {
            if (l.kind == LayerKind::conv2d && (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(l.in_channels)))
                throw ConfigError(where(l) + ": input " + shape_string(x.shape()) + " does not match in_channels " +
                                  std::to_string(l.in_channels));
            if (l.kind == LayerKind::linear && (x.rank() != 2 || x.dim(1) != static_cast<std::size_t>(l.in_channels)))
                throw ConfigError(where(l) + ": input " + shape_string(x.shape()) + " does not match in_channels " +
                                  std::to_string(l.in_channels));
            lc.input = x;
            lc.weight_used = ls.weight.value;
            if (plan) {
                if (auto it = plan->weight_bits.find(l.id); it != plan->weight_bits.end())
                    lc.weight_used = fake_quant(ls.weight.value, QuantPlan::weight_params(ls.weight.value, it->second));
            }
            outs[id] = l.kind == LayerKind::conv2d ? conv_forward(x, lc.weight_used, ls.bias.value, l)
                                                   : linear_forward(x, lc.weight_used, ls.bias.value);
            break;
        }
        case LayerKind::relu: {
            Tensor y = x;
            lc.mask.assign(y.size(), 0);
            for (std::size_t i = 0; i < y.size(); ++i) {
                if (y[i] > 0.0) lc.mask[i] = 1;
                else y[i] = 0.0;
            }
            for (const auto& obs : options.observers) obs(l.id, y);
            if (plan) {
                if (auto it = plan->activations.find(l.id); it != plan->activations.end()) {
                    std::vector<std::uint8_t> ste;
                    apply_activation_quant(y, it->second, update_ranges, ste);
                    for (std::size_t i = 0; i < ste.size(); ++i) lc.mask[i] &= ste[i];
                }
            }
            outs[id] = std::move(y);
            break;
        }
        case LayerKind::batchnorm:
            if (x.dim(1) != static_cast<std::size_t>(l.in_channels))
                throw ConfigError(where(l) + ": input has " + std::to_string(x.dim(1)) + " channels, expected " +
                                  std::to_string(l.in_channels));
            outs[id] = bn_forward(x, ls, lc, options.training, options.bn_momentum, options.bn_eps);
            break;
        case LayerKind::maxpool:
            lc.input_shape = x.shape();
            outs[id] = pool_forward(x, l, &lc.argmax);
            break;
        case LayerKind::avgpool:
            lc.input_shape = x.shape();
            outs[id] = pool_forward(x, l, nullptr);
            break;
        case LayerKind::flatten:
            lc.input_shape = x.shape();
            outs[id] = x.reshaped({x.dim(0), x.size() / x.dim(0)});
            break;
        case LayerKind::residual_add: {
            Tensor skip = outs[static_cast<std::size_t>(*l.skip_source)];
            if (skip.shape() != x.shape())
                throw ConfigError(where(l) + ": skip operand " + shape_string(skip.shape()) +
                                  " does not match main operand " + shape_string(x.shape()));
            lc.mask.assign(skip.size(), 1);
            if (plan) {
                if (auto it = plan->activations.find(l.id); it != plan->activations.end())
                    apply_activation_quant(skip, it->second, update_ranges, lc.mask);
            }
            Tensor y = x;
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += skip[i];
            outs[id] = std::move(y);
            break;
        }
        }
    }
    result.logits = std::move(outs.back());
    if (result.logits.rank() != 2 || result.logits.dim(1) != static_cast<std::size_t>(arch.num_classes))
        throw ConfigError(where(arch.layers.back()) + ": output " + shape_string(result.logits.shape()) +
                          " is not (batch, num_classes)");
    cache.state_version = state.version;
    cache.valid = true;
    return result;
}

Gradients backward(const NetworkArch& arch, const TrainState& state, const ForwardCache& cache, const Tensor& loss_grad)
{
    if (!cache.valid || cache.layers.size() != arch.layers.size())
        throw UsageError("backward called without a matching forward cache");
    if (cache.state_version != state.version)
        throw UsageError("backward called with a stale forward cache (weights changed since forward)");

    const std::size_t L = arch.layers.size();
    std::vector<Tensor> gout(L);
    gout[L - 1] = loss_grad;
    Gradients grads;
    grads.weight.resize(L);
    grads.bias.resize(L);

    auto send = [&](int target, const Tensor& g) {
        if (target < 0) accumulate(grads.input, g);
        else accumulate(gout[static_cast<std::size_t>(target)], g);
    };

    for (std::size_t r = L; r-- > 0;) {
        const auto& l = arch.layers[r];
        const auto& lc = cache.layers[r];
        Tensor& g = gout[r];
        const int src = input_of(arch, l.id);
        if (g.empty()) continue; // output never reaches the loss
        switch (l.kind) {
        case LayerKind::conv2d: {
            Tensor gx, gw, gb;
            conv_backward(lc.input, lc.weight_used, g, l, gx, gw, gb);
            grads.weight[r] = std::move(gw);
            grads.bias[r] = std::move(gb);
            send(src, gx);
            break;
        }
        case LayerKind::linear: {
            Tensor gx, gw, gb;
            linear_backward(lc.input, lc.weight_used, g, gx, gw, gb);
            grads.weight[r] = std::move(gw);
            grads.bias[r] = std::move(gb);
            send(src, gx);
            break;
        }
        case LayerKind::relu: {
            Tensor gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i)
                if (!lc.mask[i]) gx[i] = 0.0;
            send(src, gx);
            break;
        }
        case LayerKind::batchnorm: {
            Tensor gx, gw, gb;
            bn_backward(g, state.layers[r], lc, gx, gw, gb);
            grads.weight[r] = std::move(gw);
            grads.bias[r] = std::move(gb);
            send(src, gx);
            break;
        }
        case LayerKind::maxpool: {
            Tensor gx(lc.input_shape);
            for (std::size_t i = 0; i < g.size(); ++i) gx[lc.argmax[i]] += g[i];
            send(src, gx);
            break;
        }
        case LayerKind::avgpool:
            send(src, avgpool_backward(lc.input_shape, g, l));
            break;
        case LayerKind::flatten:
            send(src, g.reshaped(lc.input_shape));
            break;
        case LayerKind::residual_add: {
            send(src, g);
            Tensor gs = g;
            for (std::size_t i = 0; i < gs.size(); ++i)
                if (!lc.mask[i]) gs[i] = 0.0;
            send(*l.skip_source, gs);
            break;
        }
        }
    }
    if (grads.input.empty()) grads.input = Tensor(cache.input_shape);
    return grads;
}

LossResult softmax_xent(const Tensor& logits, std::span<const int> labels)
{
    if (logits.rank() != 2) throw InputError("softmax_xent expects (batch, classes) logits");
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    if (labels.size() != B) throw InputError("softmax_xent: label count does not match batch");
    LossResult r;
    r.grad = Tensor(logits.shape());
    double total = 0.0;
    for (std::size_t n = 0; n < B; ++n) {
        const int y = labels[n];
        if (y < 0 || static_cast<std::size_t>(y) >= K)
            throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(K) + ")");
        const double* z = &logits[n * K];
        const double zmax = *std::max_element(z, z + K);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) sum += std::exp(z[k] - zmax);
        const double log_sum = std::log(sum) + zmax;
        total += log_sum - z[y];
        for (std::size_t k = 0; k < K; ++k) {
            const double p = std::exp(z[k] - log_sum);
            r.grad[n * K + k] = (p - (static_cast<int>(k) == y ? 1.0 : 0.0)) / static_cast<double>(B);
        }
    }
    r.loss = total / static_cast<double>(B);
    return r;
}

void optimizer_step(TrainState& state, const Gradients& grads, const AdamConfig& config)
{
    if (grads.weight.size() != state.layers.size() || grads.bias.size() != state.layers.size())
        throw InputError("gradient list does not match the train state");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    auto update = [&](Param& p, const Tensor& g) {
        if (!p || g.empty()) return;
        if (g.shape() != p.value.shape())
            throw InputError("gradient shape " + shape_string(g.shape()) + " does not match parameter " +
                             shape_string(p.value.shape()));
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double gi = g[i] + config.weight_decay * p.value[i];
            p.m[i] = config.beta1 * p.m[i] + (1 - config.beta1) * gi;
            p.v[i] = config.beta2 * p.v[i] + (1 - config.beta2) * gi * gi;
            p.value[i] -= config.lr * (p.m[i] / c1) / (std::sqrt(p.v[i] / c2) + config.eps);
        }
    };
    for (std::size_t i = 0; i < state.layers.size(); ++i) {
        update(state.layers[i].weight, grads.weight[i]);
        update(state.layers[i].bias, grads.bias[i]);
    }
    ++state.version;
}

} // namespace adq
