#include "adq/scheduler.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace adq {

namespace {

void check_ad(int layer, double ad)
{
    if (!(ad >= 0.0 && ad <= 1.0))
        throw InputError("activation density of layer " + std::to_string(layer) + " outside [0, 1]: " +
                         std::to_string(ad));
}

int round_half_away(double x)
{
    return static_cast<int>(std::round(x));
}

// Where the channels of a conv's output end up.
struct ChannelFlow {
    std::vector<int> batchnorms;
    std::vector<int> consumers;           // conv/linear reading the channels
    std::vector<int> flattened_consumers; // linear layers behind a flatten
    bool reaches_add = false;
    bool reaches_output = false;
};

std::vector<std::vector<int>> readers_of(const NetworkArch& arch)
{
    std::vector<std::vector<int>> readers(arch.layers.size());
    for (const auto& l : arch.layers) {
        const int src = input_of(arch, l.id);
        if (src >= 0) readers[static_cast<std::size_t>(src)].push_back(l.id);
        if (l.kind == LayerKind::residual_add && l.skip_source)
            readers[static_cast<std::size_t>(*l.skip_source)].push_back(l.id);
    }
    return readers;
}

ChannelFlow channel_flow(const NetworkArch& arch, const std::vector<std::vector<int>>& readers, int conv)
{
    ChannelFlow f;
    std::vector<std::pair<int, bool>> todo{{conv, false}};
    while (!todo.empty()) {
        const auto [id, flat] = todo.back();
        todo.pop_back();
        const auto& rs = readers[static_cast<std::size_t>(id)];
        if (rs.empty() && id == arch.size() - 1) f.reaches_output = true;
        for (int r : rs) {
            const auto kind = arch.layer(r).kind;
            if (kind == LayerKind::residual_add) {
                f.reaches_add = true;
            } else if (arch.layer(r).is_weighted()) {
                (flat ? f.flattened_consumers : f.consumers).push_back(r);
            } else if (kind == LayerKind::flatten) {
                todo.emplace_back(r, true);
            } else {
                if (kind == LayerKind::batchnorm) f.batchnorms.push_back(r);
                if (flat && kind != LayerKind::relu) f.reaches_add = true; // nothing sensible to slice
                todo.emplace_back(r, flat);
            }
        }
    }
    return f;
}

// Copy of t restricted to `idx` along `axis`.
Tensor take(const Tensor& t, std::size_t axis, const std::vector<std::size_t>& idx)
{
    Shape shape = t.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
    const std::size_t n = shape[axis];
    shape[axis] = idx.size();
    Tensor out(shape);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < idx.size(); ++j)
            for (std::size_t i = 0; i < inner; ++i)
                out[(o * idx.size() + j) * inner + i] = t[(o * n + idx[j]) * inner + i];
    return out;
}

void take_param(Param& p, std::size_t axis, const std::vector<std::size_t>& idx)
{
    p.value = take(p.value, axis, idx);
    p.m = take(p.m, axis, idx);
    p.v = take(p.v, axis, idx);
}

std::string join(const std::map<int, int>& m)
{
    std::string s;
    for (const auto& [id, v] : m) {
        if (!s.empty()) s += ';';
        s += std::to_string(v);
    }
    return s;
}

Tensor gather(const Tensor& images, const std::vector<std::size_t>& order, std::size_t first, std::size_t count)
{
    Shape shape = images.shape();
    const std::size_t sample = images.size() / shape[0];
    shape[0] = count;
    Tensor out(shape);
    for (std::size_t i = 0; i < count; ++i) {
        const auto src = images.values().begin() + static_cast<std::ptrdiff_t>(order[first + i] * sample);
        std::copy(src, src + static_cast<std::ptrdiff_t>(sample),
                  out.values().begin() + static_cast<std::ptrdiff_t>(i * sample));
    }
    return out;
}

} // namespace

BitWidthAssignment initial_assignment(const NetworkArch& arch, int initial_bits)
{
    if (initial_bits < 1 || initial_bits > 16) throw ConfigError("initial_bits must be in [1, 16]");
    BitWidthAssignment a;
    for (int id : main_weighted_layers(arch)) a.k[id] = initial_bits;
    for (int id : default_exempt_layers(arch)) a.exempt.insert(id);
    return a;
}

BitWidthAssignment update_bitwidths(const BitWidthAssignment& assignment, const std::map<int, double>& ad)
{
    for (const auto& [id, v] : ad) check_ad(id, v);
    BitWidthAssignment next = assignment;
    for (auto& [id, k] : next.k) {
        if (next.exempt.count(id)) continue;
        auto it = ad.find(id);
        if (it == ad.end()) continue;
        k = std::max(1, round_half_away(k * it->second));
    }
    return next;
}

PruneState initial_prune_state(const NetworkArch& arch)
{
    const auto readers = readers_of(arch);
    PruneState s;
    for (const auto& l : arch.layers) {
        if (l.kind != LayerKind::conv2d) continue;
        const auto f = channel_flow(arch, readers, l.id);
        if (f.reaches_add || f.reaches_output) continue;
        s.channels[l.id] = s.initial_channels[l.id] = l.out_channels;
    }
    return s;
}

PruneState update_channels(const PruneState& state, const std::map<int, double>& ad, bool from_current)
{
    for (const auto& [id, v] : ad) check_ad(id, v);
    PruneState next = state;
    for (auto& [id, c] : next.channels) {
        auto it = ad.find(id);
        if (it == ad.end()) continue;
        const int ref = from_current ? c : state.initial_channels.at(id);
        c = std::min(c, std::max(1, round_half_away(ref * it->second)));
    }
    return next;
}

SkipBits propagate_skip_bitwidths(const NetworkArch& arch, const BitWidthAssignment& assignment)
{
    for (const auto& l : arch.layers)
        if (l.skip_source && (*l.skip_source < 0 || *l.skip_source >= l.id))
            throw ConfigError("layer " + std::to_string(l.id) + ": skip_source " + std::to_string(*l.skip_source) +
                              " is not an earlier layer");
    SkipBits out;
    out.layer_bits = assignment.k;
    for (const auto& l : arch.layers) {
        if (l.kind != LayerKind::residual_add) continue;
        const int dest = skip_destination(arch, l.id);
        auto it = assignment.k.find(dest);
        if (it == assignment.k.end())
            throw ConfigError("residual-add " + std::to_string(l.id) + ": destination layer " + std::to_string(dest) +
                              " has no bit-width");
        out.add_bits[l.id] = it->second;
        for (int b : skip_branch_layers(arch, l.id))
            if (arch.layer(b).is_weighted()) out.layer_bits[b] = it->second;
    }
    return out;
}

std::map<int, std::vector<int>> select_pruned_channels(const PruneState& state,
                                                       const std::map<int, std::vector<double>>& scores)
{
    std::map<int, std::vector<int>> kept;
    for (const auto& [id, c] : state.channels) {
        auto it = scores.find(id);
        if (it == scores.end()) throw InternalError("no channel scores for layer " + std::to_string(id));
        const auto& s = it->second;
        if (c < 1 || static_cast<std::size_t>(c) > s.size())
            throw InternalError("layer " + std::to_string(id) + ": keeping " + std::to_string(c) + " of " +
                                std::to_string(s.size()) + " channels");
        std::vector<int> order(s.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return s[static_cast<std::size_t>(a)] > s[static_cast<std::size_t>(b)];
        });
        order.resize(static_cast<std::size_t>(c));
        std::sort(order.begin(), order.end());
        kept[id] = std::move(order);
    }
    return kept;
}

std::pair<NetworkArch, TrainState> apply_channel_selection(const NetworkArch& arch, const TrainState& state,
                                                           const std::map<int, std::vector<int>>& kept)
{
    check_state(arch, state);
    const auto readers = readers_of(arch);
    const auto shapes = infer_shapes(arch);
    TrainState out = state;
    std::map<int, int> widths;
    for (const auto& [id, idx_int] : kept) {
        const auto& l = arch.layer(id);
        if (l.kind != LayerKind::conv2d) throw ConfigError("channel selection on non-conv layer " + std::to_string(id));
        std::vector<std::size_t> idx(idx_int.begin(), idx_int.end());
        for (std::size_t i = 0; i < idx.size(); ++i)
            if (idx[i] >= static_cast<std::size_t>(l.out_channels) || (i > 0 && idx[i] <= idx[i - 1]))
                throw InternalError("layer " + std::to_string(id) + ": kept channels must be ascending and in range");
        if (idx.size() == static_cast<std::size_t>(l.out_channels)) continue;
        const auto f = channel_flow(arch, readers, id);
        if (f.reaches_add || f.reaches_output)
            throw ConfigError("layer " + std::to_string(id) + " feeds a residual join and cannot be pruned");
        auto& ls = out.layers[static_cast<std::size_t>(id)];
        take_param(ls.weight, 0, idx);
        take_param(ls.bias, 0, idx);
        for (int bn : f.batchnorms) {
            auto& b = out.layers[static_cast<std::size_t>(bn)];
            take_param(b.weight, 0, idx);
            take_param(b.bias, 0, idx);
            b.running_mean = take(b.running_mean, 0, idx);
            b.running_var = take(b.running_var, 0, idx);
        }
        for (int c : f.consumers) take_param(out.layers[static_cast<std::size_t>(c)].weight, 1, idx);
        for (int c : f.flattened_consumers) {
            // Features after flatten are channel-major: f = c * (H * W) + r.
            const int flat = input_of(arch, c);
            const auto& in = input_shape_of(arch, shapes, flat);
            const std::size_t hw = static_cast<std::size_t>(in[1]) * static_cast<std::size_t>(in[2]);
            std::vector<std::size_t> features;
            for (std::size_t ch : idx)
                for (std::size_t r = 0; r < hw; ++r) features.push_back(ch * hw + r);
            take_param(out.layers[static_cast<std::size_t>(c)].weight, 1, features);
        }
        widths[id] = static_cast<int>(idx.size());
    }
    NetworkArch pruned = with_channels(arch, widths);
    validate(pruned);
    check_state(pruned, out);
    ++out.version;
    return {std::move(pruned), std::move(out)};
}

QuantPlan make_quant_plan(const NetworkArch& arch, const BitWidthAssignment& assignment, double ema_decay,
                          const QuantPlan* previous)
{
    const auto sb = propagate_skip_bitwidths(arch, assignment);
    QuantPlan plan;
    auto site = [&](int id, int bits) {
        ActivationQuant aq{bits, RangeTracker(RangeTracker::Mode::ema, ema_decay)};
        if (previous) {
            if (auto it = previous->activations.find(id); it != previous->activations.end()) aq.range = it->second.range;
        }
        plan.activations[id] = aq;
    };
    for (const auto& [id, bits] : sb.layer_bits)
        if (!assignment.exempt.count(id)) plan.weight_bits[id] = bits;
    for (const auto& l : arch.layers) {
        if (l.kind == LayerKind::relu) {
            const auto owner = owner_of(arch, l.id);
            if (!owner || assignment.exempt.count(*owner)) continue;
            if (auto it = sb.layer_bits.find(*owner); it != sb.layer_bits.end()) site(l.id, it->second);
        } else if (l.kind == LayerKind::residual_add) {
            if (assignment.exempt.count(skip_destination(arch, l.id))) continue;
            site(l.id, sb.add_bits.at(l.id));
        }
    }
    return plan;
}

int ScheduleConfig::budget_for(int iter) const
{
    if (epoch_budget.empty()) return 0;
    const auto i = static_cast<std::size_t>(std::max(iter, 1) - 1);
    return epoch_budget[std::min(i, epoch_budget.size() - 1)];
}

void ScheduleConfig::validate() const
{
    auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
    if (initial_bits < 1 || initial_bits > 16) fail("initial_bits", "must be in [1, 16]");
    if (max_iters < 1) fail("max_iters", "must be >= 1");
    if (epoch_budget.empty()) fail("epoch_budget", "must not be empty");
    for (int b : epoch_budget) {
        if (b < 1) fail("epoch_budget", "entries must be >= 1");
        if (stop_at_saturation && b < saturation_window) fail("epoch_budget", "entries must be >= saturation_window");
    }
    if (!(saturation_epsilon > 0.0)) fail("saturation_epsilon", "must be positive");
    if (saturation_window < 2) fail("saturation_window", "must be >= 2");
    if (final_convergence_epochs < 0) fail("final_convergence_epochs", "must be >= 0");
    if (remove_after_iteration < 0) fail("remove_after_iteration", "must be >= 0");
    if (!remove_layers.empty() && remove_after_iteration < 1) fail("remove_after_iteration", "must be >= 1 with remove_layers");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (!(adam.lr > 0.0)) fail("adam.lr", "must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) fail("adam.beta1", "must lie in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("adam.beta2", "must lie in [0, 1)");
    if (!(adam.eps > 0.0)) fail("adam.eps", "must be positive");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) fail("ema_decay", "must lie in (0, 1)");
}

std::string ScheduleLog::to_json() const
{
    using nlohmann::ordered_json;
    auto keyed = [](const auto& m) {
        ordered_json o = ordered_json::object();
        for (const auto& [id, v] : m) o[std::to_string(id)] = v;
        return o;
    };
    ordered_json j;
    j["iterations"] = ordered_json::array();
    for (const auto& r : iterations) {
        ordered_json o;
        o["iter"] = r.iter;
        o["bits"] = keyed(r.bits);
        o["channels"] = keyed(r.channels);
        o["epochs"] = r.epochs;
        o["saturated"] = r.saturated;
        o["total_ad"] = r.network_ad;
        o["layer_ad"] = keyed(r.layer_ad);
        o["test_accuracy"] = r.test_accuracy;
        if (!r.removed.empty()) o["removed"] = r.removed;
        j["iterations"].push_back(o);
    }
    j["epochs"] = ordered_json::array();
    for (const auto& e : epochs)
        j["epochs"].push_back({{"iter", e.iter},
                               {"epoch", e.epoch},
                               {"train_loss", e.train_loss},
                               {"test_accuracy", e.test_accuracy},
                               {"total_ad", e.network_ad}});
    j["final_epochs"] = final_epochs;
    j["final_accuracy"] = final_accuracy;
    return j.dump(2) + "\n";
}

std::string ScheduleLog::to_csv() const
{
    std::ostringstream os;
    os.precision(17);
    os << "iter,bits,channels,test_accuracy,total_ad,epochs\n";
    for (const auto& r : iterations)
        os << r.iter << ',' << join(r.bits) << ',' << join(r.channels) << ',' << r.test_accuracy << ','
           << r.network_ad << ',' << r.epochs << '\n';
    return os.str();
}

double evaluate_accuracy(const NetworkArch& arch, TrainState& state, QuantPlan* plan, const Dataset& data,
                         int batch_size)
{
    if (data.size() == 0) throw InputError("evaluation dataset is empty");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    ForwardOptions opt;
    opt.training = false;
    opt.quant = plan;
    std::size_t correct = 0;
    const auto bs = static_cast<std::size_t>(batch_size);
    for (std::size_t first = 0; first < data.size(); first += bs) {
        const std::size_t n = std::min(bs, data.size() - first);
        const auto logits = forward(arch, state, gather(data.images, order, first, n), opt).logits;
        const std::size_t K = logits.dim(1);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = logits.values().begin() + static_cast<std::ptrdiff_t>(i * K);
            const auto best = static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(K)) - row);
            if (best == data.labels[first + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

class Trainer {
public:
    Trainer(const DataSplit& data, const ScheduleConfig& cfg, ScheduleResult& r)
        : data_(data), cfg_(cfg), r_(r), rng_(cfg.seed ^ 0x5deece66dULL)
    {
    }

    // One pass over the training set; AD and per-channel positive counts are
    // recorded under `epoch`.
    double epoch(int epoch)
    {
        refresh_owners();
        channel_pos_.clear();
        channel_tot_.clear();
        for (const auto& [id, c] : r_.prune.channels) {
            channel_pos_[id].assign(static_cast<std::size_t>(c), 0);
            channel_tot_[id] = 0;
        }
        ForwardOptions opt;
        opt.training = true;
        opt.quant = &r_.plan;
        opt.observers.push_back([&](int relu, const Tensor& y) { observe(epoch, relu, y); });

        const auto& train = data_.train;
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng_);
        const auto bs = static_cast<std::size_t>(cfg_.batch_size);
        double loss_sum = 0.0;
        for (std::size_t first = 0; first < order.size(); first += bs) {
            const std::size_t n = std::min(bs, order.size() - first);
            std::vector<int> labels(n);
            for (std::size_t i = 0; i < n; ++i) labels[i] = train.labels[order[first + i]];
            auto fr = forward(r_.arch, r_.state, gather(train.images, order, first, n), opt);
            const auto loss = softmax_xent(fr.logits, labels);
            if (!std::isfinite(loss.loss)) {
                r_.state.epoch = epoch;
                throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch),
                                      std::make_shared<const ScheduleResult>(r_));
            }
            loss_sum += loss.loss * static_cast<double>(n);
            optimizer_step(r_.state, backward(r_.arch, r_.state, fr.cache, loss.grad), cfg_.adam);
        }
        r_.state.epoch = epoch;
        return loss_sum / static_cast<double>(order.size());
    }

    std::map<int, std::vector<double>> channel_scores() const
    {
        std::map<int, std::vector<double>> s;
        for (const auto& [id, pos] : channel_pos_) {
            const double tot = static_cast<double>(channel_tot_.at(id));
            auto& v = s[id];
            for (auto p : pos) v.push_back(tot > 0 ? static_cast<double>(p) / tot : 0.0);
        }
        return s;
    }

private:
    void refresh_owners()
    {
        owners_.clear();
        for (const auto& l : r_.arch.layers)
            if (l.kind == LayerKind::relu)
                if (auto o = owner_of(r_.arch, l.id)) owners_[l.id] = *o;
    }

    void observe(int epoch, int relu, const Tensor& y)
    {
        auto it = owners_.find(relu);
        if (it == owners_.end()) return;
        r_.history.record(it->second, epoch, y);
        auto pos = channel_pos_.find(it->second);
        if (pos == channel_pos_.end() || y.rank() != 4 || y.dim(1) != pos->second.size()) return;
        const std::size_t B = y.dim(0), C = y.dim(1), HW = y.dim(2) * y.dim(3);
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t i = 0; i < HW; ++i)
                    if (y[(n * C + c) * HW + i] > 0.0) ++pos->second[c];
        channel_tot_[it->second] += B * HW;
    }

    const DataSplit& data_;
    const ScheduleConfig& cfg_;
    ScheduleResult& r_;
    std::mt19937_64 rng_;
    std::map<int, int> owners_;
    std::map<int, std::vector<std::uint64_t>> channel_pos_;
    std::map<int, std::uint64_t> channel_tot_;
};

template <class V>
std::map<int, V> remap_keys(const std::map<int, V>& m, const std::map<int, int>& ids)
{
    std::map<int, V> out;
    for (const auto& [k, v] : m)
        if (auto it = ids.find(k); it != ids.end()) out[it->second] = v;
    return out;
}

void erase_layers(ScheduleResult& r, const std::vector<int>& ids)
{
    auto [arch, map] = remove_layers(r.arch, ids);
    TrainState st = r.state;
    st.layers.clear();
    for (const auto& [old_id, new_id] : map) {
        (void)new_id;
        st.layers.push_back(r.state.layers[static_cast<std::size_t>(old_id)]);
    }
    ++st.version;
    r.arch = std::move(arch);
    r.state = std::move(st);
    r.assignment.k = remap_keys(r.assignment.k, map);
    std::set<int> exempt;
    for (int e : r.assignment.exempt)
        if (auto it = map.find(e); it != map.end()) exempt.insert(it->second);
    r.assignment.exempt = std::move(exempt);
    r.prune.channels = remap_keys(r.prune.channels, map);
    r.prune.initial_channels = remap_keys(r.prune.initial_channels, map);
    r.plan.activations = remap_keys(r.plan.activations, map);
    r.plan.weight_bits = remap_keys(r.plan.weight_bits, map);
    ADHistory h;
    for (const auto& rec : r.history.all_records())
        if (auto it = map.find(rec.layer_id); it != map.end()) h.record_counts(it->second, rec.epoch, rec.nonzero, rec.total);
    r.history = std::move(h);
}

std::map<int, int> conv_widths(const NetworkArch& arch)
{
    std::map<int, int> w;
    for (const auto& l : arch.layers)
        if (l.kind == LayerKind::conv2d) w[l.id] = l.out_channels;
    return w;
}

} // namespace

ScheduleResult run_schedule(const NetworkArch& arch, const DataSplit& data, const ScheduleConfig& config,
                            const IterationHook& hook)
{
    config.validate();
    validate(arch);
    const auto& in = arch.input_shape;
    for (const Dataset* d : {&data.train, &data.test}) {
        if (d->size() == 0) throw ConfigError("dataset split is empty");
        const auto& s = d->images.shape();
        if (s[1] != static_cast<std::size_t>(in[0]) || s[2] != static_cast<std::size_t>(in[1]) ||
            s[3] != static_cast<std::size_t>(in[2]))
            throw ConfigError("dataset image shape " + shape_string(s) + " does not match the architecture input");
        for (int y : d->labels)
            if (y < 0 || y >= arch.num_classes) throw ConfigError("dataset label outside [0, num_classes)");
    }

    ScheduleResult r;
    r.arch = arch;
    r.state = init_state(arch, config.seed);
    r.assignment = initial_assignment(arch, config.initial_bits);
    if (config.pruning_enabled) r.prune = initial_prune_state(arch);
    r.plan = make_quant_plan(r.arch, r.assignment, config.ema_decay);

    Trainer trainer(data, config, r);
    int epoch = 0;
    double accuracy = 0.0;
    std::vector<int> pending_removed;

    auto train_one = [&](int iter) {
        ++epoch;
        const double loss = trainer.epoch(epoch);
        accuracy = evaluate_accuracy(r.arch, r.state, &r.plan, data.test, config.batch_size);
        r.log.epochs.push_back({iter, epoch, loss, accuracy, r.history.network_ad(epoch, config.ad_mode)});
    };

    for (int iter = 1;; ++iter) {
        r.assignment.iter = iter;
        IterationRecord rec;
        rec.iter = iter;
        rec.removed = std::move(pending_removed);
        pending_removed.clear();
        const int start = epoch + 1;
        for (int e = 0; e < config.budget_for(iter); ++e) {
            train_one(iter);
            ++rec.epochs;
            if (config.stop_at_saturation &&
                r.history.saturation(config.saturation_epsilon, config.saturation_window, start).all) {
                rec.saturated = true;
                break;
            }
        }
        rec.bits = propagate_skip_bitwidths(r.arch, r.assignment).layer_bits;
        rec.channels = conv_widths(r.arch);
        rec.network_ad = r.history.network_ad(epoch, config.ad_mode);
        std::map<int, double> ad;
        for (int id : r.history.layers())
            if (r.history.has(id, epoch)) ad[id] = r.history.layer_ad(id, epoch);
        rec.layer_ad = ad;
        rec.test_accuracy = accuracy;
        r.log.iterations.push_back(rec);
        if (hook) hook(r, rec);
        if (iter >= config.max_iters) break;

        if (!config.remove_layers.empty() && iter == config.remove_after_iteration) {
            erase_layers(r, config.remove_layers);
            r.plan = make_quant_plan(r.arch, r.assignment, config.ema_decay, &r.plan);
            pending_removed = config.remove_layers;
            continue;
        }

        const auto next = update_bitwidths(r.assignment, ad);
        const auto next_prune = config.pruning_enabled
                                    ? update_channels(r.prune, ad, config.prune_from_current)
                                    : r.prune;
        if (next.k == r.assignment.k && next_prune.channels == r.prune.channels) break;
        if (next_prune.channels != r.prune.channels) {
            const auto kept = select_pruned_channels(next_prune, trainer.channel_scores());
            auto [pa, ps] = apply_channel_selection(r.arch, r.state, kept);
            r.arch = std::move(pa);
            r.state = std::move(ps);
        }
        r.assignment = next;
        r.prune = next_prune;
        r.plan = make_quant_plan(r.arch, r.assignment, config.ema_decay, &r.plan);
    }

    const int last_iter = r.log.iterations.back().iter;
    for (int e = 0; e < config.final_convergence_epochs; ++e) train_one(last_iter);
    r.log.final_epochs = config.final_convergence_epochs;
    r.log.final_accuracy = accuracy;
    return r;
}

} // namespace adq
