// One line per acceptance criterion; exit status 1 if any criterion fails.
// Usage: acceptance [criterion numbers...]

#include "adq/admon.hpp"
#include "adq/energy.hpp"
#include "adq/experiment.hpp"
#include "adq/network.hpp"
#include "adq/presets.hpp"
#include "adq/quant.hpp"
#include "adq/scheduler.hpp"
#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace adq;
using adq::testing::random_tensor;

namespace {

// Tolerances, relative unless stated.
constexpr double tol_pim_baseline_vgg = 0.05;
constexpr double tol_pim_baseline_resnet = 0.10;
constexpr double tol_pim_mixed = 0.10;
constexpr double tol_pim_pruned = 0.15;
constexpr double tol_efficiency = 0.15;
constexpr double tol_complexity = 0.20;
constexpr double tol_gradcheck = 1e-4;  // relative error, denominator floored at 1e-3
constexpr double tol_accuracy_pp = 3.0; // percentage points
constexpr double max_energy_seconds = 1.0;
constexpr double max_gradcheck_seconds = 30.0;
constexpr double max_schedule_cpu_seconds = 600.0;
constexpr int max_schedule_iterations = 4;
constexpr double vgg_baseline_epoch_total = 210.0;

struct Outcome {
    bool pass = true;
    std::string detail;
};

class Detail {
public:
    template <class... T>
    Detail& add(const char* fmt, T... args)
    {
        char buf[512];
        std::snprintf(buf, sizeof buf, fmt, args...);
        if (!text_.empty()) text_ += "; ";
        text_ += buf;
        return *this;
    }
    const std::string& str() const { return text_; }

private:
    std::string text_;
};

double rel(double computed, double published)
{
    return (computed - published) / published;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const PresetCatalog& catalog()
{
    static const PresetCatalog c = PresetCatalog::builtin();
    return c;
}

EnergyReport pim(const std::string& name)
{
    const auto& p = catalog().get(name);
    return network_energy(EnergyModel::pim, p.arch, p.config, p.baseline_bits);
}

// Compares computed against published and appends "label computed (dev, tol)".
bool within(Detail& d, const char* label, double computed, double published, double tol)
{
    const double dev = rel(computed, published);
    const bool ok = std::abs(dev) <= tol;
    d.add("%s %.4g vs %.4g (%+.2f%%, tol %.0f%%)%s", label, computed, published, 100 * dev, 100 * tol, ok ? "" : " FAIL");
    return ok;
}

Outcome criterion1()
{
    Detail d;
    const auto t0 = std::chrono::steady_clock::now();
    const auto vgg = pim("vgg19-cifar10-baseline");
    const auto res = pim("resnet18-cifar100-baseline");
    const double secs = seconds_since(t0);
    bool ok = within(d, "VGG19 uJ", vgg.total_uj(), 110.154, tol_pim_baseline_vgg);
    ok &= within(d, "ResNet18 uJ", res.total_uj(), 159.501, tol_pim_baseline_resnet);
    d.add("%.3f s (limit %.0f s)", secs, max_energy_seconds);
    ok &= secs < max_energy_seconds;
    return {ok, d.str()};
}

Outcome criterion2()
{
    Detail d;
    // Quantization-only iteration-2 bits, exempt first/last layers at 16 bits.
    const auto vgg = pim("vgg19-cifar10-iter2");
    bool ok = within(d, "VGG19 iter2 uJ", vgg.total_uj(), 21.506, tol_pim_mixed);
    ok &= within(d, "VGG19 reduction", vgg.ratio, 5.12, tol_pim_mixed);
    const auto res = pim("resnet18-cifar100-iter3");
    ok &= within(d, "ResNet18 final-iteration reduction", res.ratio, 4.81, tol_pim_mixed);

    // For reference only: the longer bit list printed with the pruned results.
    const auto& p = catalog().get("vgg19-cifar10-pruned-iter2");
    const auto main = main_weighted_layers(p.arch);
    NetworkConfig alt;
    for (std::size_t i = 0; i + 1 < main.size(); ++i) alt.bits[main[i]] = p.published_bits[i];
    alt.bits[main.back()] = p.published_bits.back();
    const auto r = network_energy(EnergyModel::pim, p.arch, alt, 16);
    d.add("info: leading entries of the 21-entry list give %.3f uJ / %.2fx", r.total_uj(), r.ratio);
    return {ok, d.str()};
}

Outcome criterion3()
{
    Detail d;
    bool ok = within(d, "VGG19 reduction", pim("vgg19-cifar10-pruned-iter2").ratio, 197.55, tol_pim_pruned);
    ok &= within(d, "ResNet18 reduction", pim("resnet18-cifar100-pruned-iter3").ratio, 43.941, tol_pim_pruned);
    return {ok, d.str()};
}

Outcome criterion4()
{
    Detail d;
    bool ok = true;
    const std::pair<const char*, double> rows[] = {
        {"vgg19-cifar10-iter2", 4.16},          {"vgg19-cifar10-iter2a", 4.19},
        {"resnet18-cifar100-iter2", 2.76},      {"resnet18-cifar100-iter3", 3.19},
        {"resnet18-tinyimagenet-iter2", 2.73},  {"resnet18-tinyimagenet-iter3", 4.14},
        {"resnet18-tinyimagenet-iter4", 4.50},
    };
    for (const auto& [name, published] : rows) ok &= within(d, name, preset_efficiency(catalog().get(name)), published, tol_efficiency);
    return {ok, d.str()};
}

Outcome criterion5()
{
    Detail d;
    const auto& p = catalog().get("vgg19-cifar10-iter2");
    bool ok = within(d, "VGG19 iter2 complexity", preset_complexity(catalog(), p, vgg_baseline_epoch_total), 0.524,
                     tol_complexity);

    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> epochs(1, 200), count(1, 6);
    std::uniform_real_distribution<double> red(1.0, 50.0);
    int violations = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        std::vector<std::pair<double, int>> iters{{1.0, epochs(rng)}};
        const int extra = count(rng);
        double total = iters[0].second;
        for (int i = 0; i < extra; ++i) {
            double r = red(rng);
            if (r <= 1.0) r = std::nextafter(1.0, 2.0);
            iters.emplace_back(r, epochs(rng));
            total += iters.back().second;
        }
        const double base = std::uniform_real_distribution<double>(50.0, 400.0)(rng);
        if (!(training_complexity(iters, base) < total / base)) ++violations;
    }
    d.add("strict bound held in %d/%d random runs", trials - violations, trials);
    ok &= violations == 0;
    return {ok, d.str()};
}

Outcome criterion6()
{
    Detail d;
    int mismatches = 0;
    int cases = 0;
    for (int k = 1; k <= 16; ++k) {
        for (int n = 0; n <= 100; ++n) {
            BitWidthAssignment a;
            a.k[1] = k;
            const int got = update_bitwidths(a, {{1, n / 100.0}}).k.at(1);
            // round(k * n / 100) half away from zero, in integers.
            const int want = std::max(1, (2 * k * n + 100) / 200);
            mismatches += got != want;
            ++cases;
        }
    }
    BitWidthAssignment ex;
    ex.k = {{1, 16}, {2, 10}, {3, 8}};
    const auto next = update_bitwidths(ex, {{1, 0.9}, {2, 0.3}, {3, 0.5}});
    const bool example = next.k == std::map<int, int>{{1, 14}, {2, 3}, {3, 4}};
    d.add("grid %d/%d exact", cases - mismatches, cases);
    d.add("{16,10,8} x {0.9,0.3,0.5} -> {%d,%d,%d}", next.k.at(1), next.k.at(2), next.k.at(3));
    return {mismatches == 0 && example, d.str()};
}

Outcome criterion7()
{
    Detail d;
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<std::size_t> len(2, 64);
    std::uniform_real_distribution<double> centre(-10.0, 10.0), spread(1e-3, 20.0);
    bool ok = true;
    for (int k : {1, 2, 4, 8, 16}) {
        long mono = 0, idem = 0, levels = 0, err = 0;
        const int tensors = 10000;
        for (int t = 0; t < tensors; ++t) {
            const double c = centre(rng), s = spread(rng);
            Tensor x({len(rng)});
            std::uniform_real_distribution<double> u(c - s, c + s);
            for (auto& v : x.values()) v = u(rng);
            const QuantParams qp = QuantPlan::weight_params(x, k);
            const auto q = fake_quant(x, qp);
            const auto lv = quantize(x, qp);

            std::set<std::uint32_t> distinct(lv.levels.begin(), lv.levels.end());
            if (distinct.size() > (std::size_t{1} << k) || *distinct.rbegin() > qp.max_level()) ++levels;
            if (!(fake_quant(q, qp) == q)) ++idem;

            std::vector<std::size_t> order(x.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
            for (std::size_t i = 1; i < order.size(); ++i)
                if (q[order[i]] < q[order[i - 1]]) ++mono;

            const double bound = (qp.x_max - qp.x_min) / (2.0 * static_cast<double>(qp.max_level()));
            for (std::size_t i = 0; i < x.size(); ++i)
                if (std::abs(q[i] - x[i]) > bound) ++err;
        }
        d.add("k=%d: %ld/%ld/%ld/%ld violations (monotone/idempotent/levels/error)", k, mono, idem, levels, err);
        ok &= mono == 0 && idem == 0 && levels == 0 && err == 0;
    }
    return {ok, d.str()};
}

double dot(const Tensor& a, const Tensor& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Central differences of <logits, probe> against backward() for every
// parameter and input element. Returns (checked, failures, worst relative error).
struct GradStats {
    long checked = 0;
    long failed = 0;
    double worst = 0.0;
};

void gradcheck(const NetworkArch& arch, TrainState st, const Tensor& x, std::uint64_t seed, GradStats& stats)
{
    const auto probe = random_tensor({x.dim(0), static_cast<std::size_t>(arch.num_classes)}, seed);
    auto loss = [&](TrainState& s, const Tensor& in) { return dot(forward(arch, s, in, {}).logits, probe); };
    const auto fr = forward(arch, st, x, {});
    const auto g = backward(arch, st, fr.cache, probe);
    const double h = 1e-5;
    auto compare = [&](double analytic, double numeric) {
        const double e = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
        stats.worst = std::max(stats.worst, e);
        ++stats.checked;
        if (!(e < tol_gradcheck)) ++stats.failed;
    };
    auto probe_tensor = [&](Tensor& v, const Tensor& grad, const std::function<double()>& f) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + h;
            const double up = f();
            v[i] = keep - h;
            const double down = f();
            v[i] = keep;
            compare(grad[i], (up - down) / (2 * h));
        }
    };
    for (const auto& l : arch.layers) {
        auto& s = st.layers[static_cast<std::size_t>(l.id)];
        if (!s.weight) continue;
        probe_tensor(s.weight.value, g.weight[static_cast<std::size_t>(l.id)], [&] { return loss(st, x); });
        probe_tensor(s.bias.value, g.bias[static_cast<std::size_t>(l.id)], [&] { return loss(st, x); });
    }
    Tensor xi = x;
    probe_tensor(xi, g.input, [&] { return loss(st, xi); });
}

Outcome criterion8()
{
    Detail d;
    const auto t0 = std::chrono::steady_clock::now();
    GradStats stats;
    std::set<LayerKind> kinds;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto arch = adq::testing::tiny_residual_net();
        for (const auto& l : arch.layers) kinds.insert(l.kind);
        auto st = init_state(arch, seed);
        for (const auto& l : arch.layers) {
            auto& s = st.layers[static_cast<std::size_t>(l.id)];
            if (l.kind == LayerKind::batchnorm) s.weight.value = random_tensor(s.weight.value.shape(), 100 * seed + l.id, 0.5, 1.5);
            if (s.bias) s.bias.value = random_tensor(s.bias.value.shape(), 200 * seed + l.id);
        }
        gradcheck(arch, st, random_tensor({3, 2, 6, 6}, 300 + seed), 400 + seed, stats);

        const auto toy = make_toy_cnn({1, 8, 8}, 3, {2, 3, 3, 2});
        for (const auto& l : toy.layers) kinds.insert(l.kind);
        gradcheck(toy, init_state(toy, seed), random_tensor({2, 1, 8, 8}, 500 + seed), 600 + seed, stats);
    }
    const double secs = seconds_since(t0);
    d.add("%ld/%ld gradient entries within %.0e over %zu layer kinds, worst %.2e", stats.checked - stats.failed,
          stats.checked, tol_gradcheck, kinds.size(), stats.worst);
    d.add("%.1f s (limit %.0f s)", secs, max_gradcheck_seconds);
    return {stats.failed == 0 && kinds.size() == 8 && secs < max_gradcheck_seconds, d.str()};
}

Outcome criterion9()
{
    Detail d;
    bool ok = true;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto cfg = load_experiment_config(ADQ_TOY_CONFIG);
        cfg.seed = seed;
        cfg.schedule.seed = seed;
        const auto arch = cfg.build_arch();
        const auto data = cfg.build_data();

        const std::clock_t c0 = std::clock();
        const auto r = run_schedule(arch, data, cfg.schedule);
        const double cpu = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;

        const auto& its = r.log.iterations;
        bool bits_ok = true, ad_ok = true;
        for (std::size_t i = 1; i < its.size(); ++i) {
            for (const auto& [id, k] : its[i].bits) bits_ok &= k <= its[i - 1].bits.at(id);
            ad_ok &= its[i].network_ad >= its[i - 1].network_ad;
        }
        const int iters = static_cast<int>(its.size());

        ScheduleConfig base = cfg.schedule;
        base.max_iters = 1;
        base.stop_at_saturation = false;
        base.final_convergence_epochs = 0;
        base.epoch_budget = {static_cast<int>(r.log.epochs.size())};
        const auto b = run_schedule(arch, data, base);

        const double gap = 100.0 * (r.log.final_accuracy - b.log.final_accuracy);
        const bool acc_ok = std::abs(gap) <= tol_accuracy_pp;
        std::string bits;
        for (const auto& it : its) {
            bits += bits.empty() ? "" : "->";
            int lowest = 32;
            for (const auto& [id, k] : it.bits) lowest = std::min(lowest, k);
            bits += std::to_string(lowest);
        }
        std::string ads;
        for (const auto& it : its) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%s%.3f", ads.empty() ? "" : "->", it.network_ad);
            ads += buf;
        }
        d.add("seed %llu: %d iters, bits %s, AD %s, acc %.2f%% vs 16-bit %.2f%% (%+.2f pp), %d epochs, %.0f CPU s",
              static_cast<unsigned long long>(seed), iters, bits.c_str(), ads.c_str(), 100 * r.log.final_accuracy,
              100 * b.log.final_accuracy, gap, static_cast<int>(r.log.epochs.size()), cpu);
        const bool seed_ok = iters <= max_schedule_iterations && bits_ok && ad_ok && acc_ok && cpu <= max_schedule_cpu_seconds;
        if (!seed_ok)
            d.add("seed %llu FAIL:%s%s%s%s", static_cast<unsigned long long>(seed), bits_ok ? "" : " bits increased",
                  ad_ok ? "" : " AD decreased", acc_ok ? "" : " accuracy gap", iters <= max_schedule_iterations ? "" : " iterations");
        ok &= seed_ok;
    }
    return {ok, d.str()};
}

Outcome criterion10()
{
    Detail d;
    Tensor x({512}, -1.0);
    for (std::size_t i = 0; i < 100; ++i) x[i * 5] = 0.5 + static_cast<double>(i);
    ADHistory h;
    h.record(0, 1, x);
    const double ad = h.layer_ad(0, 1);
    char rounded[16];
    std::snprintf(rounded, sizeof rounded, "%.3f", ad);
    bool ok = count_positive(x) == 100 && ad == 100.0 / 512.0 && std::string(rounded) == "0.195";
    d.add("100 of 512 -> %s", rounded);

    std::mt19937_64 rng(10);
    int mismatches = 0;
    const int traces = 200;
    for (int t = 0; t < traces; ++t) {
        ADHistory trace;
        std::map<int, std::pair<std::uint64_t, std::uint64_t>> counts;
        const int layers = std::uniform_int_distribution<int>(1, 6)(rng);
        const int batches = std::uniform_int_distribution<int>(1, 4)(rng);
        for (int l = 0; l < layers; ++l) {
            for (int b = 0; b < batches; ++b) {
                Tensor a({std::uniform_int_distribution<std::size_t>(1, 300)(rng)});
                const double p = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                for (auto& v : a.values()) v = std::bernoulli_distribution(p)(rng) ? 1.0 + v : 0.0;
                trace.record(l * 3, 4, a);
                for (double v : a.values()) counts[l].first += v > 0.0;
                counts[l].second += a.size();
            }
        }
        std::uint64_t nz = 0, tot = 0;
        for (const auto& [l, c] : counts) {
            nz += c.first;
            tot += c.second;
        }
        const double oracle = static_cast<double>(nz) / static_cast<double>(tot);
        mismatches += trace.network_ad(4, NetworkADMode::pooled) != oracle;
    }
    d.add("pooled AD equals the count oracle on %d/%d traces", traces - mismatches, traces);
    ok &= mismatches == 0;
    return {ok, d.str()};
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
        {"PIM baseline energy", criterion1},
        {"PIM mixed precision", criterion2},
        {"PIM quantized and pruned", criterion3},
        {"analytical efficiency", criterion4},
        {"training complexity", criterion5},
        {"bit-update oracle", criterion6},
        {"quantizer suite", criterion7},
        {"gradient checks", criterion8},
        {"toy schedule", criterion9},
        {"AD metric", criterion10},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i + 1);
        if (!only.empty() && !only.count(n)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s criterion %2d  %-26s %s\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d criteria failed\n", failed);
    return failed ? 1 : 0;
}
