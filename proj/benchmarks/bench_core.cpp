#include "adq/energy.hpp"
#include "adq/network.hpp"
#include "adq/presets.hpp"
#include "adq/quant.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace adq;

namespace {

Tensor random_batch(Shape shape, std::uint64_t seed)
{
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    for (auto& v : t.values()) v = n(rng);
    return t;
}

void BM_ToyForward(benchmark::State& s)
{
    const auto arch = make_toy_cnn({1, 8, 8}, 10);
    auto st = init_state(arch, 1);
    const auto x = random_batch({32, 1, 8, 8}, 2);
    ForwardOptions opt;
    opt.training = false;
    for (auto _ : s) benchmark::DoNotOptimize(forward(arch, st, x, opt).logits);
}
BENCHMARK(BM_ToyForward);

void BM_ToyTrainStep(benchmark::State& s)
{
    const auto arch = make_toy_cnn({1, 8, 8}, 10);
    auto st = init_state(arch, 1);
    const auto x = random_batch({32, 1, 8, 8}, 2);
    std::vector<int> labels(32);
    for (int i = 0; i < 32; ++i) labels[i] = i % 10;
    for (auto _ : s) {
        auto fr = forward(arch, st, x, {});
        const auto loss = softmax_xent(fr.logits, labels);
        optimizer_step(st, backward(arch, st, fr.cache, loss.grad), {});
    }
}
BENCHMARK(BM_ToyTrainStep);

void BM_ResNet18Forward(benchmark::State& s)
{
    const auto arch = make_resnet18({3, 32, 32}, 100);
    auto st = init_state(arch, 1);
    const auto x = random_batch({1, 3, 32, 32}, 3);
    ForwardOptions opt;
    opt.training = false;
    for (auto _ : s) benchmark::DoNotOptimize(forward(arch, st, x, opt).logits);
}
BENCHMARK(BM_ResNet18Forward)->Unit(benchmark::kMillisecond);

void BM_FakeQuant(benchmark::State& s)
{
    const auto x = random_batch({1 << 16}, 4);
    const auto qp = QuantPlan::weight_params(x, static_cast<int>(s.range(0)));
    for (auto _ : s) benchmark::DoNotOptimize(fake_quant(x, qp));
    s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(BM_FakeQuant)->Arg(2)->Arg(8)->Arg(16);

void BM_PresetEnergy(benchmark::State& s)
{
    const auto catalog = PresetCatalog::builtin();
    const auto& p = catalog.get("resnet18-cifar100-pruned-iter3");
    const auto model = s.range(0) ? EnergyModel::pim : EnergyModel::analytical;
    for (auto _ : s) benchmark::DoNotOptimize(network_energy(model, p.arch, p.config, p.baseline_bits));
}
BENCHMARK(BM_PresetEnergy)->Arg(0)->Arg(1);

} // namespace

BENCHMARK_MAIN();
