#include "adq/energy.hpp"
#include "adq/error.hpp"
#include "doctest.h"

#include <cmath>
#include <random>

using namespace adq;

TEST_CASE("memory and MAC counts by hand")
{
    const LayerShape unit{};
    CHECK(mem_accesses(unit) == 2);
    CHECK(mac_count(unit) == 1);
    const LayerShape first{LayerKind::conv2d, 32, 32, 3, 3, 64};
    CHECK(mem_accesses(first) == 4800);
    CHECK(mac_count(first) == 1769472);
    LayerShape wide = first;
    wide.O = 128;
    CHECK(mem_accesses(wide) - mem_accesses(first) == 1728);
}

TEST_CASE("analytical layer energy")
{
    const LayerShape unit{};
    CHECK(analytical_layer_energy(unit, 32) == doctest::Approx(163.2).epsilon(1e-15));
    const AnalyticalEnergyTable t;
    CHECK(t.mem(16) == 40.0);
    CHECK(t.mac(32) == doctest::Approx(3.2).epsilon(1e-15));
    CHECK(t.mem(32) == 80.0);
    CHECK_THROWS_AS(analytical_layer_energy(unit, 0), InputError);
    CHECK_THROWS_AS(analytical_layer_energy(unit, 33), InputError);

    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> side(1, 64), ch(1, 512), ker(1, 5), bits(1, 32);
    for (int i = 0; i < 500; ++i) {
        LayerShape s{LayerKind::conv2d, side(rng), side(rng), ker(rng), ch(rng), ch(rng)};
        const int k = bits(rng);
        const double n_mem = double(s.N) * double(s.N) * double(s.I) + double(s.p) * double(s.p) * double(s.I) * double(s.O);
        const double n_mac = double(s.M) * double(s.M) * double(s.I) * double(s.p) * double(s.p) * double(s.O);
        const double want = n_mem * 2.5 * k + n_mac * (3.1 * k / 32 + 0.1);
        CHECK(std::abs(analytical_layer_energy(s, k) - want) <= 1e-9 * want);
    }
}

TEST_CASE("PIM round-up against a ceiling oracle")
{
    for (int k = 1; k <= 16; ++k) {
        int want = 2;
        while (want < k) want *= 2;
        CHECK(pim_round_bits(k) == want);
        CHECK(pim_round_bits(pim_round_bits(k)) == pim_round_bits(k));
    }
    CHECK(pim_round_bits(3) == 4);
    CHECK(pim_round_bits(5) == 8);
    CHECK_THROWS_AS(pim_round_bits(17), InputError);
    CHECK_THROWS_AS(pim_round_bits(0), InputError);
    PimEnergyTable bad;
    bad.fj_per_mac[8] = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("network energy: VGG19 MAC total and additivity")
{
    const auto vgg = make_vgg19({3, 32, 32}, 10);
    const auto shapes = layer_shapes(vgg);
    std::int64_t conv_macs = 0, all_macs = 0;
    for (const auto& [id, s] : shapes) {
        all_macs += mac_count(s);
        if (s.kind == LayerKind::conv2d) conv_macs += mac_count(s);
    }
    CHECK(conv_macs == 398131200);
    CHECK(all_macs == 398131200 + 512 * 10);

    NetworkConfig c;
    for (int id : weighted_layers(vgg)) c.bits[id] = 16;
    const auto pim = pim_network_energy(vgg, c);
    CHECK(pim.total_pj == doctest::Approx(static_cast<double>(pim.n_mac_total) * 276.676e-3).epsilon(1e-12));

    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> bits(1, 16);
    for (auto& [id, k] : c.bits) k = bits(rng);
    for (auto model : {EnergyModel::analytical, EnergyModel::pim}) {
        const auto r = network_energy(model, vgg, c, 16);
        double sum = 0.0;
        for (const auto& e : r.layers) sum += e.energy_pj;
        CHECK(sum == r.total_pj);
        CHECK(r.ratio == doctest::Approx(r.baseline_pj / r.total_pj));
    }
}

TEST_CASE("lowering a bit-width never raises total energy")
{
    const auto net = make_resnet18({3, 32, 32}, 100);
    NetworkConfig c;
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> bits(2, 16);
    for (int id : weighted_layers(net)) c.bits[id] = bits(rng);
    for (auto model : {EnergyModel::analytical, EnergyModel::pim}) {
        const double before = network_energy(model, net, c, 16).total_pj;
        for (auto& [id, k] : c.bits) {
            NetworkConfig lower = c;
            lower.bits[id] = k - 1;
            CHECK(network_energy(model, net, lower, 16).total_pj <= before);
        }
    }
}

TEST_CASE("pruned channels, removed layers and missing bits")
{
    const auto vgg = make_vgg19({3, 32, 32}, 10);
    const auto convs = weighted_layers(vgg);
    NetworkConfig c;
    for (int id : convs) c.bits[id] = 8;
    c.channels[convs[0]] = 32;
    const auto shapes = layer_shapes(vgg, c.channels);
    CHECK(shapes.at(convs[0]).O == 32);
    CHECK(shapes.at(convs[1]).I == 32);
    c.removed.insert(convs[5]);
    const auto r = analytical_network_energy(vgg, c);
    for (const auto& e : r.layers)
        if (e.layer_id == convs[5]) CHECK(e.energy_pj == 0.0);
    c.bits.erase(convs[3]);
    CHECK_THROWS_WITH_AS(analytical_network_energy(vgg, c), doctest::Contains("layer"), ConfigError);
    c.bits[convs[3]] = 20;
    CHECK_THROWS_AS(pim_network_energy(vgg, c), ConfigError);
}

TEST_CASE("training complexity and efficiency ratio")
{
    CHECK(training_complexity({{1.0, 50}}, 50) == 1.0);
    CHECK(training_complexity({{1.0, 10}, {2.0, 10}}, 20) == 0.75);
    CHECK_THROWS_AS(training_complexity({}, 10), InputError);
    CHECK(efficiency_ratio(4.0, 4.0) == 1.0);
    CHECK(efficiency_ratio(4.0, 2.0) == 2.0);
    CHECK_THROWS_AS(efficiency_ratio(4.0, 0.0), InternalError);
}

TEST_CASE("report serialization")
{
    const auto net = make_toy_cnn({1, 8, 8}, 4);
    NetworkConfig c;
    for (int id : weighted_layers(net)) c.bits[id] = 4;
    const auto r = network_energy(EnergyModel::pim, net, c, 16);
    const auto csv = r.to_csv();
    CHECK(csv.rfind("layer_id,kind,k,pim_k,channels,N_Mem,N_MAC,E_pJ\n", 0) == 0);
    CHECK(csv.find("\ntotal,") != std::string::npos);
    CHECK(r.to_json().find("\"ratio\"") != std::string::npos);
    CHECK(r.to_json() == network_energy(EnergyModel::pim, net, c, 16).to_json());
}
