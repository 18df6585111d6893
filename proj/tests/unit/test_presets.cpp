#include "adq/error.hpp"
#include "adq/presets.hpp"
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>

using namespace adq;

namespace {

const PresetCatalog& catalog()
{
    static const PresetCatalog c = PresetCatalog::builtin();
    return c;
}

std::vector<std::optional<int>> opt(const std::vector<int>& v)
{
    return {v.begin(), v.end()};
}

} // namespace

TEST_CASE("builtin catalog")
{
    const auto names = catalog().names();
    CHECK(names.size() == 17);
    for (const auto& p : catalog().presets()) {
        INFO(p.name);
        CHECK(p.config.bits.size() + p.config.removed.size() == weighted_layers(p.arch).size());
        for (const auto& h : p.history) CHECK(catalog().contains(h));
        CHECK(p.table_number() >= 1);
    }
    CHECK_THROWS_WITH_AS(catalog().get("resnet50"), doctest::Contains("vgg19-cifar10-iter2a"), LookupError);
}

TEST_CASE("uniform presets cost exactly the baseline")
{
    for (const auto& p : catalog().presets()) {
        if (!p.history.empty()) continue;
        INFO(p.name);
        CHECK(preset_efficiency(p) == 1.0);
    }
}

TEST_CASE("per-layer bit list with a removed layer")
{
    const auto& p = catalog().get("vgg19-cifar10-iter2a");
    const auto main = main_weighted_layers(p.arch);
    CHECK(p.config.removed == std::set<int>{main[15]});
    CHECK(p.config.bits.at(main[0]) == 16);
    CHECK(p.config.bits.at(main[1]) == 4);
    CHECK(p.config.bits.at(main[16]) == 16);
    CHECK_THROWS_AS(resolve_bits(p.arch, "per-layer", {std::nullopt, 4}), ConfigError);
}

TEST_CASE("per-block-with-skip layout on ResNet18")
{
    const auto arch = make_resnet18({3, 32, 32}, 100);
    const auto main = main_weighted_layers(arch);
    REQUIRE(main.size() == 18);
    std::vector<int> bits{16};
    for (int b = 0; b < 8; ++b) {
        bits.push_back(10 + b);
        bits.push_back(2 + b);
        bits.push_back(2 + b);
    }
    bits.push_back(16);
    const auto out = resolve_bits(arch, "per-block-with-skip", opt(bits));
    CHECK(out.size() == weighted_layers(arch).size());
    for (int b = 0; b < 8; ++b) {
        CHECK(out.at(main[1 + 2 * b]) == 10 + b);
        CHECK(out.at(main[2 + 2 * b]) == 2 + b);
    }
    for (const auto& l : arch.layers) {
        if (l.kind != LayerKind::residual_add) continue;
        const int dest = skip_destination(arch, l.id);
        for (int s : skip_branch_layers(arch, l.id))
            if (arch.layer(s).is_weighted()) CHECK(out.at(s) == out.at(dest));
    }

    auto bad = bits;
    bad[3] = 9;
    CHECK_THROWS_WITH_AS(resolve_bits(arch, "per-block-with-skip", opt(bad)), doctest::Contains("block 1"), ConfigError);
    bad = bits;
    bad.pop_back();
    CHECK_THROWS_AS(resolve_bits(arch, "per-block-with-skip", opt(bad)), ConfigError);
    CHECK_THROWS_AS(resolve_bits(arch, "per-stage", opt(bits)), ConfigError);
}

TEST_CASE("channel lists")
{
    const auto& p = catalog().get("resnet18-cifar100-pruned-iter3");
    const auto main = main_weighted_layers(p.arch);
    CHECK(p.config.channels.at(main[0]) == 21);
    CHECK(p.config.channels.at(main[3]) == 1);
    for (int s : skip_weighted_layers(p.arch)) CHECK(p.config.channels.count(s));
    for (const auto& l : p.arch.layers) {
        if (l.kind != LayerKind::residual_add) continue;
        for (int s : skip_branch_layers(p.arch, l.id))
            if (p.arch.layer(s).is_weighted()) CHECK(p.config.channels.at(s) == p.config.channels.at(skip_destination(p.arch, l.id)));
    }
    CHECK_THROWS_AS(resolve_channels(p.arch, {1, 2, 3}), ConfigError);
    std::vector<int> wide(17, 64);
    wide[0] = 65;
    CHECK_THROWS_WITH_AS(resolve_channels(p.arch, wide), doctest::Contains("outside"), ConfigError);
}

TEST_CASE("the 21-entry list is kept verbatim but not applied")
{
    const auto& p = catalog().get("vgg19-cifar10-pruned-iter2");
    CHECK(p.published_bits.size() == 21);
    CHECK(p.config.bits == catalog().get("vgg19-cifar10-iter2").config.bits);
}

TEST_CASE("complexity follows the history")
{
    const auto& p = catalog().get("vgg19-cifar10-iter2");
    const double r = preset_efficiency(p);
    CHECK(preset_complexity(catalog(), p, 210.0) == doctest::Approx((100.0 + 70.0 / r) / 210.0).epsilon(1e-12));
    const auto& base = catalog().get("vgg19-cifar10-baseline");
    CHECK(preset_complexity(catalog(), base, 100.0) == 1.0);
}

TEST_CASE("table reproduction")
{
    CHECK_THROWS_AS(reproduce_table(catalog(), 3), InputError);

    auto published = [](const std::vector<ReproCell>& cells, const std::string& q) {
        std::vector<double> v;
        for (const auto& c : cells)
            if (c.quantity == q && c.tolerance) v.push_back(c.published);
        std::sort(v.begin(), v.end());
        return v;
    };
    const auto t4 = reproduce_table(catalog(), 4);
    CHECK(published(t4, "reduction") == std::vector<double>{4.81, 5.12});
    const auto t5 = reproduce_table(catalog(), 5);
    CHECK(published(t5, "reduction") == std::vector<double>{43.941, 197.55});
    CHECK(format_cells(t5) == format_cells(reproduce_table(catalog(), 5)));

    const auto t1 = reproduce_table(catalog(), 1);
    CHECK(published(t1, "efficiency").size() == 10);
}

TEST_CASE("catalog files")
{
    const auto dir = std::filesystem::temp_directory_path() / "adq_preset_test";
    std::filesystem::create_directories(dir);
    const auto file = dir / "mini.json";
    std::ofstream(file) << R"({"family": "toy", "arch": {"builtin": "toy4conv", "input_shape": [1, 8, 8], "num_classes": 10},
        "presets": [{"name": "toy-a", "table": "1a", "bits_layout": "per-layer", "bits": [16, 8, 8, 8, 16]}]})";
    const auto c = PresetCatalog::load_file(file.string());
    CHECK(c.names() == std::vector<std::string>{"toy-a"});
    CHECK(preset_efficiency(c.get("toy-a")) > 1.0);
    PresetCatalog twice = c;
    CHECK_THROWS_AS(twice.merge(c), ConfigError);

    std::ofstream(file) << R"({"family": "toy", "arch": {"builtin": "toy4conv", "input_shape": [1, 8, 8], "num_classes": 10},
        "presets": [{"name": "toy-a", "bits_layout": "per-layer", "bits": [16, 8, 16]}]})";
    CHECK_THROWS_WITH_AS(PresetCatalog::load_file(file.string()), doctest::Contains("mini.json"), ConfigError);
    std::ofstream(file) << "{";
    CHECK_THROWS_AS(PresetCatalog::load_file(file.string()), ConfigError);
    CHECK_THROWS_AS(PresetCatalog::load_dir((dir / "missing").string()), InputError);
    std::filesystem::remove_all(dir);
}
