#include "adq/error.hpp"
#include "adq/experiment.hpp"
#include "adq/presets.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace {

// Exit codes.
constexpr int ok = 0;
constexpr int usage_error = 1;
constexpr int tolerance_failure = 2;
constexpr int runtime_failure = 3;

int run_train(const std::string& config_path)
{
    const auto config = adq::load_experiment_config(config_path);
    const auto s = adq::cmd_train(config);
    std::cout << "iterations " << s.log.iterations.size() << ", final accuracy " << s.log.final_accuracy << ", "
              << adq::to_string(s.energy.model) << " energy ratio " << s.energy.ratio << "\n"
              << "artifacts in " << s.output_dir << "\n";
    return ok;
}

adq::PresetCatalog catalog_for(const std::string& file, const std::string& dir)
{
    if (!file.empty()) return adq::PresetCatalog::load_file(file);
    if (!dir.empty()) return adq::PresetCatalog::load_dir(dir);
    return adq::PresetCatalog::builtin();
}

int run_energy(const std::string& name, const std::string& model, const std::string& file, const std::string& dir,
               const std::string& out)
{
    const auto catalog = catalog_for(file, dir);
    const auto& p = catalog.get(name);
    const auto m = adq::parse_energy_model(model);
    const auto r = adq::network_energy(m, p.arch, p.config, p.baseline_bits);
    std::cout << r.to_csv();
    if (!out.empty()) {
        fs::create_directories(out);
        const std::string stem = (fs::path(out) / (p.name + "_" + model)).string();
        std::ofstream(stem + ".json") << r.to_json();
        std::ofstream(stem + ".csv") << r.to_csv();
    }
    std::cout << "total " << r.total_uj() << " uJ, baseline " << r.baseline_uj() << " uJ, ratio " << r.ratio << "x\n";
    return ok;
}

int run_reproduce(int table, const std::string& file, const std::string& dir)
{
    const auto cells = adq::reproduce_table(catalog_for(file, dir), table);
    std::cout << adq::format_cells(cells);
    int failed = 0;
    for (const auto& c : cells) failed += c.pass() ? 0 : 1;
    if (failed) {
        std::cout << failed << " cell(s) outside tolerance\n";
        return tolerance_failure;
    }
    return ok;
}

int run_plotdata(const std::string& run_dir)
{
    for (const auto& f : adq::cmd_plotdata(run_dir)) std::cout << f << "\n";
    return ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Activation-density driven mixed-precision training and energy estimation"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train = app.add_subcommand("train", "run the quantization schedule from a JSON config");
    train->add_option("-c,--config", config_path, "experiment config")->required();

    std::string preset, model = "analytical", preset_file, preset_dir, out;
    auto* energy = app.add_subcommand("energy", "energy report of a preset");
    energy->add_option("--preset", preset, "preset name")->required();
    energy->add_option("--model", model, "analytical or pim")->check(CLI::IsMember({"analytical", "pim"}));
    energy->add_option("--preset-file", preset_file, "read presets from this file");
    energy->add_option("--preset-dir", preset_dir, "read presets from every JSON file here");
    energy->add_option("--out", out, "write <preset>_<model>.json/.csv here");

    int table = 0;
    auto* reproduce = app.add_subcommand("reproduce", "recompute a published table from presets");
    reproduce->add_option("--table", table, "1, 2, 4 or 5")->required()->check(CLI::IsMember({1, 2, 4, 5}));
    reproduce->add_option("--preset-file", preset_file, "read presets from this file");
    reproduce->add_option("--preset-dir", preset_dir, "read presets from every JSON file here");

    std::string run_dir;
    auto* plotdata = app.add_subcommand("plotdata", "per-layer AD and accuracy CSVs of a training run");
    plotdata->add_option("--run", run_dir, "run output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return usage_error;
    }

    try {
        if (*train) return run_train(config_path);
        if (*energy) return run_energy(preset, model, preset_file, preset_dir, out);
        if (*reproduce) return run_reproduce(table, preset_file, preset_dir);
        if (*plotdata) return run_plotdata(run_dir);
    } catch (const adq::DivergenceError& e) {
        std::cerr << "error: " << e.what() << " (diagnostic checkpoint written)\n";
        return runtime_failure;
    } catch (const adq::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage_error;
    } catch (const adq::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage_error;
    } catch (const adq::LookupError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return runtime_failure;
    }
    return usage_error;
}
