#pragma once

#include "adq/arch.hpp"
#include "adq/data.hpp"
#include "adq/energy.hpp"
#include "adq/scheduler.hpp"

#include <array>
#include <optional>
#include <string>

namespace adq {

struct DatasetConfig {
    enum class Kind { synthetic, directory };
    Kind kind = Kind::synthetic;
    SyntheticSpec synthetic;
    bool synthetic_seed_set = false; // otherwise the experiment seed is used
    std::string path;                // directory datasets: holds train/ and test/
};

/// One training run, read from a single JSON file.
struct ExperimentConfig {
    std::string name = "experiment";
    /// Either an architecture file or a builtin with its shape.
    std::string arch_path;
    std::string arch_builtin;
    std::array<int, 3> input_shape{1, 8, 8};
    int num_classes = 10;
    std::optional<std::array<int, 4>> toy_widths;

    DatasetConfig dataset;
    ScheduleConfig schedule;
    EnergyModel energy_model = EnergyModel::analytical;
    int baseline_bits = 16;
    std::uint64_t seed = 0;
    std::string output_dir = "runs/experiment";

    NetworkArch build_arch() const;
    DataSplit build_data() const;
    /// Canonical JSON form; parsing it again yields the same config.
    std::string to_json() const;
};

/// Unknown keys and wrong types are errors. Syntax errors report line and
/// column; field errors name the field path. Relative paths resolve against
/// `base_dir`; referenced files must exist.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);

/// `output_dir` when absolute; otherwise relative to $ADQ_OUTPUT_DIR if set,
/// else to the working directory.
std::string resolve_output_dir(const std::string& output_dir);

/// Energy of the current (possibly pruned or shortened) network against the
/// original network at uniform `baseline_bits`.
EnergyReport run_energy(EnergyModel model, const NetworkArch& original, const NetworkArch& current,
                        const std::map<int, int>& bits, int baseline_bits);

struct TrainSummary {
    std::string output_dir;
    ScheduleLog log;
    EnergyReport energy;
};

/// Runs the schedule and writes config.json, arch.json, per-iteration
/// checkpoints and energy reports, schedule_log.{json,csv}, ad_history.csv,
/// epochs.csv, final.ckpt and summary.json into the output directory. On
/// divergence a diverged.ckpt is written before the DivergenceError propagates.
TrainSummary cmd_train(const ExperimentConfig& config);

/// Reads ad_history.csv and epochs.csv from `run_dir` and writes
/// plot/ad_layer_<id>.csv (epoch,ad) and plot/accuracy.csv. Returns the
/// written file paths. Throws InputError when artifacts are missing.
std::vector<std::string> cmd_plotdata(const std::string& run_dir);

} // namespace adq
