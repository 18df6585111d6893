#pragma once

#include "adq/arch.hpp"
#include "adq/energy.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace adq {

struct PublishedValues {
    std::optional<double> accuracy;
    std::optional<double> total_ad;
    std::optional<double> efficiency;
    std::optional<double> complexity;
    std::optional<double> pim_energy_uj;
    std::optional<double> pim_baseline_uj;
    std::optional<double> pim_reduction;
};

/// One published configuration: an architecture plus its layer-wise bits and
/// channel counts, resolved onto layer ids.
struct Preset {
    std::string name;
    std::string family;
    std::string table;     // "1a", "2b", ...
    std::string iteration; // "1", "2", "2a", ...
    std::string head_note;
    NetworkArch arch;
    NetworkConfig config;
    int baseline_bits = 16;
    int epochs = 0;
    std::vector<std::string> history; // earlier iterations of the same run, oldest first
    std::optional<double> baseline_epoch_total;
    /// Raw bit list as published when it does not map onto the layers.
    std::vector<int> published_bits;
    PublishedValues published;

    /// Table number without the panel letter.
    int table_number() const;
};

/// Maps a bit list onto the main-path weighted layers of `arch`.
///  - "per-layer": one entry per main-path weighted layer; null marks a removed layer.
///  - "per-block-with-skip": first layer, then (conv1, conv2, skip) per residual
///    block, then the classifier. The skip entry must equal conv2's width.
/// Skip-branch convs take their destination's width. Throws ConfigError.
std::map<int, int> resolve_bits(const NetworkArch& arch, const std::string& layout,
                                const std::vector<std::optional<int>>& bits, std::set<int>* removed = nullptr);

/// One entry per main-path conv; skip-branch convs take their destination's count.
std::map<int, int> resolve_channels(const NetworkArch& arch, const std::vector<int>& channels);

class PresetCatalog {
public:
    /// Every *.json file of `dir`, in file-name order.
    static PresetCatalog load_dir(const std::string& dir);
    static PresetCatalog load_file(const std::string& path);
    /// The directory compiled into the library.
    static PresetCatalog builtin();

    void merge(const PresetCatalog& other);
    /// Throws LookupError listing the available names.
    const Preset& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::vector<std::string> names() const;
    const std::vector<Preset>& presets() const noexcept { return presets_; }

private:
    std::vector<Preset> presets_;
};

struct ReproCell {
    std::string table;
    std::string preset;
    std::string quantity;
    double computed = 0.0;
    double published = 0.0;
    /// Relative tolerance; unset for informational cells.
    std::optional<double> tolerance;
    std::string note;

    double deviation() const { return published != 0.0 ? (computed - published) / published : 0.0; }
    bool pass() const { return !tolerance || std::abs(deviation()) <= *tolerance; }
};

/// Analytical efficiency ratio of a preset against its uniform baseline.
double preset_efficiency(const Preset& p);

/// Training complexity of a preset's run: epochs over analytical reduction for
/// every iteration in its history plus itself, over `baseline_epoch_total`.
double preset_complexity(const PresetCatalog& catalog, const Preset& p, double baseline_epoch_total);

/// Every energy and complexity cell of table 1, 2, 4 or 5. Throws InputError
/// for other table ids.
std::vector<ReproCell> reproduce_table(const PresetCatalog& catalog, int table);

std::string format_cells(const std::vector<ReproCell>& cells);

} // namespace adq
