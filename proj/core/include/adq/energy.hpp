#pragma once

#include "adq/arch.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace adq {

/// Geometry of one conv/linear layer. Linear layers are a 1x1 conv on a 1x1 map.
struct LayerShape {
    LayerKind kind = LayerKind::conv2d;
    std::int64_t N = 1; // input feature-map side
    std::int64_t M = 1; // output feature-map side
    std::int64_t p = 1; // kernel side
    std::int64_t I = 1;
    std::int64_t O = 1;

    bool operator==(const LayerShape&) const = default;
};

/// N^2 I + p^2 I O
std::int64_t mem_accesses(const LayerShape& s);
/// M^2 I p^2 O
std::int64_t mac_count(const LayerShape& s);

/// Per-bit energies of the analytical model, in pJ.
struct AnalyticalEnergyTable {
    double mem_per_bit = 2.5;
    double mult32 = 3.1;
    double add32 = 0.1;

    double mem(int k) const { return mem_per_bit * k; }
    double mac(int k) const { return mult32 * k / 32.0 + add32; }
};

/// N_Mem * E_Mem(k) + N_MAC * E_MAC(k) in pJ. Throws InputError unless 1 <= k <= 32.
double analytical_layer_energy(const LayerShape& s, int k, const AnalyticalEnergyTable& table = {});

/// Per-MAC energy in fJ at each precision the array supports.
struct PimEnergyTable {
    std::map<int, double> fj_per_mac{{2, 2.942}, {4, 16.968}, {8, 66.714}, {16, 276.676}};

    /// Throws ConfigError unless non-empty, positive and strictly increasing.
    void validate() const;
};

/// Smallest supported precision >= k. Throws InputError for k < 1 or above the
/// largest supported precision.
int pim_round_bits(int k, const PimEnergyTable& table = {});

/// Bit-widths and pruned widths of one network instance, keyed by layer id.
/// Removed layers cost nothing; weighted layers without a bit entry are an error.
struct NetworkConfig {
    std::map<int, int> bits;
    std::map<int, int> channels;
    std::set<int> removed;
};

/// Shapes of all weighted layers after substituting pruned channel counts.
/// Throws ConfigError naming the layer when a shape cannot be resolved.
std::map<int, LayerShape> layer_shapes(const NetworkArch& arch, const std::map<int, int>& channels = {});

enum class EnergyModel { analytical, pim };

std::string to_string(EnergyModel m);
EnergyModel parse_energy_model(const std::string& name);

struct LayerEnergy {
    int layer_id = 0;
    LayerKind kind = LayerKind::conv2d;
    int k = 0;
    int pim_k = 0; // 0 under the analytical model
    int channels = 0;
    std::int64_t n_mem = 0;
    std::int64_t n_mac = 0;
    double energy_pj = 0.0;
    bool removed = false;
    bool binary = false; // 1-bit layer: costed by the same formulas but flagged
};

struct EnergyReport {
    EnergyModel model = EnergyModel::analytical;
    std::vector<LayerEnergy> layers;
    std::int64_t n_mem_total = 0;
    std::int64_t n_mac_total = 0;
    double total_pj = 0.0;
    double baseline_pj = 0.0;
    double ratio = 0.0;

    double total_uj() const { return total_pj * 1e-6; }
    double baseline_uj() const { return baseline_pj * 1e-6; }

    std::string to_json() const;
    std::string to_csv() const;
};

/// MAC + memory energy of every weighted layer.
EnergyReport analytical_network_energy(const NetworkArch& arch, const NetworkConfig& config,
                                       const AnalyticalEnergyTable& table = {});

/// MAC energy only, with every bit-width rounded up to a supported precision.
EnergyReport pim_network_energy(const NetworkArch& arch, const NetworkConfig& config, const PimEnergyTable& table = {});

/// Energy of `config` plus the baseline (every weighted layer at `baseline_bits`,
/// unpruned) and their ratio.
EnergyReport network_energy(EnergyModel model, const NetworkArch& arch, const NetworkConfig& config, int baseline_bits);

/// baseline / total. Throws InternalError on a zero total.
double efficiency_ratio(double baseline_total, double total);

/// Sum of epochs_i / reduction_i, divided by baseline_epoch_total. Throws
/// InputError on an empty list, a reduction below 1 or a non-positive baseline.
double training_complexity(const std::vector<std::pair<double, int>>& iterations, double baseline_epoch_total);

} // namespace adq
