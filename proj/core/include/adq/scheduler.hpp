#pragma once

#include "adq/admon.hpp"
#include "adq/arch.hpp"
#include "adq/data.hpp"
#include "adq/error.hpp"
#include "adq/network.hpp"
#include "adq/quant.hpp"

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace adq {

/// Per-layer bit-widths of the main-path weighted layers. Skip-branch convs
/// are not listed; they follow their destination layer.
struct BitWidthAssignment {
    std::map<int, int> k;
    std::set<int> exempt;
    int iter = 1;

    bool operator==(const BitWidthAssignment&) const = default;
};

/// Every main-path weighted layer at `initial_bits`; exempt = first weighted
/// layer and final linear.
BitWidthAssignment initial_assignment(const NetworkArch& arch, int initial_bits);

/// k = max(1, round(k * AD)) for non-exempt layers, half away from zero.
/// Layers without an AD entry keep their width. Throws InputError for AD
/// outside [0, 1].
BitWidthAssignment update_bitwidths(const BitWidthAssignment& assignment, const std::map<int, double>& ad);

struct PruneState {
    std::map<int, int> channels;
    std::map<int, int> initial_channels;

    bool operator==(const PruneState&) const = default;
};

/// Output widths of every conv whose channels can be pruned without breaking
/// a residual join: convs whose output reaches a residual-add through
/// channel-preserving layers, and the final classifier, are excluded.
PruneState initial_prune_state(const NetworkArch& arch);

/// C = max(1, round(C_ref * AD)), never above the current width. C_ref is the
/// initial width, or the current width when `from_current` is set.
PruneState update_channels(const PruneState& state, const std::map<int, double>& ad, bool from_current = false);

struct SkipBits {
    /// Main-path bits plus every skip-branch weighted layer at its destination's width.
    std::map<int, int> layer_bits;
    /// Bits for the skip operand entering each residual-add.
    std::map<int, int> add_bits;
};

/// Throws ConfigError on a skip edge that does not point to an earlier layer.
SkipBits propagate_skip_bitwidths(const NetworkArch& arch, const BitWidthAssignment& assignment);

/// Kept channel indices (ascending) of each layer: the `channels[l]` highest
/// scores, ties to the lower index. Throws InternalError when more channels are
/// requested than scored.
std::map<int, std::vector<int>> select_pruned_channels(const PruneState& state,
                                                       const std::map<int, std::vector<double>>& scores);

/// Arch and parameters restricted to the kept channels: conv outputs, their
/// batchnorms, and the inputs of downstream conv/linear layers (flattened
/// features are grouped per channel). Adam moments are sliced alongside.
std::pair<NetworkArch, TrainState> apply_channel_selection(const NetworkArch& arch, const TrainState& state,
                                                           const std::map<int, std::vector<int>>& kept);

/// Fake-quantization sites for an assignment. Exempt layers and the
/// activations they produce stay at full precision. Existing range trackers in
/// `previous` are carried over.
QuantPlan make_quant_plan(const NetworkArch& arch, const BitWidthAssignment& assignment, double ema_decay,
                          const QuantPlan* previous = nullptr);

struct ScheduleConfig {
    int initial_bits = 16;
    int max_iters = 4;
    /// Epoch budget per iteration; the last entry applies to later iterations.
    std::vector<int> epoch_budget{20};
    double saturation_epsilon = 0.01;
    int saturation_window = 5;
    bool stop_at_saturation = true;
    bool pruning_enabled = false;
    bool prune_from_current = false;
    int final_convergence_epochs = 0;
    /// Layers erased after the given iteration; the next iteration keeps the
    /// same bit-widths (the manual "2a" step).
    std::vector<int> remove_layers;
    int remove_after_iteration = 0;

    int batch_size = 32;
    AdamConfig adam;
    double ema_decay = 0.99;
    NetworkADMode ad_mode = NetworkADMode::pooled;
    std::uint64_t seed = 0;

    int budget_for(int iter) const;
    /// Throws ConfigError naming the offending field.
    void validate() const;
};

struct EpochRecord {
    int iter = 0;
    int epoch = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double network_ad = 0.0;
};

struct IterationRecord {
    int iter = 0;
    std::map<int, int> bits;     // per weighted layer, including skip-branch convs
    std::map<int, int> channels; // conv output widths
    int epochs = 0;
    bool saturated = false;
    double network_ad = 0.0;
    std::map<int, double> layer_ad;
    double test_accuracy = 0.0;
    std::vector<int> removed; // layer ids erased before this iteration (ids of the previous arch)
};

struct ScheduleLog {
    std::vector<IterationRecord> iterations;
    std::vector<EpochRecord> epochs;
    double final_accuracy = 0.0;
    int final_epochs = 0;

    std::string to_json() const;
    /// `iter,bits,channels,test_accuracy,total_ad,epochs`, lists joined by ';'.
    std::string to_csv() const;
};

struct ScheduleResult {
    NetworkArch arch;
    TrainState state;
    BitWidthAssignment assignment;
    PruneState prune;
    QuantPlan plan;
    ADHistory history;
    ScheduleLog log;
};

/// Called after each iteration's training, before bit-widths are updated.
using IterationHook = std::function<void(const ScheduleResult&, const IterationRecord&)>;

/// Non-finite loss. Carries the state at the failing step for a diagnostic checkpoint.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::shared_ptr<const ScheduleResult> snapshot)
        : Error(what), snapshot_(std::move(snapshot))
    {
    }
    const ScheduleResult& snapshot() const { return *snapshot_; }

private:
    std::shared_ptr<const ScheduleResult> snapshot_;
};

/// Top-1 accuracy under `plan` in evaluation mode (ranges frozen).
double evaluate_accuracy(const NetworkArch& arch, TrainState& state, QuantPlan* plan, const Dataset& data,
                         int batch_size);

/// Train, wait for AD saturation, shrink bit-widths (and channels), repeat
/// until the fixed point or max_iters, then train final_convergence_epochs.
ScheduleResult run_schedule(const NetworkArch& arch, const DataSplit& data, const ScheduleConfig& config,
                            const IterationHook& hook = {});

} // namespace adq
