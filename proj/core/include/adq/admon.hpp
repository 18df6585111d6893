#pragma once

#include "adq/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace adq {

/// Nonzero/total activation counters of one layer over one epoch.
struct ADRecord {
    int layer_id = 0;
    int epoch = 0;
    std::uint64_t nonzero = 0;
    std::uint64_t total = 0;

    double ad() const noexcept { return total ? static_cast<double>(nonzero) / static_cast<double>(total) : 0.0; }
    bool operator==(const ADRecord&) const = default;
};

/// Number of strictly positive entries.
std::uint64_t count_positive(const Tensor& activations);

enum class NetworkADMode { pooled, layer_mean };

struct Saturation {
    std::map<int, bool> per_layer;
    bool all = false;
};

/// Per-layer activation-density time series.
class ADHistory {
public:
    /// Accumulate one batch of post-ReLU activations into (layer, epoch).
    /// Batches of the same epoch add up; an epoch older than the layer's
    /// latest record is rejected with InputError.
    void record(int layer_id, int epoch, const Tensor& activations);
    void record_counts(int layer_id, int epoch, std::uint64_t nonzero, std::uint64_t total);

    /// Throws LookupError when (layer, epoch) has no record.
    double layer_ad(int layer_id, int epoch) const;
    const ADRecord& at(int layer_id, int epoch) const;
    bool has(int layer_id, int epoch) const;

    /// Pooled (sum nonzero / sum total) or unweighted per-layer mean. Throws
    /// LookupError when any tracked layer lacks the epoch.
    double network_ad(int epoch, NetworkADMode mode = NetworkADMode::pooled) const;

    /// A layer is saturated when max - min of its AD over the last `window`
    /// recorded epochs (restricted to epochs >= first_epoch) is below
    /// `epsilon`. Too little history counts as not saturated.
    bool layer_saturated(int layer_id, double epsilon, int window, int first_epoch = 0) const;
    Saturation saturation(double epsilon, int window, int first_epoch = 0) const;

    std::vector<int> layers() const;
    const std::vector<ADRecord>& series(int layer_id) const;
    std::vector<ADRecord> all_records() const;
    bool empty() const noexcept { return series_.empty(); }

    /// CSV with header `layer_id,epoch,nonzero,total,ad`.
    std::string to_csv() const;
    static ADHistory from_csv(const std::string& text);

    bool operator==(const ADHistory&) const = default;

private:
    std::map<int, std::vector<ADRecord>> series_;
};

} // namespace adq
