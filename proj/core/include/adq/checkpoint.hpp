#pragma once

#include "adq/admon.hpp"
#include "adq/arch.hpp"
#include "adq/network.hpp"
#include "adq/quant.hpp"
#include "adq/scheduler.hpp"

#include <string>

namespace adq {

/// Everything needed to resume or inspect a run.
struct Checkpoint {
    NetworkArch arch;
    TrainState state;
    BitWidthAssignment assignment;
    PruneState prune;
    QuantPlan plan;
    ADHistory history;
};

/// File layout: the 9-byte magic "ADQCKPT1\n", the header length as a
/// little-endian uint64, a JSON header, then every tensor as raw
/// little-endian float64 in the order listed by the header.
std::string checkpoint_to_bytes(const Checkpoint& ckpt);

/// Throws InputError on a bad magic, a truncated or oversized payload, an
/// architecture hash mismatch or tensors that disagree with the architecture.
Checkpoint checkpoint_from_bytes(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const ScheduleResult& result);

} // namespace adq
