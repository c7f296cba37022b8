#pragma once

#include "toolflow/supernet.hpp"
#include "toolflow/training.hpp"

#include <string>

namespace toolflow {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Serializable training snapshot bound to a specific graph identity.
struct Checkpoint {
    std::uint64_t graph_fingerprint = 0;
    TrainState train;

    // "<graph fingerprint hex>-<global step>": names the parameters a trace
    // was produced with.
    std::string id() const;
};

// Fixed-layout binary format (magic, version, fingerprint, named tensors,
// optimizer moments, counters, baseline, RNG stream). Saving, loading, and
// saving again yields byte-identical files.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Throws VersionMismatch on a foreign format or version, and
// GraphFingerprintMismatch when the snapshot belongs to a different graph.
Checkpoint load_checkpoint(const std::string& path, const SupernetGraph& graph);

}  // namespace toolflow
