#pragma once

#include "toolflow/common.hpp"
#include "toolflow/errors.hpp"
#include "toolflow/supernet.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace toolflow {

// Reserved container id of the rolling digest slot.
inline const std::string kMemoryDigestId = "digest";

struct MemoryEntry {
    std::string container_id;
    std::string summary;
    std::optional<ImageBlock> image_ref;  // excluded from token budgets
    long step = 0;
};

// Maps a tool output to a short textual summary.
using Summarizer = std::function<std::string(const ToolOutput&)>;

// "<Source>: <field values> (<metrics, 2dp>) [image]", truncated to the given
// token budget; empty payloads summarize to the empty string.
Summarizer template_summarizer(std::size_t entry_token_budget);

// Applies a summarizer and enforces the per-entry token budget (oversized
// output is truncated, never rejected).
std::string summarize(const ToolOutput& output, const Summarizer& summarizer,
                      std::size_t entry_token_budget);

struct MemoryConfig {
    std::size_t capacity = 16;           // max entries held
    std::size_t token_budget = 256;      // rendered-context budget
    std::size_t entry_token_budget = 32; // per-entry summary budget
};

// Bounded first-in-first-summarized evidence buffer. When an append would
// exceed capacity, the two oldest entries merge into a digest entry that
// stays at slot 0 and keeps absorbing its neighbour on later overflows.
class Memory {
public:
    Memory() = default;
    explicit Memory(MemoryConfig config) : config_(config) {}

    // Steps must be strictly increasing; otherwise throws NonMonotonicStep.
    void append(MemoryEntry entry);

    const std::vector<MemoryEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    long last_step() const { return entries_.empty() ? 0 : entries_.back().step; }
    const MemoryConfig& config() const { return config_; }

    // Summaries joined oldest-to-newest, truncated from the front so the
    // newest evidence survives; never longer than the token budget.
    std::vector<std::string> render_context() const;
    std::string rendered_text() const;

private:
    MemoryConfig config_;
    std::vector<MemoryEntry> entries_;
};

}  // namespace toolflow
