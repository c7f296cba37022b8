#pragma once

#include "toolflow/backprop.hpp"
#include "toolflow/environment.hpp"
#include "toolflow/memory.hpp"
#include "toolflow/optcore.hpp"
#include "toolflow/policy.hpp"

#include <json.hpp>

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace toolflow {

inline constexpr int kTraceVersion = 1;

struct RunOptions {
    int t_max = 8;
    double alpha = 0.8;
    bool greedy = false;
    int min_steps_before_exit = 0;
    bool disable_early_exit = false;  // mask EarlyExit wherever an Invoke exists
    bool allow_revisit = true;
    MemoryConfig memory;
};

// Legal actions after runtime masking (exit hold-back, revisit filter).
// The set is never empty: EarlyExit survives when nothing else does.
OrderedActionSet runtime_legal_actions(const SupernetGraph& graph, const std::string& position,
                                       const RunOptions& opts, int step_index,
                                       const std::vector<std::string>& visited);

// Everything the policy, the environment, and the harness share.
struct EngineContext {
    const SupernetGraph& graph;
    const ToolRegistry& registry;
    const FeatureExtractors& extractors;
};

// One sampled episode with the per-step states kept for gradient replay.
struct Rollout {
    Trajectory traj;
    std::vector<State> states;  // state before each step, aligned with traj.steps
    double alpha = 1.0;
    Answer answer;
    double total_latency = 0.0;
    long total_tokens = 0;
};

Rollout rollout_episode(const EngineContext& ctx, const ParamSet& params,
                        const QueryInstance& instance, const RunOptions& opts, Rng& rng);

// Monte-Carlo answer marginal: canonical answer -> relative frequency over
// `m` independent rollouts.
std::map<std::string, double> estimate_marginal(const EngineContext& ctx, const ParamSet& params,
                                                const QueryInstance& instance, int m,
                                                const RunOptions& opts, Rng& rng);

// ---- audit traces -------------------------------------------------------

struct TraceInfo {
    std::uint64_t seed = 0;
    std::string checkpoint_id;
    double lambda = 0.0;
};

// Line-delimited audit record: one meta line, one line per step carrying the
// full action distribution, one result line.
struct TraceRecord {
    nlohmann::json meta;
    std::vector<nlohmann::json> steps;
    nlohmann::json result;

    std::vector<std::string> to_lines() const;
};

struct InferenceResult {
    Answer answer;
    Trajectory trajectory;
    double total_latency = 0.0;
    long total_tokens = 0;
    TraceRecord trace;
};

InferenceResult run_inference(const EngineContext& ctx, const ParamSet& params,
                              const QueryInstance& instance, const RunOptions& opts, Rng& rng,
                              const TraceInfo& info);

void emit_trace(const TraceRecord& trace, std::ostream& sink);
void emit_trace_file(const TraceRecord& trace, const std::string& path);  // SinkUnavailable

// ---- replay verification ---------------------------------------------------

struct TraceVerifyReport {
    int traces_checked = 0;
    int steps_checked = 0;
    std::vector<std::string> mismatches;

    bool ok() const { return mismatches.empty(); }
};

// Re-executes every trace in the stream against the given parameters and
// confirms each logged per-step probability within `tol`.
TraceVerifyReport verify_traces(std::istream& in, const EngineContext& ctx, const ParamSet& params,
                                double tol = 1e-9);
TraceVerifyReport verify_trace_file(const std::string& path, const EngineContext& ctx,
                                    const ParamSet& params, double tol = 1e-9);

}  // namespace toolflow
