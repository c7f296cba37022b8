#pragma once

#include "toolflow/checkpoint.hpp"
#include "toolflow/config.hpp"
#include "toolflow/environment.hpp"
#include "toolflow/runtime.hpp"
#include "toolflow/training.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace toolflow {

// Everything a run needs, owned in one place so EngineContext references
// stay valid. Move-only (the context references the members).
struct RunSetup {
    RunConfig config;
    SupernetGraph graph;
    ToolRegistry registry;
    FeatureExtractors extractors;
    std::vector<QueryInstance> train_suite;
    std::vector<QueryInstance> eval_suite;

    RunSetup() = default;
    RunSetup(const RunSetup&) = delete;
    RunSetup& operator=(const RunSetup&) = delete;
    RunSetup(RunSetup&&) = default;
    RunSetup& operator=(RunSetup&&) = default;

    EngineContext context() const { return EngineContext{graph, registry, extractors}; }
};

// Builds graph ("builtin:standard" or a JSON file), the simulated tool
// registry, extractors, and both suites (generated or loaded).
RunSetup make_setup(const RunConfig& config);

// Episode options for evaluation/inference (end-temperature sampling).
RunOptions eval_options(const RunConfig& config);
// Episode options used during training rollouts (alpha is annealed in-loop).
RunOptions train_options(const RunConfig& config);

CostWeights cost_weights_of(const RunConfig& config);
// Fixed per-suite denominator of normalized episode cost.
double suite_cost_normalizer(const RunConfig& config, const ToolRegistry& registry);

// Full curriculum schedule derived from the config; `lambda_override`
// substitutes the cost pressure (used by the sweep).
CurriculumConfig curriculum_config(const RunConfig& config, const ToolRegistry& registry,
                                   std::optional<double> lambda_override = std::nullopt);

// Expert demonstrations + three-phase curriculum from scratch.
CurriculumResult train_policy(const RunSetup& setup,
                              std::optional<double> lambda_override = std::nullopt);

// ---- evaluation -------------------------------------------------------------

struct EvalMetrics {
    double accuracy = 0.0;        // fraction of exactly-right answers
    double mean_utility = 0.0;
    double mean_cost = 0.0;       // normalized
    double mean_length = 0.0;     // steps including the exit decision
    double early_exit_rate = 0.0;
    int n = 0;
};

// Per-instance evaluation outcome, persisted alongside the aggregates.
struct InstanceOutcome {
    std::string id;
    double utility = 0.0;
    bool exact = false;
    double cost = 0.0;            // normalized
    int length = 0;
    bool early_exit = false;
};

// Sampled evaluation with one independent RNG stream per instance (derived
// from eval_seed and the instance id, so subsets evaluate identically).
// When `trace_sink` is given, every episode appends an audit trace; when
// `outcomes` is given, per-instance results are collected in suite order.
EvalMetrics evaluate(const EngineContext& ctx, const ParamSet& params,
                     const std::vector<QueryInstance>& suite, const RunOptions& opts,
                     std::uint64_t eval_seed, const CostWeights& weights, double cost_norm,
                     std::ostream* trace_sink = nullptr, const TraceInfo& info = {},
                     std::vector<InstanceOutcome>* outcomes = nullptr);

std::vector<std::string> instance_csv_rows(const std::vector<InstanceOutcome>& outcomes);

// ---- reports ------------------------------------------------------------------

// Config echo lines, then the header row, then data rows.
void write_csv(const std::string& path, const std::vector<std::string>& echo_lines,
               const std::string& header, const std::vector<std::string>& rows);

std::string metrics_csv_row(const EvalMetrics& m);

// ---- cost sweep ----------------------------------------------------------------

struct ParetoPoint {
    double lambda = 0.0;
    std::uint64_t seed = 0;
    EvalMetrics metrics;
    bool failed = false;
    std::string error;
};

// Trains across the lambda grid and evaluates each point. Default mode
// shares the warmup and ranking phases per seed and refits only the
// cost-aware phase per lambda; `sweep_full_retrain` retrains end to end.
// Duplicate grid entries are dropped with a warning on `log`. A failed
// point is recorded and the sweep continues.
std::vector<ParetoPoint> pareto_sweep(const RunConfig& config, std::ostream* log = nullptr);

std::vector<std::string> pareto_csv_rows(const std::vector<ParetoPoint>& points);

// ---- ablations -----------------------------------------------------------------

struct AblationRow {
    std::string variant;
    EvalMetrics metrics;
    double delta_cost_vs_full = 0.0;
    bool failed = false;
    std::string error;
};

// Four variants: full, no-early-exit (exit masked in training and eval),
// no-path-rank (ranking phase skipped), no-warmup (cloning phase skipped).
std::vector<AblationRow> ablate(const RunConfig& config, std::ostream* log = nullptr);

std::vector<std::string> ablation_csv_rows(const std::vector<AblationRow>& rows);

}  // namespace toolflow
