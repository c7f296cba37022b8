#pragma once

// Independent reference implementations used to validate the engine: a
// central-finite-difference gradient checker, an exhaustive trajectory
// enumerator, hand-rolled math helpers, and small self-contained worlds.

#include "toolflow/environment.hpp"
#include "toolflow/harness.hpp"
#include "toolflow/optcore.hpp"
#include "toolflow/runtime.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace toolflow::testing {

// ---- finite differences -----------------------------------------------------

struct FdReport {
    double max_rel_err = 0.0;
    std::string worst;  // "tensor(r,c): analytic=..., numeric=..."
    int checked = 0;
};

// Central differences on `samples_per_tensor` random coordinates of every
// tensor. `loss_fn` must read the same ParamSet object that is perturbed.
// Relative error: |a - n| / max(|a|, |n|, floor).
FdReport fd_check_gradients(ParamSet& params, const std::function<double()>& loss_fn,
                            const GradSet& analytic, int samples_per_tensor, Rng& rng,
                            double h = 1e-5, double floor = 1e-6);

// ---- exhaustive enumeration ---------------------------------------------------

struct PathOutcome {
    Trajectory traj;
    double prob = 0.0;
    Answer answer;
};

// Every trajectory reachable under the run options, with its exact
// probability under the policy. Shares the single-step transition with the
// sampler but replaces sampling by exhaustive branching.
std::vector<PathOutcome> enumerate_paths(const EngineContext& ctx, const ParamSet& params,
                                         const QueryInstance& instance, const RunOptions& opts);

double total_probability(const std::vector<PathOutcome>& paths);

// Exact canonical-answer marginal implied by the enumeration.
std::map<std::string, double> exact_answer_marginal(const std::vector<PathOutcome>& paths);

// ---- hand-rolled math ---------------------------------------------------------

std::vector<double> softmax_by_hand(const std::vector<double>& scores);
int lcs_length_by_hand(const std::vector<std::string>& a, const std::vector<std::string>& b);

// ---- small worlds ---------------------------------------------------------------

// Owns a registry/graph/extractor triple; build EngineContext on demand as
// EngineContext{world.graph, world.registry, world.extractors}.
struct TestWorld {
    ToolRegistry registry;
    SupernetGraph graph;
    FeatureExtractors extractors;
};

// Linear chain c1 -> c2 -> ... of identity-tool containers of the given
// categories ("all" routing, entry = c1).
TestWorld make_chain_world(const std::vector<ContainerType>& types, int tools_per_container = 1,
                           int feature_dim = 16);

// One container, one identity tool: exactly two actions at the first step.
TestWorld make_bandit_world(int feature_dim = 16);

// c1 -> {c2, c3}, c2 -> c3: a small DAG with real branching.
TestWorld make_fork_world(int feature_dim = 16);

// Full simulated ecosystem (fourteen tools, seven containers).
TestWorld make_standard_world(int feature_dim = 64);

// Instance whose reference answer is the echo of its query; pairs with
// identity-tool worlds.
QueryInstance make_echo_instance(const std::string& id, const std::string& query,
                                 std::uint64_t seed);

// Deterministic parameters for a world (independent stream per `salt`).
ParamSet make_params_for(const TestWorld& world, int hidden_dim, std::uint64_t salt,
                         int feature_dim);

}  // namespace toolflow::testing
