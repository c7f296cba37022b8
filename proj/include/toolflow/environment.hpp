#pragma once

#include "toolflow/common.hpp"
#include "toolflow/encoder.hpp"
#include "toolflow/errors.hpp"
#include "toolflow/memory.hpp"
#include "toolflow/policy.hpp"
#include "toolflow/supernet.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace toolflow {

// Ordered field map produced by answer synthesis.
using Answer = std::vector<std::pair<std::string, std::string>>;

struct GroundTruth {
    Answer answer_fields;
};

struct PlanItem {
    ContainerType ctype;
    std::string key;  // answer field this step is expected to produce
};

// One synthetic task: a seeded feature grid standing in for the image, a
// templated query and personal context, the reference answer, and the
// shortest tool plan that produces it.
struct QueryInstance {
    std::string id;
    std::uint64_t seed = 0;
    std::string query;
    ImageBlock image;
    std::string context;
    GroundTruth truth;
    std::vector<PlanItem> required_plan;
    bool safety_critical = false;
};

struct SuiteConfig {
    int n_instances = 0;
    std::uint64_t seed = 0;
    int plan_len_min = 1;
    int plan_len_max = 3;
    double simple_fraction = 0.3;   // single-step plans (when plan_len_min == 1)
    double safety_fraction = 0.2;   // plans forced through GuidelineLookup
    bool self_check = true;         // verify the expert walk scores utility 1
};

// ---- default simulated ecosystem ------------------------------------------

// Fourteen deterministic simulated tools: per category a high-fidelity "pro"
// variant and a cheaper "lite" variant that is uninformative on a fixed
// pseudo-random subset of studies.
ToolRegistry default_registry();

// Seven containers (one per category), dense rank-forward edges with "all"
// routing, every container invocable first.
nlohmann::json standard_graph_doc();

// Record-producing tool for tests and custom registries: echoes the incoming
// sub-query as its single field.
ToolSpec make_identity_tool(std::string id, ContainerType ctype, double latency, long tokens);

// Answer field key produced by each category (Segmentation produces images,
// not answer fields).
const std::string& answer_key_for(ContainerType t);
// Categories whose tools expect routed context from earlier steps.
bool requires_context(ContainerType t);

// ---- suites -----------------------------------------------------------------

// Deterministic instance sampler. Plans are random edge-paths through the
// graph restricted to record-producing categories, so every plan is walkable.
std::vector<QueryInstance> generate_suite(const SupernetGraph& graph, const ToolRegistry& registry,
                                          const SuiteConfig& config);

nlohmann::json instance_to_json(const QueryInstance& inst);
QueryInstance instance_from_json(const nlohmann::json& j);
void save_suite(const std::string& path, const std::vector<QueryInstance>& suite);
std::vector<QueryInstance> load_suite(const std::string& path);

// ---- scoring -----------------------------------------------------------------

// Field-level F1 between canonicalized answers: exact match scores 1, an
// empty answer against non-empty truth scores 0.
double utility(const Answer& answer, const GroundTruth& truth);

// Canonical single-line rendering "k=v;k=v" with keys sorted; the equality
// key for answer-marginal estimation.
std::string canonical_answer(const Answer& answer);

struct HeuristicSpec {
    double w_compliance = 0.6;
    double w_coherence = 0.2;
    double w_brevity = 0.2;
};

// Smooth trajectory-quality proxy in [0,1]: plan compliance (longest common
// subsequence of visited vs required category sequences), routing coherence
// (context-hungry steps that actually received context), and brevity.
double heuristic_reward(const Trajectory& traj, const QueryInstance& instance,
                        const HeuristicSpec& spec, const SupernetGraph& graph, int t_max);

// ---- costs --------------------------------------------------------------------

struct CostWeights {
    double latency = 1.0;
    double tokens = 0.1;
};

double step_cost(const ToolOutput& output, const CostWeights& weights);
double max_step_cost(const ToolRegistry& registry, const CostWeights& weights);
// Highest spend reachable in an episode: t_max invocations of the most
// expensive tool. The fixed denominator of normalized trajectory cost.
double cost_normalizer(const ToolRegistry& registry, int t_max, const CostWeights& weights);
double trajectory_cost(const Trajectory& traj, const CostWeights& weights);

// ---- expert and synthesis --------------------------------------------------------

// Scripted reference policy: invoke the highest-fidelity tool of the first
// reachable container matching the next unexecuted plan item; EarlyExit once
// the plan is complete. Throws PlanNotRealizable when no matching container
// is reachable.
Action expert_action(const State& state, const QueryInstance& instance, const SupernetGraph& graph,
                     const ToolRegistry& registry);

// Frozen deterministic answer synthesis: for every answer field, the value
// reported by the last informative tool output that addressed it.
Answer synthesize_answer(const Trajectory& traj, const QueryInstance& instance);

// ---- shared step transition ---------------------------------------------------

struct StepEffect {
    ToolOutput output;
    bool context_empty = true;
    bool routing_fault = false;  // routing raised and was degraded to empty context
};

// Executes an Invoke action against the environment: routes context along the
// traversed edge (empty at the entry position), runs the tool, folds the
// summarized result into memory, and advances the position. Routing faults
// and tool failures degrade the step instead of aborting the episode.
StepEffect apply_invoke(const SupernetGraph& graph, const ToolRegistry& registry, State& state,
                        const Action& action, long step, const Summarizer& summarizer);

}  // namespace toolflow
