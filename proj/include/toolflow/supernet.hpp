#pragma once

#include "toolflow/common.hpp"
#include "toolflow/errors.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace toolflow {

// ---- container taxonomy -------------------------------------------------

// The seven node categories of a workflow graph. Every container belongs to
// exactly one category, and all tools inside a container are interchangeable
// implementations of that category's I/O signature.
enum class ContainerType {
    Segmentation,
    Classify,
    Grounding,
    Report,
    VQAnalyze,
    GuidelineLookup,
    MKG,
};

inline constexpr int kContainerTypeCount = 7;

ContainerType parse_container_type(const std::string& label);
const std::string& to_string(ContainerType t);
// Fixed topological rank used by the bundled graph layouts (0..6).
int container_rank(ContainerType t);

// Output payload kind each category is declared to produce.
enum class PayloadKind { Record, Image };
PayloadKind declared_payload_kind(ContainerType t);

// ---- images --------------------------------------------------------------

// Dense numeric grid standing in for pixel data at desk scale. `nonce`
// identifies the originating study so tool behaviour can depend
// deterministically on the input rather than on any per-run state.
struct ImageBlock {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // row-major, width*height
    std::uint64_t nonce = 0;

    bool empty() const { return data.empty(); }
};

// ---- payloads and tool I/O ------------------------------------------------

// Structured record and/or image produced by a tool invocation. `fields`
// carries answer-bearing key/value pairs, `metrics` numeric side channels
// (confidences, measurements) that never enter the synthesized answer.
struct Payload {
    PayloadKind kind = PayloadKind::Record;
    std::string source;  // container-type label of the producing tool
    std::vector<std::pair<std::string, std::string>> fields;
    std::vector<std::pair<std::string, double>> metrics;
    ImageBlock image;

    bool informative() const {
        return !fields.empty() || !metrics.empty() || !image.empty();
    }
};

struct ToolInput {
    std::string sub_query;
    ImageBlock roi_image;
    std::string context_slice;
    std::map<std::string, double> hyperparams;
};

struct ToolOutput {
    Payload payload;
    double latency = 0.0;
    long tokens = 0;
    bool degraded = false;  // uninformative payload (failure or fidelity miss)
};

// ---- tool registry ---------------------------------------------------------

using ToolBehavior = std::function<Payload(const struct ToolSpec&, const ToolInput&)>;
using ToolFailPredicate = std::function<bool(const ToolInput&)>;

struct ToolSpec {
    std::string id;
    ContainerType ctype = ContainerType::Classify;
    double fidelity = 1.0;  // < 1 yields uninformative output on a fixed input subset
    double latency = 0.0;
    long tokens = 0;
    std::map<std::string, double> hyperparams;
    ToolBehavior behavior;
    ToolFailPredicate fail_when;  // optional hard-failure trigger
};

class ToolRegistry {
public:
    void register_tool(ToolSpec spec);
    bool has(const std::string& id) const;
    const ToolSpec& at(const std::string& id) const;  // throws UnknownTool
    const std::vector<std::string>& ids() const { return order_; }
    std::size_t size() const { return order_.size(); }

private:
    std::unordered_map<std::string, ToolSpec> tools_;
    std::vector<std::string> order_;
};

// ---- graph structure --------------------------------------------------------

struct RoutingPolicy {
    enum class Kind { All, None, FromContainers };
    Kind kind = Kind::All;
    std::vector<std::string> from_containers;
};

struct Container {
    std::string id;
    ContainerType ctype = ContainerType::Classify;
    std::vector<std::string> tools;  // registry ids, declaration order
};

struct Edge {
    std::string from;
    std::string to;
    RoutingPolicy routing;
};

// ---- actions ------------------------------------------------------------------

struct Action {
    enum class Kind { Invoke, EarlyExit };
    Kind kind = Kind::EarlyExit;
    std::string container;  // Invoke only
    std::string tool;       // Invoke only

    static Action invoke(std::string container, std::string tool) {
        return Action{Kind::Invoke, std::move(container), std::move(tool)};
    }
    static Action early_exit() { return Action{}; }

    bool is_exit() const { return kind == Kind::EarlyExit; }
    std::string name() const;  // "invoke:<container>/<tool>" or "early_exit"

    friend bool operator==(const Action& a, const Action& b) {
        return a.kind == b.kind && a.container == b.container && a.tool == b.tool;
    }
};

// Legal action set at a position, in deterministic order (edge declaration
// order, then tool declaration order, EarlyExit last), together with each
// action's fixed index into the graph-wide action table.
struct OrderedActionSet {
    std::vector<Action> actions;
    std::vector<int> global_indices;

    std::size_t size() const { return actions.size(); }
    bool empty() const { return actions.empty(); }
    // Index within this set, or -1.
    int find(const Action& a) const;
};

// The pre-first-step position. Positions are container ids once a tool has run.
inline const std::string kEntryPosition;

// ---- graph ------------------------------------------------------------------

class SupernetGraph {
public:
    const std::vector<Container>& containers() const { return containers_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<std::string>& entry_successors() const { return entry_; }

    bool has_container(const std::string& id) const;
    const Container& container(const std::string& id) const;  // throws UnknownPosition
    ContainerType ctype_of(const std::string& container_id) const;

    // Graph-wide action table: every (container, tool) pair in declaration
    // order, then EarlyExit. The policy head's output dimension.
    const std::vector<Action>& action_table() const { return action_table_; }
    int action_count() const { return static_cast<int>(action_table_.size()); }
    int global_index(const Action& a) const;  // throws UnknownTool / UnknownPosition
    int exit_index() const { return action_count() - 1; }

    // Edges leaving `from`, in declaration order.
    const std::vector<int>& out_edges(const std::string& from) const;

    // Content hash over the canonical serialized structure.
    std::uint64_t fingerprint() const { return fingerprint_; }

    nlohmann::json to_json() const;

    friend SupernetGraph build_graph(const nlohmann::json& doc, const ToolRegistry& registry);

private:
    std::vector<Container> containers_;
    std::vector<Edge> edges_;
    std::vector<std::string> entry_;
    std::unordered_map<std::string, std::size_t> container_idx_;
    std::unordered_map<std::string, std::vector<int>> adjacency_;
    std::vector<int> no_edges_;
    std::vector<Action> action_table_;
    std::unordered_map<std::string, int> action_idx_;  // "container/tool"
    std::uint64_t fingerprint_ = 0;
};

// Validates and indexes a graph document. Top-level keys: `containers`
// (id, ctype, tools), `edges` (from, to, routing), `entry` (container id or
// list of ids invocable before any tool has run). Routing is "all", "none",
// or {"from_containers": [ids]}. Rejects cycles, unreachable containers,
// unregistered or mismatched tools, and empty tool lists.
SupernetGraph build_graph(const nlohmann::json& doc, const ToolRegistry& registry);
SupernetGraph load_graph_file(const std::string& path, const ToolRegistry& registry);

// Actions available at `position`: one Invoke per (successor container, tool)
// plus EarlyExit, which is always legal.
OrderedActionSet legal_actions(const SupernetGraph& graph, const std::string& position);

// ---- routing and execution -----------------------------------------------------

class Memory;  // memory.hpp

// Episode state visible to routing and the encoder.
struct StateView {
    const std::string& query;
    const ImageBlock& image;
    const std::string& context;
    const Memory& memory;
};

// Builds the tool input for traversing `edge`: the task query, the image, and
// the context slice selected by the edge's routing policy. Throws
// RoutingFieldMissing when a named container has no memory entry.
ToolInput route_payload(const Edge& edge, const StateView& state);

// Tool input for a first step taken from the entry position (no edge exists
// yet; the context slice is empty by construction).
ToolInput entry_payload(const StateView& state);

// Runs the tool named by an Invoke action. Costs are the registered constants.
// Throws ToolFailure when the tool's failure predicate fires.
ToolOutput execute_tool(const Action& action, const ToolInput& input, const ToolRegistry& registry);

}  // namespace toolflow
