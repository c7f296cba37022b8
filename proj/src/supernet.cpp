#include "toolflow/supernet.hpp"

#include "toolflow/memory.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

namespace toolflow {

namespace {

const std::vector<std::pair<ContainerType, const char*>>& type_table() {
    static const std::vector<std::pair<ContainerType, const char*>> table = {
        {ContainerType::Segmentation, "Segmentation"},
        {ContainerType::Classify, "Classify"},
        {ContainerType::Grounding, "Grounding"},
        {ContainerType::Report, "Report"},
        {ContainerType::VQAnalyze, "VQAnalyze"},
        {ContainerType::GuidelineLookup, "GuidelineLookup"},
        {ContainerType::MKG, "MKG"},
    };
    return table;
}

std::string action_key(const std::string& container, const std::string& tool) {
    return container + "/" + tool;
}

}  // namespace

ContainerType parse_container_type(const std::string& label) {
    for (const auto& [t, name] : type_table()) {
        if (label == name) return t;
    }
    throw InvalidGraphSpec("unknown container type label '" + label + "'");
}

const std::string& to_string(ContainerType t) {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [_, name] : type_table()) v.emplace_back(name);
        return v;
    }();
    return names[static_cast<std::size_t>(t)];
}

int container_rank(ContainerType t) {
    switch (t) {
        case ContainerType::Segmentation: return 0;
        case ContainerType::Classify: return 1;
        case ContainerType::Grounding: return 2;
        case ContainerType::VQAnalyze: return 3;
        case ContainerType::MKG: return 4;
        case ContainerType::GuidelineLookup: return 5;
        case ContainerType::Report: return 6;
    }
    return -1;
}

PayloadKind declared_payload_kind(ContainerType t) {
    return t == ContainerType::Segmentation ? PayloadKind::Image : PayloadKind::Record;
}

// ---- registry ----------------------------------------------------------

void ToolRegistry::register_tool(ToolSpec spec) {
    if (spec.id.empty()) throw InvalidGraphSpec("tool id must be non-empty");
    if (tools_.count(spec.id)) throw InvalidGraphSpec("duplicate tool id '" + spec.id + "'");
    order_.push_back(spec.id);
    tools_.emplace(spec.id, std::move(spec));
}

bool ToolRegistry::has(const std::string& id) const { return tools_.count(id) != 0; }

const ToolSpec& ToolRegistry::at(const std::string& id) const {
    auto it = tools_.find(id);
    if (it == tools_.end()) throw UnknownTool("tool '" + id + "' is not registered");
    return it->second;
}

// ---- actions ----------------------------------------------------------

std::string Action::name() const {
    if (kind == Kind::EarlyExit) return "early_exit";
    return "invoke:" + container + "/" + tool;
}

int OrderedActionSet::find(const Action& a) const {
    for (std::size_t i = 0; i < actions.size(); ++i) {
        if (actions[i] == a) return static_cast<int>(i);
    }
    return -1;
}

// ---- graph accessors ----------------------------------------------------

bool SupernetGraph::has_container(const std::string& id) const {
    return container_idx_.count(id) != 0;
}

const Container& SupernetGraph::container(const std::string& id) const {
    auto it = container_idx_.find(id);
    if (it == container_idx_.end()) throw UnknownPosition("unknown container '" + id + "'");
    return containers_[it->second];
}

ContainerType SupernetGraph::ctype_of(const std::string& container_id) const {
    return container(container_id).ctype;
}

int SupernetGraph::global_index(const Action& a) const {
    if (a.kind == Action::Kind::EarlyExit) return exit_index();
    auto it = action_idx_.find(action_key(a.container, a.tool));
    if (it == action_idx_.end()) {
        throw UnknownTool("action '" + a.name() + "' is not in the graph's action table");
    }
    return it->second;
}

const std::vector<int>& SupernetGraph::out_edges(const std::string& from) const {
    auto it = adjacency_.find(from);
    if (it == adjacency_.end()) return no_edges_;
    return it->second;
}

nlohmann::json SupernetGraph::to_json() const {
    nlohmann::json doc;
    doc["entry"] = entry_;
    doc["containers"] = nlohmann::json::array();
    for (const Container& c : containers_) {
        doc["containers"].push_back({{"id", c.id}, {"ctype", to_string(c.ctype)}, {"tools", c.tools}});
    }
    doc["edges"] = nlohmann::json::array();
    for (const Edge& e : edges_) {
        nlohmann::json routing;
        switch (e.routing.kind) {
            case RoutingPolicy::Kind::All: routing = "all"; break;
            case RoutingPolicy::Kind::None: routing = "none"; break;
            case RoutingPolicy::Kind::FromContainers:
                routing = nlohmann::json{{"from_containers", e.routing.from_containers}};
                break;
        }
        doc["edges"].push_back({{"from", e.from}, {"to", e.to}, {"routing", routing}});
    }
    return doc;
}

// ---- graph construction ----------------------------------------------------

namespace {

RoutingPolicy parse_routing(const nlohmann::json& j) {
    RoutingPolicy p;
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "all") {
            p.kind = RoutingPolicy::Kind::All;
        } else if (s == "none") {
            p.kind = RoutingPolicy::Kind::None;
        } else {
            throw InvalidGraphSpec("unknown routing policy '" + s + "'");
        }
        return p;
    }
    if (j.is_object() && j.contains("from_containers") && j["from_containers"].is_array()) {
        p.kind = RoutingPolicy::Kind::FromContainers;
        for (const auto& v : j["from_containers"]) {
            if (!v.is_string()) throw InvalidGraphSpec("from_containers entries must be container ids");
            p.from_containers.push_back(v.get<std::string>());
        }
        if (p.from_containers.empty()) {
            throw InvalidGraphSpec("from_containers routing must name at least one container");
        }
        return p;
    }
    throw InvalidGraphSpec("routing must be \"all\", \"none\", or {\"from_containers\": [...]}");
}

}  // namespace

SupernetGraph build_graph(const nlohmann::json& doc, const ToolRegistry& registry) {
    if (!doc.is_object() || !doc.contains("containers") || !doc.contains("edges") ||
        !doc.contains("entry")) {
        throw InvalidGraphSpec("graph document needs 'containers', 'edges', and 'entry'");
    }

    SupernetGraph g;

    for (const auto& cj : doc["containers"]) {
        Container c;
        c.id = cj.at("id").get<std::string>();
        if (c.id.empty()) throw InvalidGraphSpec("container id must be non-empty");
        if (c.id == kMemoryDigestId) {
            throw InvalidGraphSpec("container id '" + c.id + "' is reserved");
        }
        if (g.container_idx_.count(c.id)) {
            throw InvalidGraphSpec("duplicate container id '" + c.id + "'");
        }
        c.ctype = parse_container_type(cj.at("ctype").get<std::string>());
        for (const auto& tj : cj.at("tools")) {
            c.tools.push_back(tj.get<std::string>());
        }
        if (c.tools.empty()) {
            throw InvalidGraphSpec("container '" + c.id + "' declares no tools");
        }
        std::set<std::string> seen;
        for (const std::string& tid : c.tools) {
            if (!seen.insert(tid).second) {
                throw InvalidGraphSpec("container '" + c.id + "' lists tool '" + tid + "' twice");
            }
            if (!registry.has(tid)) {
                throw UnknownTool("tool '" + tid + "' in container '" + c.id + "' is not registered");
            }
            if (registry.at(tid).ctype != c.ctype) {
                throw InvalidGraphSpec("tool '" + tid + "' does not match the signature of container '" +
                                       c.id + "' (" + to_string(c.ctype) + ")");
            }
        }
        g.container_idx_.emplace(c.id, g.containers_.size());
        g.containers_.push_back(std::move(c));
    }
    if (g.containers_.empty()) throw InvalidGraphSpec("graph declares no containers");

    for (const auto& ej : doc["edges"]) {
        Edge e;
        e.from = ej.at("from").get<std::string>();
        e.to = ej.at("to").get<std::string>();
        if (!g.container_idx_.count(e.from)) {
            throw InvalidGraphSpec("edge endpoint '" + e.from + "' is not a declared container");
        }
        if (!g.container_idx_.count(e.to)) {
            throw InvalidGraphSpec("edge endpoint '" + e.to + "' is not a declared container");
        }
        if (e.from == e.to) throw CycleDetected("self-loop on container '" + e.from + "'");
        e.routing = ej.contains("routing") ? parse_routing(ej["routing"]) : RoutingPolicy{};
        if (e.routing.kind == RoutingPolicy::Kind::FromContainers) {
            for (const std::string& src : e.routing.from_containers) {
                if (!g.container_idx_.count(src)) {
                    throw InvalidGraphSpec("routing on edge " + e.from + "->" + e.to +
                                           " names unknown container '" + src + "'");
                }
            }
        }
        g.adjacency_[e.from].push_back(static_cast<int>(g.edges_.size()));
        g.edges_.push_back(std::move(e));
    }

    const nlohmann::json& entry = doc["entry"];
    if (entry.is_string()) {
        g.entry_.push_back(entry.get<std::string>());
    } else if (entry.is_array()) {
        for (const auto& v : entry) g.entry_.push_back(v.get<std::string>());
    } else {
        throw InvalidGraphSpec("'entry' must be a container id or a list of container ids");
    }
    if (g.entry_.empty()) throw InvalidGraphSpec("'entry' must name at least one container");
    {
        std::set<std::string> seen;
        for (const std::string& id : g.entry_) {
            if (!g.container_idx_.count(id)) {
                throw InvalidGraphSpec("entry container '" + id + "' is not declared");
            }
            if (!seen.insert(id).second) {
                throw InvalidGraphSpec("entry lists container '" + id + "' twice");
            }
        }
    }

    // Acyclicity (Kahn). Any leftover node sits on a cycle.
    {
        std::unordered_map<std::string, int> indegree;
        for (const Container& c : g.containers_) indegree[c.id] = 0;
        for (const Edge& e : g.edges_) indegree[e.to]++;
        std::deque<std::string> ready;
        for (const Container& c : g.containers_) {
            if (indegree[c.id] == 0) ready.push_back(c.id);
        }
        std::size_t visited = 0;
        while (!ready.empty()) {
            std::string id = ready.front();
            ready.pop_front();
            ++visited;
            for (int ei : g.out_edges(id)) {
                if (--indegree[g.edges_[ei].to] == 0) ready.push_back(g.edges_[ei].to);
            }
        }
        if (visited != g.containers_.size()) {
            for (const Container& c : g.containers_) {
                if (indegree[c.id] > 0) {
                    throw CycleDetected("container '" + c.id + "' lies on a cycle");
                }
            }
        }
    }

    // Reachability from the entry position.
    {
        std::set<std::string> reached(g.entry_.begin(), g.entry_.end());
        std::deque<std::string> frontier(g.entry_.begin(), g.entry_.end());
        while (!frontier.empty()) {
            std::string id = frontier.front();
            frontier.pop_front();
            for (int ei : g.out_edges(id)) {
                const std::string& to = g.edges_[ei].to;
                if (reached.insert(to).second) frontier.push_back(to);
            }
        }
        for (const Container& c : g.containers_) {
            if (!reached.count(c.id)) {
                throw UnreachableContainer("container '" + c.id + "' is unreachable from the entry position");
            }
        }
    }

    // Graph-wide action table: declaration order, EarlyExit last.
    for (const Container& c : g.containers_) {
        for (const std::string& tid : c.tools) {
            g.action_idx_.emplace(action_key(c.id, tid), static_cast<int>(g.action_table_.size()));
            g.action_table_.push_back(Action::invoke(c.id, tid));
        }
    }
    g.action_table_.push_back(Action::early_exit());

    g.fingerprint_ = fnv1a64(g.to_json().dump());
    return g;
}

SupernetGraph load_graph_file(const std::string& path, const ToolRegistry& registry) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open graph file '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidGraphSpec("graph file '" + path + "' is not valid JSON: " + e.what());
    }
    return build_graph(doc, registry);
}

OrderedActionSet legal_actions(const SupernetGraph& graph, const std::string& position) {
    OrderedActionSet set;
    auto add_container = [&](const std::string& cid) {
        const Container& c = graph.container(cid);
        for (const std::string& tid : c.tools) {
            Action a = Action::invoke(cid, tid);
            set.global_indices.push_back(graph.global_index(a));
            set.actions.push_back(std::move(a));
        }
    };
    if (position == kEntryPosition) {
        for (const std::string& cid : graph.entry_successors()) add_container(cid);
    } else {
        if (!graph.has_container(position)) {
            throw UnknownPosition("position '" + position + "' is not a container in the graph");
        }
        for (int ei : graph.out_edges(position)) add_container(graph.edges()[ei].to);
    }
    set.actions.push_back(Action::early_exit());
    set.global_indices.push_back(graph.exit_index());
    return set;
}

// ---- routing ----------------------------------------------------------------

namespace {

std::string join_nonempty(const std::vector<std::string>& parts) {
    std::string out;
    for (const std::string& p : parts) {
        if (p.empty()) continue;
        if (!out.empty()) out.push_back('\n');
        out += p;
    }
    return out;
}

}  // namespace

ToolInput route_payload(const Edge& edge, const StateView& state) {
    ToolInput input;
    input.sub_query = state.query;
    input.roi_image = state.image;
    switch (edge.routing.kind) {
        case RoutingPolicy::Kind::None:
            break;
        case RoutingPolicy::Kind::All: {
            std::vector<std::string> parts;
            for (const MemoryEntry& e : state.memory.entries()) parts.push_back(e.summary);
            input.context_slice = join_nonempty(parts);
            break;
        }
        case RoutingPolicy::Kind::FromContainers: {
            for (const std::string& src : edge.routing.from_containers) {
                bool found = false;
                for (const MemoryEntry& e : state.memory.entries()) {
                    if (e.container_id == src) {
                        found = true;
                        break;
                    }
                }
                if (!found) {
                    throw RoutingFieldMissing("routing on edge " + edge.from + "->" + edge.to +
                                              " selects container '" + src +
                                              "' which has no memory entry");
                }
            }
            std::vector<std::string> parts;
            for (const MemoryEntry& e : state.memory.entries()) {
                for (const std::string& src : edge.routing.from_containers) {
                    if (e.container_id == src) {
                        parts.push_back(e.summary);
                        break;
                    }
                }
            }
            input.context_slice = join_nonempty(parts);
            break;
        }
    }
    return input;
}

ToolInput entry_payload(const StateView& state) {
    ToolInput input;
    input.sub_query = state.query;
    input.roi_image = state.image;
    return input;
}

ToolOutput execute_tool(const Action& action, const ToolInput& input, const ToolRegistry& registry) {
    if (action.kind != Action::Kind::Invoke) {
        throw Error("execute_tool requires an Invoke action");
    }
    const ToolSpec& spec = registry.at(action.tool);
    if (spec.fail_when && spec.fail_when(input)) {
        throw ToolFailure("tool '" + spec.id + "' failed on this input");
    }
    if (!spec.behavior) throw Error("tool '" + spec.id + "' has no behavior");

    ToolInput merged = input;
    for (const auto& [k, v] : spec.hyperparams) merged.hyperparams.emplace(k, v);

    ToolOutput out;
    out.payload = spec.behavior(spec, merged);
    if (out.payload.kind != declared_payload_kind(spec.ctype)) {
        throw Error("tool '" + spec.id + "' produced a payload kind that does not match its category");
    }
    out.latency = spec.latency;
    out.tokens = spec.tokens;
    out.degraded = !out.payload.informative();
    return out;
}

}  // namespace toolflow
