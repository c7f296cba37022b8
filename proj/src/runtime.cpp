#include "toolflow/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace toolflow {

namespace {

std::uint64_t state_digest(const State& state, long step) {
    std::uint64_t h = fnv1a64(state.position);
    h = mix64(h, fnv1a64(state.memory.rendered_text()));
    h = mix64(h, static_cast<std::uint64_t>(step));
    h = mix64(h, state.image.nonce);
    return h;
}

}  // namespace

OrderedActionSet runtime_legal_actions(const SupernetGraph& graph, const std::string& position,
                                       const RunOptions& opts, int step_index,
                                       const std::vector<std::string>& visited) {
    const OrderedActionSet base = legal_actions(graph, position);
    OrderedActionSet out;
    for (std::size_t i = 0; i < base.actions.size(); ++i) {
        const Action& a = base.actions[i];
        if (a.is_exit()) continue;
        if (!opts.allow_revisit &&
            std::find(visited.begin(), visited.end(), a.container) != visited.end()) {
            continue;
        }
        out.actions.push_back(a);
        out.global_indices.push_back(base.global_indices[i]);
    }
    const bool hold_exit =
        (opts.disable_early_exit || step_index <= opts.min_steps_before_exit) && !out.empty();
    if (!hold_exit) {
        out.actions.push_back(Action::early_exit());
        out.global_indices.push_back(graph.exit_index());
    }
    if (out.empty()) {
        out.actions.push_back(Action::early_exit());
        out.global_indices.push_back(graph.exit_index());
    }
    return out;
}

Rollout rollout_episode(const EngineContext& ctx, const ParamSet& params,
                        const QueryInstance& instance, const RunOptions& opts, Rng& rng) {
    const Summarizer summarizer = template_summarizer(opts.memory.entry_token_budget);

    Rollout rollout;
    rollout.alpha = opts.alpha;
    State state{instance.query, instance.image, instance.context, Memory{opts.memory},
                kEntryPosition};
    std::vector<std::string> visited;

    rollout.traj.terminated_by = Termination::MaxSteps;
    for (int t = 1; t <= opts.t_max; ++t) {
        const OrderedActionSet legal =
            runtime_legal_actions(ctx.graph, state.position, opts, t, visited);
        const StepForward fwd = forward_step(state, ctx.extractors, params, legal, opts.alpha);

        TrajectoryStep step;
        step.state_digest = state_digest(state, t);
        step.dist = fwd.dist;
        step.chosen = opts.greedy ? fwd.dist.argmax() : sample_action_index(fwd.dist, rng);

        rollout.states.push_back(state);
        const Action action = step.action();
        if (action.is_exit()) {
            rollout.traj.steps.push_back(std::move(step));
            rollout.traj.terminated_by = Termination::EarlyExit;
            break;
        }

        const StepEffect effect =
            apply_invoke(ctx.graph, ctx.registry, state, action, t, summarizer);
        step.output = effect.output;
        step.context_empty = effect.context_empty;
        step.degraded = effect.output.degraded || effect.routing_fault;
        rollout.total_latency += effect.output.latency;
        rollout.total_tokens += effect.output.tokens;
        visited.push_back(action.container);
        rollout.traj.steps.push_back(std::move(step));
    }

    rollout.answer = synthesize_answer(rollout.traj, instance);
    return rollout;
}

std::map<std::string, double> estimate_marginal(const EngineContext& ctx, const ParamSet& params,
                                                const QueryInstance& instance, int m,
                                                const RunOptions& opts, Rng& rng) {
    if (m <= 0) throw Error("answer-marginal estimation needs at least one rollout");
    std::map<std::string, double> freq;
    for (int i = 0; i < m; ++i) {
        const Rollout rollout = rollout_episode(ctx, params, instance, opts, rng);
        freq[canonical_answer(rollout.answer)] += 1.0;
    }
    for (auto& [key, count] : freq) count /= static_cast<double>(m);
    return freq;
}

// ---- traces ------------------------------------------------------------------

namespace {

nlohmann::json options_to_json(const RunOptions& opts) {
    return {{"t_max", opts.t_max},
            {"alpha", opts.alpha},
            {"greedy", opts.greedy},
            {"min_steps_before_exit", opts.min_steps_before_exit},
            {"disable_early_exit", opts.disable_early_exit},
            {"allow_revisit", opts.allow_revisit},
            {"memory_capacity", opts.memory.capacity},
            {"memory_token_budget", opts.memory.token_budget},
            {"memory_entry_token_budget", opts.memory.entry_token_budget}};
}

RunOptions options_from_json(const nlohmann::json& j) {
    RunOptions opts;
    opts.t_max = j.at("t_max").get<int>();
    opts.alpha = j.at("alpha").get<double>();
    opts.greedy = j.at("greedy").get<bool>();
    opts.min_steps_before_exit = j.at("min_steps_before_exit").get<int>();
    opts.disable_early_exit = j.at("disable_early_exit").get<bool>();
    opts.allow_revisit = j.at("allow_revisit").get<bool>();
    opts.memory.capacity = j.at("memory_capacity").get<std::size_t>();
    opts.memory.token_budget = j.at("memory_token_budget").get<std::size_t>();
    opts.memory.entry_token_budget = j.at("memory_entry_token_budget").get<std::size_t>();
    return opts;
}

nlohmann::json answer_to_json(const Answer& answer) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [k, v] : answer) arr.push_back({k, v});
    return arr;
}

}  // namespace

std::vector<std::string> TraceRecord::to_lines() const {
    std::vector<std::string> lines;
    lines.push_back(meta.dump());
    for (const nlohmann::json& s : steps) lines.push_back(s.dump());
    lines.push_back(result.dump());
    return lines;
}

InferenceResult run_inference(const EngineContext& ctx, const ParamSet& params,
                              const QueryInstance& instance, const RunOptions& opts, Rng& rng,
                              const TraceInfo& info) {
    const Rollout rollout = rollout_episode(ctx, params, instance, opts, rng);

    InferenceResult result;
    result.answer = rollout.answer;
    result.trajectory = rollout.traj;
    result.total_latency = rollout.total_latency;
    result.total_tokens = rollout.total_tokens;

    result.trace.meta = {{"type", "meta"},
                         {"trace_version", kTraceVersion},
                         {"graph_fingerprint", hex64(ctx.graph.fingerprint())},
                         {"checkpoint_id", info.checkpoint_id},
                         {"seed", info.seed},
                         {"lambda", info.lambda},
                         {"options", options_to_json(opts)},
                         {"instance", instance_to_json(instance)}};

    std::string position = kEntryPosition;
    for (std::size_t i = 0; i < rollout.traj.steps.size(); ++i) {
        const TrajectoryStep& step = rollout.traj.steps[i];
        nlohmann::json sj;
        sj["type"] = "step";
        sj["step"] = i + 1;
        sj["position"] = position;
        nlohmann::json names = nlohmann::json::array();
        for (const Action& a : step.dist.legal.actions) names.push_back(a.name());
        sj["actions"] = names;
        nlohmann::json probs = nlohmann::json::array();
        for (int p = 0; p < step.dist.probs.size(); ++p) probs.push_back(step.dist.probs[p]);
        sj["probs"] = probs;
        sj["chosen"] = step.chosen;
        sj["chosen_action"] = step.action().name();
        sj["chosen_prob"] = step.prob();
        sj["state_digest"] = hex64(step.state_digest);
        if (step.output) {
            sj["latency"] = step.output->latency;
            sj["tokens"] = step.output->tokens;
            sj["degraded"] = step.degraded;
            sj["context_empty"] = step.context_empty;
            position = step.action().container;
        }
        result.trace.steps.push_back(std::move(sj));
    }

    result.trace.result = {
        {"type", "result"},
        {"terminated_by",
         rollout.traj.terminated_by == Termination::EarlyExit ? "early_exit" : "max_steps"},
        {"answer", answer_to_json(rollout.answer)},
        {"total_latency", rollout.total_latency},
        {"total_tokens", rollout.total_tokens},
        {"steps", rollout.traj.steps.size()}};
    return result;
}

void emit_trace(const TraceRecord& trace, std::ostream& sink) {
    for (const std::string& line : trace.to_lines()) sink << line << "\n";
    if (!sink) throw SinkUnavailable("trace sink rejected writes");
}

void emit_trace_file(const TraceRecord& trace, const std::string& path) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw SinkUnavailable("cannot open trace sink '" + path + "'");
    emit_trace(trace, out);
}

// ---- replay ---------------------------------------------------------------------

namespace {

struct ParsedTrace {
    nlohmann::json meta;
    std::vector<nlohmann::json> steps;
    nlohmann::json result;
};

}  // namespace

TraceVerifyReport verify_traces(std::istream& in, const EngineContext& ctx, const ParamSet& params,
                                double tol) {
    TraceVerifyReport report;
    std::vector<ParsedTrace> traces;
    ParsedTrace current;
    bool open = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            report.mismatches.push_back("line " + std::to_string(lineno) + ": unparseable JSON");
            continue;
        }
        const std::string type = j.value("type", "");
        if (type == "meta") {
            if (open) report.mismatches.push_back("trace before line " + std::to_string(lineno) +
                                                  " has no result record");
            current = ParsedTrace{};
            current.meta = std::move(j);
            open = true;
        } else if (type == "step") {
            if (open) current.steps.push_back(std::move(j));
        } else if (type == "result") {
            if (open) {
                current.result = std::move(j);
                traces.push_back(std::move(current));
                open = false;
            }
        }
    }
    if (open) report.mismatches.push_back("final trace has no result record");

    for (std::size_t ti = 0; ti < traces.size(); ++ti) {
        const ParsedTrace& trace = traces[ti];
        const std::string label = "trace " + std::to_string(ti);
        auto fail = [&](const std::string& msg) { report.mismatches.push_back(label + ": " + msg); };

        const int version = trace.meta.value("trace_version", -1);
        if (version != kTraceVersion) {
            fail("unsupported trace_version " + std::to_string(version));
            continue;
        }
        if (trace.meta.value("graph_fingerprint", "") != hex64(ctx.graph.fingerprint())) {
            fail("graph fingerprint differs from the loaded graph");
            continue;
        }

        RunOptions opts;
        QueryInstance instance;
        try {
            opts = options_from_json(trace.meta.at("options"));
            instance = instance_from_json(trace.meta.at("instance"));
        } catch (const std::exception& e) {
            fail(std::string("bad meta record: ") + e.what());
            continue;
        }

        const Summarizer summarizer = template_summarizer(opts.memory.entry_token_budget);
        State state{instance.query, instance.image, instance.context, Memory{opts.memory},
                    kEntryPosition};
        std::vector<std::string> visited;
        ++report.traces_checked;

        for (std::size_t si = 0; si < trace.steps.size(); ++si) {
            const nlohmann::json& sj = trace.steps[si];
            const int t = static_cast<int>(si) + 1;
            const OrderedActionSet legal =
                runtime_legal_actions(ctx.graph, state.position, opts, t, visited);
            ActionDistribution dist;
            try {
                dist = action_distribution(encode_state(state, ctx.extractors, params.enc), legal,
                                           params.head, opts.alpha);
            } catch (const std::exception& e) {
                fail("step " + std::to_string(t) + ": replay failed: " + e.what());
                break;
            }

            const auto& logged_actions = sj.at("actions");
            if (logged_actions.size() != legal.actions.size()) {
                fail("step " + std::to_string(t) + ": legal-set size " +
                     std::to_string(legal.actions.size()) + " != logged " +
                     std::to_string(logged_actions.size()));
                break;
            }
            bool mismatch = false;
            for (std::size_t ai = 0; ai < legal.actions.size(); ++ai) {
                if (logged_actions[ai].get<std::string>() != legal.actions[ai].name()) {
                    fail("step " + std::to_string(t) + ": action order differs at index " +
                         std::to_string(ai));
                    mismatch = true;
                    break;
                }
            }
            if (mismatch) break;

            const auto& logged_probs = sj.at("probs");
            for (std::size_t pi = 0; pi < legal.actions.size(); ++pi) {
                const double logged = logged_probs[pi].get<double>();
                const double replayed = dist.probs[static_cast<int>(pi)];
                if (std::abs(logged - replayed) > tol) {
                    fail("step " + std::to_string(t) + ": probability of '" +
                         legal.actions[pi].name() + "' replayed " + format_double(replayed) +
                         " vs logged " + format_double(logged));
                    mismatch = true;
                    break;
                }
            }
            if (mismatch) break;
            ++report.steps_checked;

            const int chosen = sj.at("chosen").get<int>();
            if (chosen < 0 || chosen >= static_cast<int>(legal.actions.size())) {
                fail("step " + std::to_string(t) + ": chosen index out of range");
                break;
            }
            const Action action = legal.actions[static_cast<std::size_t>(chosen)];
            if (action.is_exit()) break;
            apply_invoke(ctx.graph, ctx.registry, state, action, t, summarizer);
            visited.push_back(action.container);
        }
    }
    return report;
}

TraceVerifyReport verify_trace_file(const std::string& path, const EngineContext& ctx,
                                    const ParamSet& params, double tol) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trace file '" + path + "'");
    return verify_traces(in, ctx, params, tol);
}

}  // namespace toolflow
