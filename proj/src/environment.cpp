#include "toolflow/environment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace toolflow {

namespace {

constexpr int kGridWidth = 8;
constexpr int kGridHeight = 8;

const std::vector<std::string>& vocab_for(ContainerType t) {
    static const std::map<ContainerType, std::vector<std::string>> vocab = {
        {ContainerType::Classify,
         {"pneumonia", "effusion", "nodule", "atelectasis", "cardiomegaly", "no-acute-disease"}},
        {ContainerType::Grounding,
         {"left-upper", "left-lower", "right-upper", "right-lower", "central"}},
        {ContainerType::VQAnalyze, {"mild", "moderate", "severe", "minimal"}},
        {ContainerType::Report, {"stable", "improving", "worsening", "critical", "unremarkable"}},
        {ContainerType::GuidelineLookup,
         {"follow-up-3mo", "ct-confirm", "no-action", "urgent-review"}},
        {ContainerType::MKG, {"copd", "chf", "tuberculosis", "fibrosis", "unlinked"}},
    };
    return vocab.at(t);
}

int grid_row(ContainerType t) { return static_cast<int>(t); }

// Planted category code for this study, read back from the feature grid.
int decode_code(const ImageBlock& img, ContainerType t, int vocab_size) {
    if (img.empty() || img.height <= grid_row(t)) return 0;
    const double raw = img.data[static_cast<std::size_t>(grid_row(t) * img.width)];
    int code = static_cast<int>(std::lround(raw)) - 1;
    return std::clamp(code, 0, vocab_size - 1);
}

// Fidelity gate: below-1 fidelity drops a fixed pseudo-random study subset.
bool tool_informative(const ToolSpec& spec, std::uint64_t study_nonce) {
    if (spec.fidelity >= 1.0) return true;
    const std::uint64_t h = mix64(fnv1a64(spec.id), study_nonce);
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u < spec.fidelity;
}

Payload record_payload(const ToolSpec& spec, const ToolInput& input, double confidence) {
    Payload p;
    p.kind = PayloadKind::Record;
    p.source = to_string(spec.ctype);
    if (!tool_informative(spec, input.roi_image.nonce)) return p;
    const auto& vocab = vocab_for(spec.ctype);
    const int code = decode_code(input.roi_image, spec.ctype, static_cast<int>(vocab.size()));
    p.fields.emplace_back(answer_key_for(spec.ctype), vocab[static_cast<std::size_t>(code)]);
    p.metrics.emplace_back("prob", confidence);
    return p;
}

Payload mask_payload(const ToolSpec& spec, const ToolInput& input) {
    Payload p;
    p.kind = PayloadKind::Image;
    p.source = to_string(spec.ctype);
    if (!tool_informative(spec, input.roi_image.nonce)) return p;
    int area = 10;
    if (!input.roi_image.empty()) {
        const double raw =
            input.roi_image.data[static_cast<std::size_t>(grid_row(spec.ctype) * input.roi_image.width)];
        area = std::clamp(static_cast<int>(std::lround(raw)), 10, 99);
    }
    ImageBlock mask;
    mask.width = 4;
    mask.height = 4;
    mask.nonce = input.roi_image.nonce;
    mask.data.resize(16);
    for (int i = 0; i < 16; ++i) mask.data[static_cast<std::size_t>(i)] = (i < area % 16 + 1) ? 1.0 : 0.0;
    p.image = std::move(mask);
    p.metrics.emplace_back("mask_area", static_cast<double>(area));
    return p;
}

ToolSpec make_sim_tool(ContainerType ctype, bool pro, double latency, long tokens) {
    ToolSpec spec;
    std::string label = to_string(ctype);
    std::transform(label.begin(), label.end(), label.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    spec.id = label + (pro ? "_pro" : "_lite");
    spec.ctype = ctype;
    spec.fidelity = pro ? 1.0 : 0.7;
    spec.latency = latency;
    spec.tokens = tokens;
    if (!pro) spec.hyperparams["threshold"] = 0.5;
    const double confidence = pro ? 0.97 : 0.82;
    if (ctype == ContainerType::Segmentation) {
        spec.behavior = [](const ToolSpec& s, const ToolInput& in) { return mask_payload(s, in); };
    } else {
        spec.behavior = [confidence](const ToolSpec& s, const ToolInput& in) {
            return record_payload(s, in, confidence);
        };
    }
    return spec;
}

const std::vector<ContainerType>& all_types() {
    static const std::vector<ContainerType> types = {
        ContainerType::Segmentation,   ContainerType::Classify, ContainerType::Grounding,
        ContainerType::VQAnalyze,      ContainerType::MKG,      ContainerType::GuidelineLookup,
        ContainerType::Report,
    };
    return types;
}

}  // namespace

const std::string& answer_key_for(ContainerType t) {
    static const std::map<ContainerType, std::string> keys = {
        {ContainerType::Segmentation, "mask_area"},
        {ContainerType::Classify, "finding"},
        {ContainerType::Grounding, "region"},
        {ContainerType::VQAnalyze, "severity"},
        {ContainerType::Report, "impression"},
        {ContainerType::GuidelineLookup, "recommendation"},
        {ContainerType::MKG, "related_condition"},
    };
    return keys.at(t);
}

bool requires_context(ContainerType t) {
    return t == ContainerType::Report || t == ContainerType::GuidelineLookup ||
           t == ContainerType::MKG;
}

ToolRegistry default_registry() {
    ToolRegistry reg;
    reg.register_tool(make_sim_tool(ContainerType::Segmentation, true, 2.5, 20));
    reg.register_tool(make_sim_tool(ContainerType::Segmentation, false, 1.0, 8));
    reg.register_tool(make_sim_tool(ContainerType::Classify, true, 2.0, 30));
    reg.register_tool(make_sim_tool(ContainerType::Classify, false, 0.8, 12));
    reg.register_tool(make_sim_tool(ContainerType::Grounding, true, 2.2, 25));
    reg.register_tool(make_sim_tool(ContainerType::Grounding, false, 0.9, 10));
    reg.register_tool(make_sim_tool(ContainerType::VQAnalyze, true, 2.4, 35));
    reg.register_tool(make_sim_tool(ContainerType::VQAnalyze, false, 1.0, 14));
    reg.register_tool(make_sim_tool(ContainerType::MKG, true, 2.0, 28));
    reg.register_tool(make_sim_tool(ContainerType::MKG, false, 0.8, 11));
    reg.register_tool(make_sim_tool(ContainerType::GuidelineLookup, true, 1.8, 22));
    reg.register_tool(make_sim_tool(ContainerType::GuidelineLookup, false, 0.7, 9));
    reg.register_tool(make_sim_tool(ContainerType::Report, true, 3.0, 45));
    reg.register_tool(make_sim_tool(ContainerType::Report, false, 1.2, 18));
    return reg;
}

nlohmann::json standard_graph_doc() {
    nlohmann::json doc;
    doc["containers"] = nlohmann::json::array();
    std::vector<std::string> ids;
    for (ContainerType t : all_types()) {
        std::string label = to_string(t);
        std::string lower = label;
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        doc["containers"].push_back(
            {{"id", label},
             {"ctype", label},
             {"tools", {lower + "_pro", lower + "_lite"}}});
        ids.push_back(label);
    }
    // Dense forward edges in rank order keep every multi-step plan walkable.
    std::vector<std::string> by_rank = ids;
    std::sort(by_rank.begin(), by_rank.end(), [](const std::string& a, const std::string& b) {
        return container_rank(parse_container_type(a)) < container_rank(parse_container_type(b));
    });
    doc["edges"] = nlohmann::json::array();
    for (std::size_t i = 0; i < by_rank.size(); ++i) {
        for (std::size_t j = i + 1; j < by_rank.size(); ++j) {
            doc["edges"].push_back({{"from", by_rank[i]}, {"to", by_rank[j]}, {"routing", "all"}});
        }
    }
    doc["entry"] = ids;
    return doc;
}

ToolSpec make_identity_tool(std::string id, ContainerType ctype, double latency, long tokens) {
    if (declared_payload_kind(ctype) != PayloadKind::Record) {
        throw Error("identity tools must belong to a record-producing category");
    }
    ToolSpec spec;
    spec.id = std::move(id);
    spec.ctype = ctype;
    spec.latency = latency;
    spec.tokens = tokens;
    spec.behavior = [](const ToolSpec& s, const ToolInput& in) {
        Payload p;
        p.kind = PayloadKind::Record;
        p.source = to_string(s.ctype);
        p.fields.emplace_back("echo", in.sub_query);
        if (!in.context_slice.empty()) p.fields.emplace_back("context", in.context_slice);
        return p;
    };
    return spec;
}

// ---- suite generation -------------------------------------------------------

namespace {

// Record-producing containers reachable one edge onward (or at entry).
std::vector<std::string> plan_candidates(const SupernetGraph& graph, const std::string& position,
                                         const std::set<ContainerType>& used) {
    std::vector<std::string> out;
    auto consider = [&](const std::string& cid) {
        const ContainerType t = graph.ctype_of(cid);
        if (declared_payload_kind(t) != PayloadKind::Record) return;
        if (used.count(t)) return;
        out.push_back(cid);
    };
    if (position == kEntryPosition) {
        for (const std::string& cid : graph.entry_successors()) consider(cid);
    } else {
        for (int ei : graph.out_edges(position)) consider(graph.edges()[ei].to);
    }
    return out;
}

std::vector<PlanItem> sample_plan(const SupernetGraph& graph, Rng& rng, int want_len, bool simple,
                                  bool safety) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<PlanItem> plan;
        std::set<ContainerType> used;
        std::string position = kEntryPosition;
        while (static_cast<int>(plan.size()) < want_len) {
            std::vector<std::string> cands = plan_candidates(graph, position, used);
            if (simple) {
                std::vector<std::string> filtered;
                for (const std::string& cid : cands) {
                    if (!requires_context(graph.ctype_of(cid))) filtered.push_back(cid);
                }
                if (!filtered.empty()) cands = std::move(filtered);
            }
            if (cands.empty()) break;
            const std::string pick =
                cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)];
            const ContainerType t = graph.ctype_of(pick);
            plan.push_back(PlanItem{t, answer_key_for(t)});
            used.insert(t);
            position = pick;
        }
        if (static_cast<int>(plan.size()) != want_len) continue;
        if (safety && !used.count(ContainerType::GuidelineLookup)) continue;
        return plan;
    }
    return {};
}

std::string make_query(const std::vector<PlanItem>& plan) {
    std::string q = "Assess";
    for (std::size_t i = 0; i < plan.size(); ++i) {
        q += (i == 0) ? " " : (i + 1 == plan.size() ? " and " : ", ");
        q += plan[i].key;
    }
    q += " for this study.";
    return q;
}

std::string make_context(Rng& rng) {
    static const std::vector<std::string> sexes = {"male", "female"};
    static const std::vector<std::string> histories = {"smoker", "diabetic", "asthma", "none",
                                                       "hypertension"};
    const int age = 20 + static_cast<int>(rng() % 70);
    const std::string& sex = sexes[rng() % sexes.size()];
    const std::string& hist = histories[rng() % histories.size()];
    return "patient age " + std::to_string(age) + " " + sex + "; history: " + hist + ".";
}

}  // namespace

std::vector<QueryInstance> generate_suite(const SupernetGraph& graph, const ToolRegistry& registry,
                                          const SuiteConfig& config) {
    if (config.n_instances <= 0) throw ConfigError("suite size must be positive");
    if (config.plan_len_min < 1 || config.plan_len_max < config.plan_len_min) {
        throw ConfigError("invalid plan length range");
    }

    std::vector<QueryInstance> suite;
    suite.reserve(static_cast<std::size_t>(config.n_instances));
    for (int i = 0; i < config.n_instances; ++i) {
        const std::uint64_t inst_seed = mix64(config.seed, static_cast<std::uint64_t>(i));
        Rng rng = make_rng(inst_seed, 0x696e7374);

        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const bool simple = config.plan_len_min == 1 && unit(rng) < config.simple_fraction;
        const bool safety = !simple && unit(rng) < config.safety_fraction;
        int want_len = simple ? 1
                              : static_cast<int>(std::uniform_int_distribution<int>(
                                    config.plan_len_min, config.plan_len_max)(rng));
        if (safety) want_len = std::max(want_len, 2);

        std::vector<PlanItem> plan = sample_plan(graph, rng, want_len, simple, safety);
        if (plan.empty()) plan = sample_plan(graph, rng, 1, false, false);
        if (plan.empty()) {
            throw PlanNotRealizable("graph offers no record-producing path for suite generation");
        }

        QueryInstance inst;
        inst.id = "inst-" + std::to_string(i);
        inst.seed = inst_seed;
        inst.safety_critical =
            std::any_of(plan.begin(), plan.end(), [](const PlanItem& p) {
                return p.ctype == ContainerType::GuidelineLookup;
            });
        inst.required_plan = plan;
        inst.query = make_query(plan);
        inst.context = make_context(rng);

        // Plant a code for every category; tools decode their own row.
        inst.image.width = kGridWidth;
        inst.image.height = kGridHeight;
        inst.image.nonce = mix64(inst_seed, 0x6e6f6e6365);
        inst.image.data.assign(static_cast<std::size_t>(kGridWidth * kGridHeight), 0.0);
        std::uniform_real_distribution<double> noise(-1.0, 1.0);
        for (double& cell : inst.image.data) cell = noise(rng);
        std::map<ContainerType, std::string> planted;
        for (ContainerType t : all_types()) {
            if (t == ContainerType::Segmentation) {
                const int area = 10 + static_cast<int>(rng() % 90);
                inst.image.data[static_cast<std::size_t>(grid_row(t) * kGridWidth)] =
                    static_cast<double>(area);
                planted[t] = std::to_string(area);
            } else {
                const auto& vocab = vocab_for(t);
                const int code = static_cast<int>(rng() % vocab.size());
                inst.image.data[static_cast<std::size_t>(grid_row(t) * kGridWidth)] =
                    static_cast<double>(code + 1);
                planted[t] = vocab[static_cast<std::size_t>(code)];
            }
        }
        for (const PlanItem& item : plan) {
            inst.truth.answer_fields.emplace_back(item.key, planted[item.ctype]);
        }

        suite.push_back(std::move(inst));
    }

    if (config.self_check) {
        const Summarizer summarizer = template_summarizer(MemoryConfig{}.entry_token_budget);
        for (const QueryInstance& inst : suite) {
            State state{inst.query, inst.image, inst.context, Memory{MemoryConfig{}}, kEntryPosition};
            Trajectory traj;
            for (std::size_t t = 1; t <= inst.required_plan.size() + 1; ++t) {
                const Action a = expert_action(state, inst, graph, registry);
                if (a.is_exit()) break;
                TrajectoryStep step;
                step.chosen = 0;
                step.dist.legal.actions = {a};
                step.dist.legal.global_indices = {graph.global_index(a)};
                step.dist.probs = Vec::Ones(1);
                const StepEffect effect = apply_invoke(graph, registry, state, a,
                                                       static_cast<long>(t), summarizer);
                step.output = effect.output;
                step.context_empty = effect.context_empty;
                traj.steps.push_back(std::move(step));
            }
            const Answer answer = synthesize_answer(traj, inst);
            if (utility(answer, inst.truth) != 1.0) {
                throw Error("suite self-check failed for " + inst.id +
                            ": the expert walk does not reproduce the reference answer");
            }
        }
    }
    return suite;
}

// ---- serialization -----------------------------------------------------------

nlohmann::json instance_to_json(const QueryInstance& inst) {
    nlohmann::json j;
    j["id"] = inst.id;
    j["seed"] = inst.seed;
    j["query"] = inst.query;
    j["context"] = inst.context;
    j["image"] = {{"width", inst.image.width},
                  {"height", inst.image.height},
                  {"nonce", inst.image.nonce},
                  {"data", inst.image.data}};
    j["truth"] = nlohmann::json::array();
    for (const auto& [k, v] : inst.truth.answer_fields) j["truth"].push_back({k, v});
    j["plan"] = nlohmann::json::array();
    for (const PlanItem& item : inst.required_plan) {
        j["plan"].push_back({to_string(item.ctype), item.key});
    }
    j["safety_critical"] = inst.safety_critical;
    return j;
}

QueryInstance instance_from_json(const nlohmann::json& j) {
    QueryInstance inst;
    inst.id = j.at("id").get<std::string>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.query = j.at("query").get<std::string>();
    inst.context = j.at("context").get<std::string>();
    inst.image.width = j.at("image").at("width").get<int>();
    inst.image.height = j.at("image").at("height").get<int>();
    inst.image.nonce = j.at("image").at("nonce").get<std::uint64_t>();
    inst.image.data = j.at("image").at("data").get<std::vector<double>>();
    for (const auto& pair : j.at("truth")) {
        inst.truth.answer_fields.emplace_back(pair.at(0).get<std::string>(),
                                              pair.at(1).get<std::string>());
    }
    for (const auto& pair : j.at("plan")) {
        inst.required_plan.push_back(PlanItem{parse_container_type(pair.at(0).get<std::string>()),
                                              pair.at(1).get<std::string>()});
    }
    inst.safety_critical = j.at("safety_critical").get<bool>();
    return inst;
}

void save_suite(const std::string& path, const std::vector<QueryInstance>& suite) {
    std::ofstream out(path);
    if (!out) throw SinkUnavailable("cannot open suite file '" + path + "' for writing");
    for (const QueryInstance& inst : suite) out << instance_to_json(inst).dump() << "\n";
}

std::vector<QueryInstance> load_suite(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open suite file '" + path + "'");
    std::vector<QueryInstance> suite;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        suite.push_back(instance_from_json(nlohmann::json::parse(line)));
    }
    return suite;
}

// ---- scoring ------------------------------------------------------------------

double utility(const Answer& answer, const GroundTruth& truth) {
    if (answer.empty() && truth.answer_fields.empty()) return 1.0;
    if (answer.empty() || truth.answer_fields.empty()) return 0.0;
    std::map<std::string, std::string> canon_truth;
    for (const auto& [k, v] : truth.answer_fields) {
        canon_truth[canonicalize_text(k)] = canonicalize_text(v);
    }
    int tp = 0;
    std::set<std::string> counted;
    for (const auto& [k, v] : answer) {
        const std::string ck = canonicalize_text(k);
        if (!counted.insert(ck).second) continue;
        auto it = canon_truth.find(ck);
        if (it != canon_truth.end() && it->second == canonicalize_text(v)) ++tp;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(answer.size());
    const double recall = static_cast<double>(tp) / static_cast<double>(canon_truth.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::string canonical_answer(const Answer& answer) {
    std::map<std::string, std::string> sorted;
    for (const auto& [k, v] : answer) sorted[canonicalize_text(k)] = canonicalize_text(v);
    std::string out;
    for (const auto& [k, v] : sorted) {
        if (!out.empty()) out.push_back(';');
        out += k;
        out.push_back('=');
        out += v;
    }
    return out;
}

namespace {

std::size_t lcs_length(const std::vector<ContainerType>& a, const std::vector<ContainerType>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

double heuristic_reward(const Trajectory& traj, const QueryInstance& instance,
                        const HeuristicSpec& spec, const SupernetGraph& graph, int t_max) {
    std::vector<ContainerType> required;
    for (const PlanItem& item : instance.required_plan) required.push_back(item.ctype);
    std::vector<ContainerType> visited;
    int incoherent = 0;
    int invokes = 0;
    for (const TrajectoryStep& step : traj.steps) {
        if (step.action().is_exit()) continue;
        const ContainerType t = graph.ctype_of(step.action().container);
        visited.push_back(t);
        ++invokes;
        if (requires_context(t) && step.context_empty) ++incoherent;
    }

    const double compliance =
        required.empty() ? 1.0
                         : static_cast<double>(lcs_length(required, visited)) /
                               static_cast<double>(required.size());
    const double coherence =
        invokes == 0 ? 1.0 : 1.0 - static_cast<double>(incoherent) / static_cast<double>(invokes);
    const double brevity =
        t_max <= 0 ? 1.0
                   : 1.0 - static_cast<double>(traj.length()) / static_cast<double>(t_max);

    return spec.w_compliance * compliance + spec.w_coherence * coherence + spec.w_brevity * brevity;
}

// ---- costs ---------------------------------------------------------------------

double step_cost(const ToolOutput& output, const CostWeights& weights) {
    return weights.latency * output.latency + weights.tokens * static_cast<double>(output.tokens);
}

double max_step_cost(const ToolRegistry& registry, const CostWeights& weights) {
    double best = 0.0;
    for (const std::string& id : registry.ids()) {
        const ToolSpec& spec = registry.at(id);
        best = std::max(best, weights.latency * spec.latency +
                                  weights.tokens * static_cast<double>(spec.tokens));
    }
    return best;
}

double cost_normalizer(const ToolRegistry& registry, int t_max, const CostWeights& weights) {
    if (t_max <= 0) return 1.0;
    const double peak = max_step_cost(registry, weights);
    return peak > 0.0 ? static_cast<double>(t_max) * peak : 1.0;
}

double trajectory_cost(const Trajectory& traj, const CostWeights& weights) {
    double total = 0.0;
    for (const TrajectoryStep& step : traj.steps) {
        if (step.output) total += step_cost(*step.output, weights);
    }
    return total;
}

// ---- expert and synthesis --------------------------------------------------------

Action expert_action(const State& state, const QueryInstance& instance, const SupernetGraph& graph,
                     const ToolRegistry& registry) {
    // Progress = longest plan prefix witnessed by informative memory entries.
    std::size_t next = 0;
    for (const MemoryEntry& entry : state.memory.entries()) {
        if (next >= instance.required_plan.size()) break;
        if (entry.summary.empty() || entry.container_id == kMemoryDigestId) continue;
        if (!graph.has_container(entry.container_id)) continue;
        if (graph.ctype_of(entry.container_id) == instance.required_plan[next].ctype) ++next;
    }
    if (next >= instance.required_plan.size()) return Action::early_exit();

    const ContainerType need = instance.required_plan[next].ctype;
    const OrderedActionSet legal = legal_actions(graph, state.position);
    std::string chosen_container;
    std::string chosen_tool;
    double chosen_fidelity = -1.0;
    for (const Action& a : legal.actions) {
        if (a.is_exit()) continue;
        if (graph.ctype_of(a.container) != need) continue;
        if (chosen_container.empty()) chosen_container = a.container;
        if (a.container != chosen_container) continue;
        const double f = registry.at(a.tool).fidelity;
        if (f > chosen_fidelity) {
            chosen_fidelity = f;
            chosen_tool = a.tool;
        }
    }
    if (chosen_container.empty()) {
        throw PlanNotRealizable("no container of type " + to_string(need) +
                                " is reachable from position '" +
                                (state.position.empty() ? std::string("<entry>") : state.position) +
                                "'");
    }
    return Action::invoke(chosen_container, chosen_tool);
}

Answer synthesize_answer(const Trajectory& traj, const QueryInstance& instance) {
    (void)instance;  // synthesis depends only on gathered evidence
    Answer answer;
    for (const TrajectoryStep& step : traj.steps) {
        if (!step.output) continue;
        for (const auto& [k, v] : step.output->payload.fields) {
            bool replaced = false;
            for (auto& [ak, av] : answer) {
                if (ak == k) {
                    av = v;
                    replaced = true;
                    break;
                }
            }
            if (!replaced) answer.emplace_back(k, v);
        }
    }
    return answer;
}

// ---- shared step transition ------------------------------------------------------

StepEffect apply_invoke(const SupernetGraph& graph, const ToolRegistry& registry, State& state,
                        const Action& action, long step, const Summarizer& summarizer) {
    if (action.kind != Action::Kind::Invoke) throw Error("apply_invoke requires an Invoke action");

    StepEffect effect;
    ToolInput input;
    if (state.position == kEntryPosition) {
        input = entry_payload(state.view());
    } else {
        const Edge* edge = nullptr;
        for (int ei : graph.out_edges(state.position)) {
            if (graph.edges()[static_cast<std::size_t>(ei)].to == action.container) {
                edge = &graph.edges()[static_cast<std::size_t>(ei)];
                break;
            }
        }
        if (edge == nullptr) {
            throw UnknownPosition("no edge from '" + state.position + "' to '" + action.container +
                                  "'");
        }
        try {
            input = route_payload(*edge, state.view());
        } catch (const RoutingFieldMissing&) {
            input = entry_payload(state.view());  // degrade to empty context
            effect.routing_fault = true;
        }
    }
    effect.context_empty = input.context_slice.empty();

    const ToolSpec& spec = registry.at(action.tool);
    try {
        effect.output = execute_tool(action, input, registry);
    } catch (const ToolFailure&) {
        Payload empty;
        empty.kind = declared_payload_kind(spec.ctype);
        empty.source = to_string(spec.ctype);
        effect.output = ToolOutput{std::move(empty), spec.latency, spec.tokens, true};
    }

    MemoryEntry entry;
    entry.container_id = action.container;
    entry.summary = summarize(effect.output, summarizer, state.memory.config().entry_token_budget);
    if (effect.output.payload.kind == PayloadKind::Image && !effect.output.payload.image.empty()) {
        entry.image_ref = effect.output.payload.image;
    }
    entry.step = step;
    state.memory.append(std::move(entry));
    state.position = action.container;
    return effect;
}

}  // namespace toolflow
