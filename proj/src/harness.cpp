#include "toolflow/harness.hpp"

#include "toolflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <utility>

namespace toolflow {

namespace {

std::vector<QueryInstance> build_suite(const RunConfig& config, const SupernetGraph& graph,
                                       const ToolRegistry& registry, const std::string& path,
                                       int n, std::uint64_t seed) {
    if (!path.empty()) {
        return load_suite(path);
    }
    SuiteConfig sc;
    sc.n_instances = n;
    sc.seed = seed;
    sc.plan_len_min = config.plan_len_min;
    sc.plan_len_max = config.plan_len_max;
    sc.simple_fraction = config.simple_fraction;
    sc.safety_fraction = config.safety_fraction;
    return generate_suite(graph, registry, sc);
}

}  // namespace

RunSetup make_setup(const RunConfig& config) {
    RunSetup setup;
    setup.config = config;
    setup.registry = default_registry();
    if (config.graph == "builtin:standard") {
        setup.graph = build_graph(standard_graph_doc(), setup.registry);
    } else {
        setup.graph = load_graph_file(config.graph, setup.registry);
    }
    setup.extractors = default_extractors(config.feature_dim);
    setup.train_suite = build_suite(config, setup.graph, setup.registry, config.train_suite_path,
                                    config.train_instances, config.suite_seed);
    setup.eval_suite = build_suite(config, setup.graph, setup.registry, config.eval_suite_path,
                                   config.eval_instances, config.suite_seed + 1);
    return setup;
}

RunOptions eval_options(const RunConfig& config) {
    RunOptions opts;
    opts.t_max = config.t_max;
    opts.alpha = config.eval_alpha;
    opts.greedy = false;
    opts.min_steps_before_exit = config.min_steps_before_exit;
    opts.disable_early_exit = config.disable_early_exit;
    opts.memory.capacity = static_cast<std::size_t>(config.memory_capacity);
    opts.memory.token_budget = static_cast<std::size_t>(config.memory_token_budget);
    opts.memory.entry_token_budget = static_cast<std::size_t>(config.memory_entry_budget);
    return opts;
}

RunOptions train_options(const RunConfig& config) {
    // Same episode surface; the curriculum overrides alpha per update.
    return eval_options(config);
}

CostWeights cost_weights_of(const RunConfig& config) {
    return CostWeights{config.cost_latency_weight, config.cost_token_weight};
}

double suite_cost_normalizer(const RunConfig& config, const ToolRegistry& registry) {
    return cost_normalizer(registry, config.t_max, cost_weights_of(config));
}

CurriculumConfig curriculum_config(const RunConfig& config, const ToolRegistry& registry,
                                   std::optional<double> lambda_override) {
    CurriculumConfig cc;
    cc.phases.bc_steps = config.bc_steps;
    cc.phases.bc_batch = config.bc_batch;
    cc.phases.cpr_steps = config.cpr_steps;
    cc.phases.cpr_k = config.cpr_k;
    cc.phases.rl_episodes = config.rl_episodes;
    cc.optim.lr_bc = config.lr_bc;
    cc.optim.lr_cpr = config.lr_cpr;
    cc.optim.lr_rl = config.lr_rl;
    cc.optim.weight_decay = config.weight_decay;
    cc.optim.clip_norm = config.clip_norm;
    cc.temp.start = config.temp_start;
    cc.temp.end = config.temp_end;
    cc.temp.total_steps =
        config.temp_total_steps > 0 ? config.temp_total_steps : std::max(cc.phases.total(), 1L);
    cc.reward.lambda = lambda_override.value_or(config.lambda);
    cc.reward.gamma = config.gamma;
    cc.reward.entropy_rollouts = config.entropy_rollouts;
    cc.reward.cost_weights = cost_weights_of(config);
    cc.reward.cost_norm = suite_cost_normalizer(config, registry);
    cc.reward.entropy_bonus = config.entropy_bonus;
    cc.reward.alpha_cpr = config.alpha_cpr;
    cc.heuristic.w_compliance = config.w_compliance;
    cc.heuristic.w_coherence = config.w_coherence;
    cc.heuristic.w_brevity = config.w_brevity;
    cc.run = train_options(config);
    cc.report_every = config.report_every;
    return cc;
}

CurriculumResult train_policy(const RunSetup& setup, std::optional<double> lambda_override) {
    const EngineContext ctx = setup.context();
    const CurriculumConfig cc = curriculum_config(setup.config, setup.registry, lambda_override);
    const std::vector<ExpertPair> pairs = collect_expert_pairs(ctx, setup.train_suite, cc.run);
    TrainState state = init_train_state(ctx, setup.config.feature_dim, setup.config.hidden_dim,
                                        setup.config.seed, setup.config.weight_decay);
    return run_curriculum(ctx, setup.train_suite, pairs, cc, std::move(state));
}

// ---- evaluation -------------------------------------------------------------

EvalMetrics evaluate(const EngineContext& ctx, const ParamSet& params,
                     const std::vector<QueryInstance>& suite, const RunOptions& opts,
                     std::uint64_t eval_seed, const CostWeights& weights, double cost_norm,
                     std::ostream* trace_sink, const TraceInfo& info,
                     std::vector<InstanceOutcome>* outcomes) {
    if (suite.empty()) {
        throw EmptySuite("evaluation suite is empty");
    }
    const double norm = cost_norm > 0.0 ? cost_norm : 1.0;
    EvalMetrics m;
    for (const QueryInstance& instance : suite) {
        const std::uint64_t stream = fnv1a64(instance.id);
        Rng rng = make_rng(eval_seed, stream);
        TraceInfo ti = info;
        ti.seed = mix64(eval_seed, stream);
        const InferenceResult result = run_inference(ctx, params, instance, opts, rng, ti);

        InstanceOutcome outcome;
        outcome.id = instance.id;
        outcome.utility = utility(result.answer, instance.truth);
        outcome.exact = outcome.utility >= 1.0 - 1e-12;
        outcome.cost = trajectory_cost(result.trajectory, weights) / norm;
        outcome.length = static_cast<int>(result.trajectory.length());
        outcome.early_exit = result.trajectory.ends_with_exit();

        m.mean_utility += outcome.utility;
        m.accuracy += outcome.exact ? 1.0 : 0.0;
        m.mean_cost += outcome.cost;
        m.mean_length += static_cast<double>(outcome.length);
        m.early_exit_rate += outcome.early_exit ? 1.0 : 0.0;
        ++m.n;

        if (trace_sink != nullptr) {
            emit_trace(result.trace, *trace_sink);
        }
        if (outcomes != nullptr) {
            outcomes->push_back(std::move(outcome));
        }
    }
    const double n = static_cast<double>(m.n);
    m.accuracy /= n;
    m.mean_utility /= n;
    m.mean_cost /= n;
    m.mean_length /= n;
    m.early_exit_rate /= n;
    return m;
}

// ---- reports ------------------------------------------------------------------

void write_csv(const std::string& path, const std::vector<std::string>& echo_lines,
               const std::string& header, const std::vector<std::string>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw SinkUnavailable("cannot open report file '" + path + "' for writing");
    }
    for (const std::string& line : echo_lines) {
        out << line << '\n';
    }
    out << header << '\n';
    for (const std::string& row : rows) {
        out << row << '\n';
    }
    if (!out) {
        throw SinkUnavailable("failed while writing report file '" + path + "'");
    }
}

std::string metrics_csv_row(const EvalMetrics& m) {
    return format_double(m.accuracy) + "," + format_double(m.mean_utility) + "," +
           format_double(m.mean_cost) + "," + format_double(m.mean_length) + "," +
           format_double(m.early_exit_rate) + "," + std::to_string(m.n);
}

std::vector<std::string> instance_csv_rows(const std::vector<InstanceOutcome>& outcomes) {
    std::vector<std::string> rows;
    rows.reserve(outcomes.size());
    for (const InstanceOutcome& o : outcomes) {
        rows.push_back(o.id + "," + format_double(o.utility) + "," + (o.exact ? "1" : "0") + "," +
                       format_double(o.cost) + "," + std::to_string(o.length) + "," +
                       (o.early_exit ? "1" : "0"));
    }
    return rows;
}

// ---- cost sweep ----------------------------------------------------------------

namespace {

std::vector<double> dedupe_grid(const std::vector<double>& grid, std::ostream* log) {
    std::vector<double> unique;
    for (double lambda : grid) {
        if (std::find(unique.begin(), unique.end(), lambda) != unique.end()) {
            if (log != nullptr) {
                (*log) << "warning: duplicate lambda " << format_double(lambda)
                       << " dropped from the sweep grid\n";
            }
            continue;
        }
        unique.push_back(lambda);
    }
    return unique;
}

}  // namespace

std::vector<ParetoPoint> pareto_sweep(const RunConfig& config, std::ostream* log) {
    RunSetup setup = make_setup(config);
    const EngineContext ctx = setup.context();
    const std::vector<double> grid = dedupe_grid(config.lambda_grid, log);
    const CostWeights weights = cost_weights_of(config);
    const double norm = suite_cost_normalizer(config, setup.registry);
    const RunOptions eopts = eval_options(config);

    const CurriculumConfig base_cc = curriculum_config(config, setup.registry);
    const std::vector<ExpertPair> pairs = collect_expert_pairs(ctx, setup.train_suite, base_cc.run);

    std::vector<ParetoPoint> points;
    for (int s = 0; s < config.sweep_seeds; ++s) {
        const std::uint64_t run_seed = mix64(config.seed, static_cast<std::uint64_t>(s));

        // The warmup and ranking phases are cost-blind, so the default mode
        // trains them once per seed and refits only the cost-aware phase.
        TrainState shared;
        bool shared_ok = true;
        std::string shared_error;
        if (!config.sweep_full_retrain) {
            try {
                CurriculumConfig head_cc = base_cc;
                head_cc.phases.rl_episodes = 0;
                TrainState init = init_train_state(ctx, config.feature_dim, config.hidden_dim,
                                                   run_seed, config.weight_decay);
                shared = run_curriculum(ctx, setup.train_suite, pairs, head_cc, std::move(init))
                             .state;
            } catch (const std::exception& e) {
                shared_ok = false;
                shared_error = e.what();
            }
        }

        for (double lambda : grid) {
            ParetoPoint point;
            point.lambda = lambda;
            point.seed = run_seed;
            try {
                TrainState trained;
                if (config.sweep_full_retrain) {
                    CurriculumConfig cc = curriculum_config(config, setup.registry, lambda);
                    TrainState init = init_train_state(ctx, config.feature_dim, config.hidden_dim,
                                                       run_seed, config.weight_decay);
                    trained =
                        run_curriculum(ctx, setup.train_suite, pairs, cc, std::move(init)).state;
                } else {
                    if (!shared_ok) {
                        throw Error("shared warmup failed: " + shared_error);
                    }
                    CurriculumConfig cc = curriculum_config(config, setup.registry, lambda);
                    TrainState resumed = shared;
                    resumed.phase = 3;
                    resumed.step_in_phase = 0;
                    trained = run_curriculum(ctx, setup.train_suite, pairs, cc,
                                             std::move(resumed))
                                  .state;
                }
                point.metrics = evaluate(ctx, trained.params, setup.eval_suite, eopts,
                                         config.eval_seed, weights, norm);
            } catch (const std::exception& e) {
                point.failed = true;
                point.error = e.what();
                if (log != nullptr) {
                    (*log) << "warning: sweep point lambda=" << format_double(lambda)
                           << " seed=" << s << " failed: " << e.what() << "\n";
                }
            }
            points.push_back(std::move(point));
        }
    }
    return points;
}

std::vector<std::string> pareto_csv_rows(const std::vector<ParetoPoint>& points) {
    std::vector<ParetoPoint> sorted = points;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ParetoPoint& a, const ParetoPoint& b) { return a.lambda < b.lambda; });
    std::vector<std::string> rows;
    for (const ParetoPoint& p : sorted) {
        std::string row = format_double(p.lambda) + "," + hex64(p.seed) + ",";
        if (p.failed) {
            row += ",,,,,0,failed," + p.error;
        } else {
            row += metrics_csv_row(p.metrics) + ",ok,";
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---- ablations -----------------------------------------------------------------

std::vector<AblationRow> ablate(const RunConfig& config, std::ostream* log) {
    struct Variant {
        std::string name;
        RunConfig config;
    };
    std::vector<Variant> variants;
    variants.push_back({"full", config});
    {
        RunConfig c = config;
        c.disable_early_exit = true;
        variants.push_back({"no_early_exit", c});
    }
    {
        RunConfig c = config;
        c.cpr_steps = 0;
        variants.push_back({"no_path_rank", c});
    }
    {
        RunConfig c = config;
        c.bc_steps = 0;
        variants.push_back({"no_warmup", c});
    }

    std::vector<AblationRow> rows;
    double full_cost = 0.0;
    bool have_full = false;
    for (const Variant& variant : variants) {
        AblationRow row;
        row.variant = variant.name;
        try {
            RunSetup setup = make_setup(variant.config);
            const EngineContext ctx = setup.context();
            const CurriculumResult trained = train_policy(setup);
            row.metrics = evaluate(ctx, trained.state.params, setup.eval_suite,
                                   eval_options(variant.config), variant.config.eval_seed,
                                   cost_weights_of(variant.config),
                                   suite_cost_normalizer(variant.config, setup.registry));
            if (variant.name == "full") {
                full_cost = row.metrics.mean_cost;
                have_full = true;
            }
            row.delta_cost_vs_full = have_full ? row.metrics.mean_cost - full_cost : 0.0;
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
            if (log != nullptr) {
                (*log) << "warning: ablation variant " << variant.name << " failed: " << e.what()
                       << "\n";
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> ablation_csv_rows(const std::vector<AblationRow>& rows) {
    std::vector<std::string> out;
    for (const AblationRow& row : rows) {
        std::string line = row.variant + ",";
        if (row.failed) {
            line += ",,,,,0,,failed," + row.error;
        } else {
            line += metrics_csv_row(row.metrics) + "," +
                    format_double(row.delta_cost_vs_full) + ",ok,";
        }
        out.push_back(std::move(line));
    }
    return out;
}

}  // namespace toolflow
