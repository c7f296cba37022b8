#include "toolflow/checkpoint.hpp"
#include "toolflow/config.hpp"
#include "toolflow/errors.hpp"
#include "toolflow/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace toolflow;

struct ConfigCli {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value pairs
};

void add_config_options(CLI::App* cmd, ConfigCli& cli) {
    cmd->add_option("--config", cli.config_path, "JSON config file (defaults when omitted)");
    cmd->add_option("--set", cli.overrides,
                    "Override a config key, e.g. --set seed=9 --set lambda=0.3");
}

RunConfig resolve_cli_config(const ConfigCli& cli) {
    nlohmann::json doc = nlohmann::json::object();
    if (!cli.config_path.empty()) {
        std::ifstream in(cli.config_path);
        if (!in) {
            throw ConfigError("cannot open config file '" + cli.config_path + "'");
        }
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config file '" + cli.config_path +
                              "' is not valid JSON: " + e.what());
        }
    }
    for (const std::string& kv : cli.overrides) {
        const auto pos = kv.find('=');
        if (pos == std::string::npos || pos == 0) {
            throw ConfigError("override '" + kv + "' is not of the form key=value");
        }
        const std::string key = kv.substr(0, pos);
        const std::string value = kv.substr(pos + 1);
        const nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
        doc[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
    }
    return resolve_config(doc);
}

std::string ensure_out_dir(const RunConfig& config) {
    std::filesystem::create_directories(config.out_dir);
    return config.out_dir;
}

void print_metrics(std::ostream& out, const EvalMetrics& m) {
    out << "instances " << m.n << ", accuracy " << format_double(m.accuracy) << ", mean utility "
        << format_double(m.mean_utility) << ", mean normalized cost "
        << format_double(m.mean_cost) << ", mean length " << format_double(m.mean_length)
        << ", early-exit rate " << format_double(m.early_exit_rate) << "\n";
}

Checkpoint load_for(const RunSetup& setup, const std::string& path) {
    return load_checkpoint(path, setup.graph);
}

int cmd_gen_suite(const ConfigCli& cli, const std::string& out_path, bool eval_suite) {
    const RunConfig config = resolve_cli_config(cli);
    RunSetup setup = make_setup(config);
    const auto& suite = eval_suite ? setup.eval_suite : setup.train_suite;
    save_suite(out_path, suite);
    std::cout << "wrote " << suite.size() << " instances to " << out_path << "\n";
    return 0;
}

int cmd_train(const ConfigCli& cli, std::string checkpoint_out, std::string report_out,
              const std::string& resume_path) {
    const RunConfig config = resolve_cli_config(cli);
    const std::string out_dir = ensure_out_dir(config);
    if (checkpoint_out.empty()) {
        checkpoint_out = out_dir + "/checkpoint.bin";
    }
    if (report_out.empty()) {
        report_out = out_dir + "/training.csv";
    }

    RunSetup setup = make_setup(config);
    const EngineContext ctx = setup.context();

    CurriculumResult result;
    if (resume_path.empty()) {
        result = train_policy(setup);
    } else {
        const Checkpoint ckpt = load_for(setup, resume_path);
        const CurriculumConfig cc = curriculum_config(config, setup.registry);
        const std::vector<ExpertPair> pairs = collect_expert_pairs(ctx, setup.train_suite, cc.run);
        result = run_curriculum(ctx, setup.train_suite, pairs, cc, ckpt.train);
    }

    Checkpoint ckpt{setup.graph.fingerprint(), result.state};
    save_checkpoint(checkpoint_out, ckpt);

    std::vector<std::string> rows;
    for (const PhaseRow& row : result.rows) {
        const auto opt_metric = [](double v) {
            return std::isnan(v) ? std::string() : format_double(v);
        };
        rows.push_back(std::to_string(row.phase) + "," + std::to_string(row.step) + "," +
                       format_double(row.loss_or_reward) + "," + format_double(row.lr) + "," +
                       format_double(row.temperature) + "," + opt_metric(row.mean_cost) + "," +
                       opt_metric(row.mean_utility));
    }
    write_csv(report_out, config_echo(config),
              "phase,step,loss_or_reward,lr,temperature,mean_cost,mean_utility", rows);

    const EvalMetrics metrics =
        evaluate(ctx, result.state.params, setup.eval_suite, eval_options(config),
                 config.eval_seed, cost_weights_of(config),
                 suite_cost_normalizer(config, setup.registry));
    std::cout << "checkpoint " << ckpt.id() << " saved to " << checkpoint_out << "\n";
    std::cout << "training report written to " << report_out << "\n";
    print_metrics(std::cout, metrics);
    return 0;
}

int cmd_eval(const ConfigCli& cli, const std::string& checkpoint_path, std::string report_out,
             const std::string& traces_out) {
    const RunConfig config = resolve_cli_config(cli);
    const std::string out_dir = ensure_out_dir(config);
    if (report_out.empty()) {
        report_out = out_dir + "/eval.csv";
    }
    RunSetup setup = make_setup(config);
    const EngineContext ctx = setup.context();
    const Checkpoint ckpt = load_for(setup, checkpoint_path);

    std::ofstream trace_stream;
    std::ostream* trace_sink = nullptr;
    if (!traces_out.empty()) {
        trace_stream.open(traces_out, std::ios::trunc);
        if (!trace_stream) {
            throw SinkUnavailable("cannot open trace file '" + traces_out + "' for writing");
        }
        trace_sink = &trace_stream;
    }
    TraceInfo info;
    info.checkpoint_id = ckpt.id();
    info.lambda = config.lambda;

    std::vector<InstanceOutcome> outcomes;
    const EvalMetrics metrics =
        evaluate(ctx, ckpt.train.params, setup.eval_suite, eval_options(config), config.eval_seed,
                 cost_weights_of(config), suite_cost_normalizer(config, setup.registry),
                 trace_sink, info, &outcomes);
    write_csv(report_out, config_echo(config),
              "accuracy,mean_utility,mean_cost,mean_length,early_exit_rate,n",
              {metrics_csv_row(metrics)});
    const std::string instances_out =
        report_out.size() > 4 && report_out.rfind(".csv") == report_out.size() - 4
            ? report_out.substr(0, report_out.size() - 4) + "_instances.csv"
            : report_out + "_instances.csv";
    write_csv(instances_out, config_echo(config), "id,utility,exact,cost,length,early_exit",
              instance_csv_rows(outcomes));
    std::cout << "evaluation report written to " << report_out << " (per-instance: "
              << instances_out << ")\n";
    if (!traces_out.empty()) {
        std::cout << "audit traces written to " << traces_out << "\n";
    }
    print_metrics(std::cout, metrics);
    return 0;
}

int cmd_infer(const ConfigCli& cli, const std::string& checkpoint_path, int index,
              const std::string& trace_out) {
    const RunConfig config = resolve_cli_config(cli);
    RunSetup setup = make_setup(config);
    const EngineContext ctx = setup.context();
    const Checkpoint ckpt = load_for(setup, checkpoint_path);
    if (index < 0 || static_cast<std::size_t>(index) >= setup.eval_suite.size()) {
        throw ConfigError("instance index " + std::to_string(index) +
                          " is out of range (suite has " +
                          std::to_string(setup.eval_suite.size()) + " instances)");
    }
    const QueryInstance& instance = setup.eval_suite[static_cast<std::size_t>(index)];

    TraceInfo info;
    info.checkpoint_id = ckpt.id();
    info.lambda = config.lambda;
    info.seed = mix64(config.eval_seed, fnv1a64(instance.id));
    Rng rng = make_rng(config.eval_seed, fnv1a64(instance.id));
    const InferenceResult result =
        run_inference(ctx, ckpt.train.params, instance, eval_options(config), rng, info);

    std::cout << "instance " << instance.id << " (" << instance.query << ")\n";
    std::cout << "steps " << result.trajectory.length() << ", terminated by "
              << (result.trajectory.ends_with_exit() ? "early_exit" : "max_steps")
              << ", latency " << format_double(result.total_latency) << ", tokens "
              << result.total_tokens << "\n";
    std::cout << "answer: " << canonical_answer(result.answer) << "\n";
    std::cout << "reference: " << canonical_answer(instance.truth.answer_fields) << "\n";
    if (!trace_out.empty()) {
        emit_trace_file(result.trace, trace_out);
        std::cout << "trace appended to " << trace_out << "\n";
    }
    return 0;
}

int cmd_sweep(const ConfigCli& cli, std::string report_out) {
    const RunConfig config = resolve_cli_config(cli);
    const std::string out_dir = ensure_out_dir(config);
    if (report_out.empty()) {
        report_out = out_dir + "/pareto.csv";
    }
    const std::vector<ParetoPoint> points = pareto_sweep(config, &std::cerr);
    write_csv(report_out, config_echo(config),
              "lambda,seed,accuracy,mean_utility,mean_cost,mean_length,early_exit_rate,n,status,"
              "error",
              pareto_csv_rows(points));
    std::cout << "cost sweep report written to " << report_out << "\n";
    int failed = 0;
    for (const ParetoPoint& p : points) {
        failed += p.failed ? 1 : 0;
    }
    std::cout << points.size() << " points, " << failed << " failed\n";
    return 0;
}

int cmd_ablate(const ConfigCli& cli, std::string report_out) {
    const RunConfig config = resolve_cli_config(cli);
    const std::string out_dir = ensure_out_dir(config);
    if (report_out.empty()) {
        report_out = out_dir + "/ablations.csv";
    }
    const std::vector<AblationRow> rows = ablate(config, &std::cerr);
    write_csv(report_out, config_echo(config),
              "variant,accuracy,mean_utility,mean_cost,mean_length,early_exit_rate,n,"
              "delta_cost_vs_full,status,error",
              ablation_csv_rows(rows));
    std::cout << "ablation report written to " << report_out << "\n";
    for (const AblationRow& row : rows) {
        std::cout << row.variant << ": ";
        if (row.failed) {
            std::cout << "failed (" << row.error << ")\n";
        } else {
            print_metrics(std::cout, row.metrics);
        }
    }
    return 0;
}

int cmd_trace_verify(const ConfigCli& cli, const std::string& checkpoint_path,
                     const std::string& traces_path, double tol) {
    const RunConfig config = resolve_cli_config(cli);
    RunSetup setup = make_setup(config);
    const EngineContext ctx = setup.context();
    const Checkpoint ckpt = load_for(setup, checkpoint_path);
    const TraceVerifyReport report = verify_trace_file(traces_path, ctx, ckpt.train.params, tol);
    std::cout << "checked " << report.traces_checked << " traces, " << report.steps_checked
              << " steps, tolerance " << format_double(tol) << "\n";
    if (report.ok()) {
        std::cout << "all traces replayed within tolerance\n";
        return 0;
    }
    for (const std::string& mismatch : report.mismatches) {
        std::cout << "mismatch: " << mismatch << "\n";
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic workflow controller over a typed tool graph"};
    app.require_subcommand(1);

    ConfigCli train_cli, eval_cli, infer_cli, sweep_cli, ablate_cli, verify_cli, gen_cli;

    auto* train = app.add_subcommand("train", "Run the three-phase curriculum");
    add_config_options(train, train_cli);
    std::string train_ckpt_out, train_report, train_resume;
    train->add_option("--checkpoint-out", train_ckpt_out, "Checkpoint path (out_dir default)");
    train->add_option("--report", train_report, "Training report CSV (out_dir default)");
    train->add_option("--resume", train_resume, "Resume from an existing checkpoint");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the evaluation suite");
    add_config_options(eval, eval_cli);
    std::string eval_ckpt, eval_report, eval_traces;
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint to evaluate")->required();
    eval->add_option("--report", eval_report, "Evaluation report CSV (out_dir default)");
    eval->add_option("--traces", eval_traces, "Write per-episode audit traces to this JSONL file");

    auto* infer = app.add_subcommand("infer", "Run one evaluation instance and print the answer");
    add_config_options(infer, infer_cli);
    std::string infer_ckpt, infer_trace;
    int infer_index = 0;
    infer->add_option("--checkpoint", infer_ckpt, "Checkpoint to run")->required();
    infer->add_option("--index", infer_index, "Evaluation-suite instance index");
    infer->add_option("--trace", infer_trace, "Append the audit trace to this JSONL file");

    auto* sweep = app.add_subcommand("sweep", "Cost-pressure sweep across the lambda grid");
    add_config_options(sweep, sweep_cli);
    std::string sweep_report;
    sweep->add_option("--report", sweep_report, "Sweep report CSV (out_dir default)");

    auto* abl = app.add_subcommand("ablate", "Train and evaluate the ablation variants");
    add_config_options(abl, ablate_cli);
    std::string ablate_report;
    abl->add_option("--report", ablate_report, "Ablation report CSV (out_dir default)");

    auto* verify = app.add_subcommand("trace-verify", "Replay audit traces against a checkpoint");
    add_config_options(verify, verify_cli);
    std::string verify_ckpt, verify_traces;
    double verify_tol = 1e-9;
    verify->add_option("--checkpoint", verify_ckpt, "Checkpoint the traces were produced with")
        ->required();
    verify->add_option("--traces", verify_traces, "Trace JSONL file")->required();
    verify->add_option("--tol", verify_tol, "Per-probability tolerance");

    auto* gen = app.add_subcommand("gen-suite", "Generate a task suite and save it as JSONL");
    add_config_options(gen, gen_cli);
    std::string gen_out;
    bool gen_eval = false;
    gen->add_option("--out", gen_out, "Output JSONL path")->required();
    gen->add_flag("--eval", gen_eval, "Generate the evaluation suite instead of the train suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            return cmd_train(train_cli, train_ckpt_out, train_report, train_resume);
        }
        if (eval->parsed()) {
            return cmd_eval(eval_cli, eval_ckpt, eval_report, eval_traces);
        }
        if (infer->parsed()) {
            return cmd_infer(infer_cli, infer_ckpt, infer_index, infer_trace);
        }
        if (sweep->parsed()) {
            return cmd_sweep(sweep_cli, sweep_report);
        }
        if (abl->parsed()) {
            return cmd_ablate(ablate_cli, ablate_report);
        }
        if (verify->parsed()) {
            return cmd_trace_verify(verify_cli, verify_ckpt, verify_traces, verify_tol);
        }
        if (gen->parsed()) {
            return cmd_gen_suite(gen_cli, gen_out, gen_eval);
        }
    } catch (const toolflow::NonFiniteLoss& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const toolflow::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
