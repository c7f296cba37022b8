#include "toolflow/harness.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace toolflow;
using namespace toolflow::testing;

namespace {

// Small-but-complete run configuration that keeps harness tests fast.
RunConfig tiny_config() {
    RunConfig c;
    c.train_instances = 6;
    c.eval_instances = 4;
    c.t_max = 3;
    c.hidden_dim = 16;
    c.bc_steps = 6;
    c.bc_batch = 4;
    c.cpr_steps = 3;
    c.cpr_k = 2;
    c.rl_episodes = 4;
    c.report_every = 5;
    c.entropy_rollouts = 0;
    c.gamma = 0.0;
    return c;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("an empty document resolves to the documented defaults") {
    const RunConfig c = resolve_config(nlohmann::json::object());
    CHECK(c.seed == 7);
    CHECK(c.graph == "builtin:standard");
    CHECK(c.t_max == 8);
    CHECK(c.eval_alpha == doctest::Approx(0.8));
    CHECK(c.temp_start == doctest::Approx(2.0));
    CHECK(c.temp_end == doctest::Approx(0.8));
    CHECK(c.temp_total_steps == -1);
    CHECK(c.bc_steps == 1500);
    CHECK(c.cpr_steps == 600);
    CHECK(c.rl_episodes == 1500);
    CHECK(c.cpr_k == 8);
    CHECK(c.lambda == doctest::Approx(0.03));
    CHECK(c.gamma == doctest::Approx(0.01));
    CHECK(c.entropy_bonus == doctest::Approx(0.01));
    CHECK(c.weight_decay == doctest::Approx(0.01));
    CHECK(c.clip_norm == doctest::Approx(1.0));
    CHECK(c.memory_capacity == 16);
    CHECK(c.memory_token_budget == 256);
    CHECK(c.memory_entry_budget == 32);
    REQUIRE(c.lambda_grid.size() == 4);
    CHECK(c.lambda_grid[3] == doctest::Approx(0.3));
    CHECK_FALSE(c.sweep_full_retrain);
    CHECK(c.sweep_seeds == 3);
}

TEST_CASE("config documents override a subset and reject junk") {
    nlohmann::json doc;
    doc["seed"] = 99;
    doc["t_max"] = 5;
    doc["lambda_grid"] = {0.1, 0.2};
    const RunConfig c = resolve_config(doc);
    CHECK(c.seed == 99);
    CHECK(c.t_max == 5);
    REQUIRE(c.lambda_grid.size() == 2);
    CHECK(c.lambda_grid[1] == doctest::Approx(0.2));
    CHECK(c.bc_steps == 1500);  // untouched default

    CHECK_THROWS_AS(resolve_config({{"not_a_key", 1}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"t_maxx", 8}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"t_max", "eight"}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"seed", "seven"}}), ConfigError);
    CHECK_THROWS_AS(resolve_config(nlohmann::json::array()), ConfigError);
}

TEST_CASE("config validation rejects out-of-range values") {
    CHECK_THROWS_AS(resolve_config({{"t_max", 0}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"eval_alpha", 0.0}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"lambda", -0.1}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"clip_norm", 0.0}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"plan_len_min", 3}, {"plan_len_max", 2}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"plan_len_min", 0}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"sweep_seeds", 0}}), ConfigError);
    CHECK_THROWS_AS(resolve_config({{"lambda_grid", nlohmann::json::array()}}), ConfigError);
}

TEST_CASE("the config echo lists every setting, sorted") {
    const RunConfig c = resolve_config(nlohmann::json::object());
    const std::vector<std::string> echo = config_echo(c);
    REQUIRE(!echo.empty());
    CHECK(echo.size() == config_to_json(c).size());

    std::vector<std::string> sorted = echo;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == echo);

    bool saw_seed = false;
    bool saw_lambda = false;
    bool saw_grid = false;
    for (const std::string& line : echo) {
        REQUIRE(line.rfind("# ", 0) == 0);
        CHECK(line.find('=') != std::string::npos);
        if (line == "# seed=7") saw_seed = true;
        if (line == "# lambda=0.03") saw_lambda = true;
        if (line.rfind("# lambda_grid=[", 0) == 0) saw_grid = true;
    }
    CHECK(saw_seed);
    CHECK(saw_lambda);
    CHECK(saw_grid);
}

TEST_CASE("configs survive a JSON round trip") {
    RunConfig c = tiny_config();
    c.lambda_grid = {0.0, 0.25};
    c.graph = "builtin:standard";
    c.sweep_full_retrain = true;
    const RunConfig back = resolve_config(config_to_json(c));
    CHECK(config_echo(back) == config_echo(c));
}

TEST_CASE("config files load with clear failure modes") {
    const std::string path = "config_load_test.json";
    {
        std::ofstream out(path);
        out << R"({"seed": 41, "t_max": 4})";
    }
    const RunConfig c = load_config_file(path);
    CHECK(c.seed == 41);
    CHECK(c.t_max == 4);
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_config_file("no_such_config.json"), ConfigError);
    {
        std::ofstream out(path);
        out << "{ not json";
    }
    CHECK_THROWS_AS(load_config_file(path), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("make_setup builds the bundled world and both suites") {
    const RunConfig config = tiny_config();
    const RunSetup setup = make_setup(config);
    CHECK(setup.graph.containers().size() == 7);
    CHECK(setup.registry.size() == 14);
    CHECK(setup.train_suite.size() == 6);
    CHECK(setup.eval_suite.size() == 4);
    // Different suite seeds: the first instances must differ.
    CHECK(instance_to_json(setup.train_suite[0]).dump() !=
          instance_to_json(setup.eval_suite[0]).dump());

    // Loading a saved suite reproduces it exactly.
    const std::string path = "setup_suite_test.jsonl";
    save_suite(path, setup.train_suite);
    RunConfig loaded_cfg = config;
    loaded_cfg.train_suite_path = path;
    const RunSetup loaded = make_setup(loaded_cfg);
    REQUIRE(loaded.train_suite.size() == setup.train_suite.size());
    for (std::size_t i = 0; i < loaded.train_suite.size(); ++i) {
        CHECK(instance_to_json(loaded.train_suite[i]).dump() ==
              instance_to_json(setup.train_suite[i]).dump());
    }
    std::remove(path.c_str());
}

TEST_CASE("episode options and schedules are derived from the config") {
    RunConfig config = tiny_config();
    config.disable_early_exit = true;
    config.memory_capacity = 5;
    config.memory_token_budget = 64;
    config.memory_entry_budget = 8;
    config.min_steps_before_exit = 1;

    const RunOptions ev = eval_options(config);
    CHECK(ev.t_max == 3);
    CHECK(ev.alpha == doctest::Approx(0.8));
    CHECK(ev.disable_early_exit);
    CHECK(ev.min_steps_before_exit == 1);
    CHECK(ev.memory.capacity == 5);
    CHECK(ev.memory.token_budget == 64);
    CHECK(ev.memory.entry_token_budget == 8);
    CHECK_FALSE(ev.greedy);

    const RunSetup setup = make_setup(config);
    const CurriculumConfig cc = curriculum_config(config, setup.registry);
    CHECK(cc.phases.bc_steps == config.bc_steps);
    CHECK(cc.phases.cpr_steps == config.cpr_steps);
    CHECK(cc.phases.rl_episodes == config.rl_episodes);
    CHECK(cc.temp.total_steps == config.bc_steps + config.cpr_steps + config.rl_episodes);
    CHECK(cc.reward.lambda == doctest::Approx(config.lambda));
    CHECK(cc.reward.cost_norm ==
          doctest::Approx(suite_cost_normalizer(config, setup.registry)));
    CHECK(cc.run.disable_early_exit);

    const CurriculumConfig swept = curriculum_config(config, setup.registry, 0.42);
    CHECK(swept.reward.lambda == doctest::Approx(0.42));

    RunConfig pinned = config;
    pinned.temp_total_steps = 77;
    const CurriculumConfig cp = curriculum_config(pinned, setup.registry);
    CHECK(cp.temp.total_steps == 77);

    // The default registry peaks at cost 7.5 per step.
    CHECK(suite_cost_normalizer(config, setup.registry) ==
          doctest::Approx(3 * 7.5).epsilon(1e-12));
}

TEST_CASE("checkpoints round-trip byte for byte") {
    const RunConfig config = tiny_config();
    const RunSetup setup = make_setup(config);
    const EngineContext ctx = setup.context();

    TrainState state = init_train_state(ctx, config.feature_dim, config.hidden_dim, 5, 0.01);
    state.global_step = 42;
    state.phase = 3;
    state.step_in_phase = 17;
    state.baseline.value = 0.25;
    state.rng();  // advance the stream so its serialization is non-trivial

    Checkpoint ckpt;
    ckpt.graph_fingerprint = setup.graph.fingerprint();
    ckpt.train = std::move(state);
    CHECK(ckpt.id() == hex64(setup.graph.fingerprint()) + "-42");

    const std::string p1 = "ckpt_roundtrip_1.bin";
    const std::string p2 = "ckpt_roundtrip_2.bin";
    save_checkpoint(p1, ckpt);
    Checkpoint loaded = load_checkpoint(p1, setup.graph);
    CHECK(loaded.train.global_step == 42);
    CHECK(loaded.train.phase == 3);
    CHECK(loaded.train.step_in_phase == 17);
    CHECK(loaded.train.baseline.value == doctest::Approx(0.25));
    CHECK((loaded.train.params.head.w1 - ckpt.train.params.head.w1).norm() == 0.0);
    CHECK((loaded.train.opt.m.w2 - ckpt.train.opt.m.w2).norm() == 0.0);
    CHECK(loaded.train.opt.step == ckpt.train.opt.step);

    // The restored RNG continues the exact stream.
    Rng a = ckpt.train.rng;
    Rng b = loaded.train.rng;
    for (int i = 0; i < 8; ++i) CHECK(a() == b());

    save_checkpoint(p2, loaded);
    CHECK(slurp(p1) == slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("checkpoints refuse foreign files and foreign graphs") {
    const RunConfig config = tiny_config();
    const RunSetup setup = make_setup(config);

    const std::string garbage = "ckpt_garbage.bin";
    {
        std::ofstream out(garbage, std::ios::binary);
        out << "this is not a checkpoint at all, not even close";
    }
    CHECK_THROWS_AS(load_checkpoint(garbage, setup.graph), VersionMismatch);
    std::remove(garbage.c_str());

    CHECK_THROWS_AS(load_checkpoint("missing_checkpoint.bin", setup.graph), ConfigError);

    // Save against the bundled graph, load against a different one.
    TrainState state =
        init_train_state(setup.context(), config.feature_dim, config.hidden_dim, 6, 0.01);
    Checkpoint ckpt;
    ckpt.graph_fingerprint = setup.graph.fingerprint();
    ckpt.train = std::move(state);
    const std::string path = "ckpt_foreign_graph.bin";
    save_checkpoint(path, ckpt);

    const TestWorld other = make_chain_world({ContainerType::Classify});
    CHECK_THROWS_AS(load_checkpoint(path, other.graph), GraphFingerprintMismatch);
    std::remove(path.c_str());

    // A truncated file (a valid header, then a cut inside the first tensor)
    // is flagged as malformed.
    const std::string cut = "ckpt_truncated.bin";
    {
        const std::string full = [&]() {
            save_checkpoint(cut, ckpt);
            return slurp(cut);
        }();
        REQUIRE(full.size() > 100);
        std::ofstream out(cut, std::ios::binary | std::ios::trunc);
        out.write(full.data(), 100);
    }
    CHECK_THROWS_AS(load_checkpoint(cut, setup.graph), VersionMismatch);
    std::remove(cut.c_str());
}

TEST_CASE("evaluation is repeatable, per-instance keyed, and trace-stable") {
    const RunConfig config = tiny_config();
    const RunSetup setup = make_setup(config);
    const EngineContext ctx = setup.context();
    const ParamSet params =
        init_params(config.feature_dim, config.hidden_dim, setup.graph.action_count(), 3);
    const RunOptions opts = eval_options(config);
    const CostWeights weights = cost_weights_of(config);
    const double norm = suite_cost_normalizer(config, setup.registry);

    std::vector<InstanceOutcome> outcomes;
    const EvalMetrics m1 = evaluate(ctx, params, setup.eval_suite, opts, config.eval_seed,
                                    weights, norm, nullptr, {}, &outcomes);
    CHECK(m1.n == 4);
    REQUIRE(outcomes.size() == 4);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        CHECK(outcomes[i].id == setup.eval_suite[i].id);
        CHECK(outcomes[i].utility >= 0.0);
        CHECK(outcomes[i].utility <= 1.0);
        CHECK(outcomes[i].exact == (outcomes[i].utility == 1.0));
        CHECK(outcomes[i].cost >= 0.0);
    }

    const EvalMetrics m2 =
        evaluate(ctx, params, setup.eval_suite, opts, config.eval_seed, weights, norm);
    CHECK(m1.accuracy == m2.accuracy);
    CHECK(m1.mean_cost == m2.mean_cost);
    CHECK(m1.mean_length == m2.mean_length);
    CHECK(m1.early_exit_rate == m2.early_exit_rate);

    // Tracing must not change the sampled episodes.
    std::ostringstream sink;
    const EvalMetrics m3 = evaluate(ctx, params, setup.eval_suite, opts, config.eval_seed,
                                    weights, norm, &sink, TraceInfo{config.eval_seed, "t", 0.0});
    CHECK(m3.mean_utility == m1.mean_utility);
    CHECK(m3.mean_cost == m1.mean_cost);
    int meta_lines = 0;
    std::istringstream lines(sink.str());
    std::string line;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j.at("type") == "meta") ++meta_lines;
    }
    CHECK(meta_lines == 4);

    // Per-instance streams: a subset evaluates identically to the full pass.
    const std::vector<QueryInstance> subset = {setup.eval_suite[2]};
    std::vector<InstanceOutcome> sub_outcomes;
    evaluate(ctx, params, subset, opts, config.eval_seed, weights, norm, nullptr, {},
             &sub_outcomes);
    REQUIRE(sub_outcomes.size() == 1);
    CHECK(sub_outcomes[0].utility == outcomes[2].utility);
    CHECK(sub_outcomes[0].cost == outcomes[2].cost);
    CHECK(sub_outcomes[0].length == outcomes[2].length);

    // A different eval seed reshuffles the draws.
    const EvalMetrics other =
        evaluate(ctx, params, setup.eval_suite, opts, config.eval_seed + 1, weights, norm);
    CHECK((other.mean_cost != m1.mean_cost || other.mean_utility != m1.mean_utility ||
           other.mean_length != m1.mean_length));

    CHECK_THROWS_AS(
        evaluate(ctx, params, {}, opts, config.eval_seed, weights, norm), EmptySuite);
}

TEST_CASE("csv reports carry the echo, the header, and the rows") {
    const std::string path = "csv_report_test.csv";
    write_csv(path, {"# a=1", "# b=2"}, "x,y", {"1,2", "3,4"});
    CHECK(slurp(path) == "# a=1\n# b=2\nx,y\n1,2\n3,4\n");
    std::remove(path.c_str());

    CHECK_THROWS_AS(write_csv("no_such_dir/file.csv", {}, "x", {}), SinkUnavailable);

    EvalMetrics m;
    m.accuracy = 0.5;
    m.mean_utility = 0.75;
    m.mean_cost = 0.2;
    m.mean_length = 3.25;
    m.early_exit_rate = 1.0;
    m.n = 4;
    const std::string row = metrics_csv_row(m);
    CHECK(std::count(row.begin(), row.end(), ',') == 5);
    CHECK(row.find("0.5") != std::string::npos);

    InstanceOutcome o;
    o.id = "inst-1";
    o.utility = 1.0;
    o.exact = true;
    o.cost = 0.125;
    o.length = 3;
    o.early_exit = true;
    const auto rows = instance_csv_rows({o});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].rfind("inst-1,", 0) == 0);
    CHECK(std::count(rows[0].begin(), rows[0].end(), ',') == 5);
}

TEST_CASE("the cost sweep dedupes the grid and stays deterministic") {
    RunConfig config = tiny_config();
    config.lambda_grid = {0.1, 0.0, 0.1};  // duplicate on purpose
    config.sweep_seeds = 1;

    std::ostringstream log;
    const std::vector<ParetoPoint> points = pareto_sweep(config, &log);
    REQUIRE(points.size() == 2);  // 2 unique lambdas x 1 seed
    CHECK(log.str().find("duplicate") != std::string::npos);
    // Grid order is preserved after deduplication.
    CHECK(points[0].lambda == doctest::Approx(0.1));
    CHECK(points[1].lambda == doctest::Approx(0.0));
    for (const ParetoPoint& p : points) {
        CHECK_FALSE(p.failed);
        CHECK(p.metrics.n == config.eval_instances);
    }

    const std::vector<ParetoPoint> again = pareto_sweep(config, nullptr);
    REQUIRE(again.size() == points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        CHECK(again[i].metrics.mean_cost == points[i].metrics.mean_cost);
        CHECK(again[i].metrics.accuracy == points[i].metrics.accuracy);
    }

    const auto rows = pareto_csv_rows(points);
    REQUIRE(rows.size() == 2);
    for (const std::string& row : rows) {
        CHECK(std::count(row.begin(), row.end(), ',') == 9);
        CHECK(row.find("ok") != std::string::npos);
    }
}

TEST_CASE("sweep modes agree on structure") {
    RunConfig config = tiny_config();
    config.lambda_grid = {0.0, 0.2};
    config.sweep_seeds = 2;
    config.sweep_full_retrain = true;
    const std::vector<ParetoPoint> points = pareto_sweep(config, nullptr);
    CHECK(points.size() == 4);  // seed-major, grid order within each seed
    CHECK(points[0].lambda == doctest::Approx(0.0));
    CHECK(points[1].lambda == doctest::Approx(0.2));
    CHECK(points[2].lambda == doctest::Approx(0.0));
    CHECK(points[3].lambda == doctest::Approx(0.2));
    CHECK(points[0].seed == points[1].seed);
    CHECK(points[0].seed != points[2].seed);

    // The csv rows are re-sorted by lambda.
    const auto rows = pareto_csv_rows(points);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].rfind("0,", 0) == 0);
    CHECK(rows[1].rfind("0,", 0) == 0);
}

TEST_CASE("ablations cover the four variants with full as the anchor") {
    const RunConfig config = tiny_config();
    std::ostringstream log;
    const std::vector<AblationRow> rows = ablate(config, &log);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].variant == "full");
    CHECK(rows[1].variant == "no_early_exit");
    CHECK(rows[2].variant == "no_path_rank");
    CHECK(rows[3].variant == "no_warmup");
    CHECK(rows[0].delta_cost_vs_full == 0.0);
    for (const AblationRow& row : rows) {
        CHECK_FALSE(row.failed);
        CHECK(row.metrics.n == config.eval_instances);
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].delta_cost_vs_full ==
              doctest::Approx(rows[i].metrics.mean_cost - rows[0].metrics.mean_cost)
                  .epsilon(1e-12));
    }

    const auto csv = ablation_csv_rows(rows);
    REQUIRE(csv.size() == 4);
    CHECK(csv[0].rfind("full,", 0) == 0);
    for (const std::string& row : csv) {
        CHECK(std::count(row.begin(), row.end(), ',') == 9);
    }
}
