#pragma once

#include "toolflow/common.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace toolflow {

// Complete run configuration. Every field has a default; a JSON config file
// overrides any subset, and unknown keys are rejected.
struct RunConfig {
    // experiment identity
    std::uint64_t seed = 7;          // parameter init + training stream
    std::string graph = "builtin:standard";  // or a path to a graph JSON file
    std::string out_dir = "runs";

    // task suites
    std::string train_suite_path;    // empty = generate
    std::string eval_suite_path;     // empty = generate
    int train_instances = 96;
    int eval_instances = 64;
    std::uint64_t suite_seed = 101;  // train suite; eval suite uses suite_seed + 1
    std::uint64_t eval_seed = 202;   // per-instance evaluation streams
    int plan_len_min = 1;
    int plan_len_max = 3;
    double simple_fraction = 0.3;
    double safety_fraction = 0.2;

    // model
    int feature_dim = 64;
    int hidden_dim = 256;

    // episode options
    int t_max = 8;
    double eval_alpha = 0.8;
    int min_steps_before_exit = 0;
    bool disable_early_exit = false;
    int memory_capacity = 16;
    int memory_token_budget = 256;
    int memory_entry_budget = 32;

    // temperature schedule
    double temp_start = 2.0;
    double temp_end = 0.8;
    long temp_total_steps = -1;      // -1 = sum of the phase budgets

    // phase budgets
    long bc_steps = 1500;
    int bc_batch = 64;
    long cpr_steps = 600;
    int cpr_k = 8;
    long rl_episodes = 1500;
    long report_every = 10;

    // optimizer
    double lr_bc = 3e-3;
    double lr_cpr = 1e-3;
    double lr_rl = 3e-4;
    double weight_decay = 0.01;
    double clip_norm = 1.0;

    // reward shaping
    double lambda = 0.03;
    double gamma = 0.01;
    int entropy_rollouts = 4;
    double entropy_bonus = 0.01;
    double alpha_cpr = 0.5;
    double cost_latency_weight = 1.0;
    double cost_token_weight = 0.1;

    // trajectory-quality heuristic
    double w_compliance = 0.6;
    double w_coherence = 0.2;
    double w_brevity = 0.2;

    // cost sweep
    std::vector<double> lambda_grid = {0.0, 0.003, 0.03, 0.3};
    bool sweep_full_retrain = false;
    int sweep_seeds = 3;
};

// Defaults overridden by the JSON document; throws ConfigError on unknown
// keys or ill-typed values.
RunConfig resolve_config(const nlohmann::json& doc);
RunConfig load_config_file(const std::string& path);

nlohmann::json config_to_json(const RunConfig& config);

// Sorted "# key=value" lines echoing every resolved setting; prepended to all
// report files so results are self-describing.
std::vector<std::string> config_echo(const RunConfig& config);

}  // namespace toolflow
