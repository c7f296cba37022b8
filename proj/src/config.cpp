#include "toolflow/config.hpp"

#include "toolflow/errors.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace toolflow {

namespace {

// One config entry: how to read it from JSON and how to print it.
struct Field {
    std::function<void(RunConfig&, const nlohmann::json&)> parse;
    std::function<nlohmann::json(const RunConfig&)> dump;
};

template <typename T>
T checked(const nlohmann::json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

std::map<std::string, Field> field_table() {
    std::map<std::string, Field> t;
    const auto add = [&t](const std::string& key, auto member) {
        using T = std::decay_t<decltype(std::declval<RunConfig>().*member)>;
        t[key] = Field{[member, key](RunConfig& c, const nlohmann::json& v) {
                           c.*member = checked<T>(v, key);
                       },
                       [member](const RunConfig& c) { return nlohmann::json(c.*member); }};
    };

    add("seed", &RunConfig::seed);
    add("graph", &RunConfig::graph);
    add("out_dir", &RunConfig::out_dir);
    add("train_suite_path", &RunConfig::train_suite_path);
    add("eval_suite_path", &RunConfig::eval_suite_path);
    add("train_instances", &RunConfig::train_instances);
    add("eval_instances", &RunConfig::eval_instances);
    add("suite_seed", &RunConfig::suite_seed);
    add("eval_seed", &RunConfig::eval_seed);
    add("plan_len_min", &RunConfig::plan_len_min);
    add("plan_len_max", &RunConfig::plan_len_max);
    add("simple_fraction", &RunConfig::simple_fraction);
    add("safety_fraction", &RunConfig::safety_fraction);
    add("feature_dim", &RunConfig::feature_dim);
    add("hidden_dim", &RunConfig::hidden_dim);
    add("t_max", &RunConfig::t_max);
    add("eval_alpha", &RunConfig::eval_alpha);
    add("min_steps_before_exit", &RunConfig::min_steps_before_exit);
    add("disable_early_exit", &RunConfig::disable_early_exit);
    add("memory_capacity", &RunConfig::memory_capacity);
    add("memory_token_budget", &RunConfig::memory_token_budget);
    add("memory_entry_budget", &RunConfig::memory_entry_budget);
    add("temp_start", &RunConfig::temp_start);
    add("temp_end", &RunConfig::temp_end);
    add("temp_total_steps", &RunConfig::temp_total_steps);
    add("bc_steps", &RunConfig::bc_steps);
    add("bc_batch", &RunConfig::bc_batch);
    add("cpr_steps", &RunConfig::cpr_steps);
    add("cpr_k", &RunConfig::cpr_k);
    add("rl_episodes", &RunConfig::rl_episodes);
    add("report_every", &RunConfig::report_every);
    add("lr_bc", &RunConfig::lr_bc);
    add("lr_cpr", &RunConfig::lr_cpr);
    add("lr_rl", &RunConfig::lr_rl);
    add("weight_decay", &RunConfig::weight_decay);
    add("clip_norm", &RunConfig::clip_norm);
    add("lambda", &RunConfig::lambda);
    add("gamma", &RunConfig::gamma);
    add("entropy_rollouts", &RunConfig::entropy_rollouts);
    add("entropy_bonus", &RunConfig::entropy_bonus);
    add("alpha_cpr", &RunConfig::alpha_cpr);
    add("cost_latency_weight", &RunConfig::cost_latency_weight);
    add("cost_token_weight", &RunConfig::cost_token_weight);
    add("w_compliance", &RunConfig::w_compliance);
    add("w_coherence", &RunConfig::w_coherence);
    add("w_brevity", &RunConfig::w_brevity);
    add("lambda_grid", &RunConfig::lambda_grid);
    add("sweep_full_retrain", &RunConfig::sweep_full_retrain);
    add("sweep_seeds", &RunConfig::sweep_seeds);
    return t;
}

void validate(const RunConfig& c) {
    const auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) {
            throw ConfigError(std::string("config key '") + name + "' must be positive");
        }
    };
    const auto non_negative = [](double v, const char* name) {
        if (v < 0.0) {
            throw ConfigError(std::string("config key '") + name + "' must be non-negative");
        }
    };
    positive(c.t_max, "t_max");
    positive(c.eval_alpha, "eval_alpha");
    positive(c.temp_start, "temp_start");
    positive(c.temp_end, "temp_end");
    positive(c.feature_dim, "feature_dim");
    positive(c.hidden_dim, "hidden_dim");
    positive(c.bc_batch, "bc_batch");
    positive(c.cpr_k, "cpr_k");
    positive(c.report_every, "report_every");
    positive(c.memory_capacity, "memory_capacity");
    positive(c.memory_token_budget, "memory_token_budget");
    positive(c.memory_entry_budget, "memory_entry_budget");
    positive(c.alpha_cpr, "alpha_cpr");
    non_negative(c.bc_steps, "bc_steps");
    non_negative(c.cpr_steps, "cpr_steps");
    non_negative(c.rl_episodes, "rl_episodes");
    non_negative(c.lambda, "lambda");
    non_negative(c.gamma, "gamma");
    non_negative(c.entropy_rollouts, "entropy_rollouts");
    non_negative(c.weight_decay, "weight_decay");
    positive(c.clip_norm, "clip_norm");
    non_negative(c.train_instances, "train_instances");
    non_negative(c.eval_instances, "eval_instances");
    if (c.plan_len_min < 1 || c.plan_len_max < c.plan_len_min) {
        throw ConfigError("plan length bounds must satisfy 1 <= plan_len_min <= plan_len_max");
    }
    if (c.sweep_seeds < 1) {
        throw ConfigError("config key 'sweep_seeds' must be at least 1");
    }
    if (c.lambda_grid.empty()) {
        throw ConfigError("config key 'lambda_grid' must not be empty");
    }
}

std::string render_value(const nlohmann::json& v) {
    if (v.is_number_float()) {
        return format_double(v.get<double>());
    }
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_array()) {
        std::string out = "[";
        bool first = true;
        for (const auto& item : v) {
            if (!first) {
                out += ",";
            }
            out += render_value(item);
            first = false;
        }
        return out + "]";
    }
    return v.dump();
}

}  // namespace

RunConfig resolve_config(const nlohmann::json& doc) {
    if (!doc.is_object()) {
        throw ConfigError("config document must be a JSON object");
    }
    RunConfig config;
    const auto table = field_table();
    for (const auto& [key, value] : doc.items()) {
        const auto it = table.find(key);
        if (it == table.end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        it->second.parse(config, value);
    }
    validate(config);
    return config;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return resolve_config(doc);
}

nlohmann::json config_to_json(const RunConfig& config) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [key, field] : field_table()) {
        doc[key] = field.dump(config);
    }
    return doc;
}

std::vector<std::string> config_echo(const RunConfig& config) {
    std::vector<std::string> lines;
    const nlohmann::json doc = config_to_json(config);
    for (const auto& [key, value] : doc.items()) {
        lines.push_back("# " + key + "=" + render_value(value));
    }
    std::sort(lines.begin(), lines.end());
    return lines;
}

}  // namespace toolflow
