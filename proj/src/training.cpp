#include "toolflow/training.hpp"

#include "toolflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace toolflow {

namespace {

bool is_finite(double x) { return std::isfinite(x); }

void require_finite(double loss, const GradSet& grads, const char* where) {
    if (!is_finite(loss)) {
        throw NonFiniteLoss(std::string(where) + ": loss is not finite");
    }
    if (!grads.all_finite()) {
        throw NonFiniteLoss(std::string(where) + ": gradient is not finite");
    }
}

}  // namespace

// ---- expert demonstrations -------------------------------------------------

std::vector<ExpertPair> collect_expert_pairs(const EngineContext& ctx,
                                             const std::vector<QueryInstance>& suite,
                                             const RunOptions& opts) {
    const Summarizer summarizer = template_summarizer(opts.memory.entry_token_budget);
    std::vector<ExpertPair> pairs;
    for (const QueryInstance& instance : suite) {
        State state{instance.query, instance.image, instance.context, Memory{opts.memory},
                    kEntryPosition};
        for (int t = 1; t <= opts.t_max; ++t) {
            const Action action = expert_action(state, instance, ctx.graph, ctx.registry);
            if (action.is_exit()) {
                if (!opts.disable_early_exit) {
                    pairs.push_back(ExpertPair{state, action});
                }
                break;
            }
            pairs.push_back(ExpertPair{state, action});
            apply_invoke(ctx.graph, ctx.registry, state, action, t, summarizer);
        }
    }
    return pairs;
}

OrderedActionSet legal_for_state(const SupernetGraph& graph, const State& state,
                                 const RunOptions& opts) {
    // Step index and visited containers are recovered from memory; exact as
    // long as the memory capacity covers the episode horizon (no digest fold).
    std::vector<std::string> visited;
    for (const MemoryEntry& entry : state.memory.entries()) {
        if (entry.container_id != kMemoryDigestId) {
            visited.push_back(entry.container_id);
        }
    }
    const int step_index = static_cast<int>(state.memory.last_step()) + 1;
    return runtime_legal_actions(graph, state.position, opts, step_index, visited);
}

// ---- behaviour cloning -------------------------------------------------------

namespace {

// Shared forward/backward for one expert pair; adds `weight * d(nll)` into
// `grads` when given, returns the pair's negative log-likelihood.
double bc_pair_term(const EngineContext& ctx, const ParamSet& params, const ExpertPair& pair,
                    const RunOptions& opts, double alpha, double weight, GradSet* grads) {
    const OrderedActionSet legal = legal_for_state(ctx.graph, pair.state, opts);
    const int idx = legal.find(pair.action);
    if (idx < 0) {
        throw IllegalExpertAction("demonstrated action " + pair.action.name() +
                                  " is not legal at position '" + pair.state.position + "'");
    }
    const StepForward fwd = forward_step(pair.state, ctx.extractors, params, legal, alpha);
    const double p = fwd.dist.probs[idx];
    if (p <= 0.0) {
        throw ZeroProbabilityAction("demonstrated action " + pair.action.name() +
                                    " has zero probability");
    }
    if (grads != nullptr) {
        const Vec g = weight * nll_score_grad(fwd.dist, idx);
        backward_step(fwd, params, g, *grads);
    }
    return -std::log(p);
}

}  // namespace

double bc_loss(const EngineContext& ctx, const ParamSet& params,
               const std::vector<const ExpertPair*>& batch, const RunOptions& opts, double alpha) {
    if (batch.empty()) {
        throw ConfigError("behaviour cloning batch is empty");
    }
    double total = 0.0;
    for (const ExpertPair* pair : batch) {
        total += bc_pair_term(ctx, params, *pair, opts, alpha, 0.0, nullptr);
    }
    return total / static_cast<double>(batch.size());
}

LossGrad bc_loss_grad(const EngineContext& ctx, const ParamSet& params,
                      const std::vector<const ExpertPair*>& batch, const RunOptions& opts,
                      double alpha) {
    if (batch.empty()) {
        throw ConfigError("behaviour cloning batch is empty");
    }
    LossGrad out;
    out.grads = zeros_like(params);
    const double weight = 1.0 / static_cast<double>(batch.size());
    for (const ExpertPair* pair : batch) {
        out.loss += weight * bc_pair_term(ctx, params, *pair, opts, alpha, weight, &out.grads);
    }
    return out;
}

// ---- contrastive path ranking ------------------------------------------------

CPRBatch sample_cpr_batch(const EngineContext& ctx, const ParamSet& params,
                          const QueryInstance& instance, int k, const RunOptions& opts,
                          const HeuristicSpec& heuristic, Rng& rng) {
    if (k <= 0) {
        throw ConfigError("path-ranking batch size must be positive");
    }
    CPRBatch batch;
    batch.instance = &instance;
    batch.rollouts.reserve(static_cast<std::size_t>(k));
    batch.heuristics.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        Rollout rollout = rollout_episode(ctx, params, instance, opts, rng);
        batch.heuristics.push_back(
            heuristic_reward(rollout.traj, instance, heuristic, ctx.graph, opts.t_max));
        batch.rollouts.push_back(std::move(rollout));
    }
    return batch;
}

std::vector<double> cpr_weights(const std::vector<double>& heuristics, double alpha_cpr) {
    if (heuristics.empty()) {
        throw ConfigError("path-ranking weights need at least one candidate");
    }
    if (alpha_cpr <= 0.0) {
        throw ConfigError("ranking temperature must be positive");
    }
    double max_score = -std::numeric_limits<double>::infinity();
    for (double r : heuristics) {
        max_score = std::max(max_score, r / alpha_cpr);
    }
    std::vector<double> w(heuristics.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < heuristics.size(); ++i) {
        w[i] = std::exp(heuristics[i] / alpha_cpr - max_score);
        sum += w[i];
    }
    for (double& x : w) {
        x /= sum;
    }
    return w;
}

namespace {

// -sum_k w_k log pi(traj_k) with the distributions recomputed from the stored
// per-step states; adds gradients into `grads` when given.
double cpr_eval(const EngineContext& ctx, const ParamSet& params, const CPRBatch& batch,
                double alpha_cpr, GradSet* grads) {
    if (batch.rollouts.empty() || batch.heuristics.size() != batch.rollouts.size()) {
        throw ConfigError("path-ranking batch is empty or inconsistent");
    }
    const std::vector<double> w = cpr_weights(batch.heuristics, alpha_cpr);
    double loss = 0.0;
    for (std::size_t k = 0; k < batch.rollouts.size(); ++k) {
        const Rollout& rollout = batch.rollouts[k];
        for (std::size_t t = 0; t < rollout.traj.steps.size(); ++t) {
            const TrajectoryStep& step = rollout.traj.steps[t];
            const StepForward fwd = forward_step(rollout.states[t], ctx.extractors, params,
                                                 step.dist.legal, rollout.alpha);
            const double p = fwd.dist.probs[step.chosen];
            if (p <= 0.0) {
                throw ZeroProbabilityAction("ranked trajectory step has zero probability");
            }
            loss += -w[k] * std::log(p);
            if (grads != nullptr) {
                const Vec g = w[k] * nll_score_grad(fwd.dist, step.chosen);
                backward_step(fwd, params, g, *grads);
            }
        }
    }
    return loss;
}

}  // namespace

double cpr_loss(const EngineContext& ctx, const ParamSet& params, const CPRBatch& batch,
                double alpha_cpr) {
    return cpr_eval(ctx, params, batch, alpha_cpr, nullptr);
}

LossGrad cpr_loss_grad(const EngineContext& ctx, const ParamSet& params, const CPRBatch& batch,
                       double alpha_cpr) {
    LossGrad out;
    out.grads = zeros_like(params);
    out.loss = cpr_eval(ctx, params, batch, alpha_cpr, &out.grads);
    return out;
}

// ---- cost-aware reward ----------------------------------------------------------

EntropyEstimate answer_entropy(const EngineContext& ctx, const ParamSet& params,
                               const QueryInstance& instance, int m, const RunOptions& opts,
                               Rng& rng) {
    EntropyEstimate est;
    est.rollouts = m;
    est.low_confidence = (m <= 1);
    if (m <= 0) {
        return est;
    }
    const std::map<std::string, double> marginal =
        estimate_marginal(ctx, params, instance, m, opts, rng);
    double h = 0.0;
    for (const auto& [answer, freq] : marginal) {
        if (freq > 0.0) {
            h -= freq * std::log(freq);
        }
    }
    est.value = h;
    return est;
}

double episode_reward(const Answer& answer, const GroundTruth& truth, const Trajectory& traj,
                      const RewardSpec& spec, double answer_entropy_value) {
    const double norm = spec.cost_norm > 0.0 ? spec.cost_norm : 1.0;
    const double cost = trajectory_cost(traj, spec.cost_weights) / norm;
    return utility(answer, truth) - spec.lambda * cost - spec.gamma * answer_entropy_value;
}

namespace {

double episode_eval(const EngineContext& ctx, const ParamSet& params, const Rollout& rollout,
                    double advantage, double entropy_bonus, GradSet* grads) {
    double loss = 0.0;
    for (std::size_t t = 0; t < rollout.traj.steps.size(); ++t) {
        const TrajectoryStep& step = rollout.traj.steps[t];
        const StepForward fwd = forward_step(rollout.states[t], ctx.extractors, params,
                                             step.dist.legal, rollout.alpha);
        const double p = fwd.dist.probs[step.chosen];
        if (p <= 0.0) {
            throw ZeroProbabilityAction("replayed trajectory step has zero probability");
        }
        loss += -advantage * std::log(p) - entropy_bonus * fwd.dist.entropy();
        if (grads != nullptr) {
            Vec g = advantage * nll_score_grad(fwd.dist, step.chosen);
            if (entropy_bonus != 0.0) {
                g -= entropy_bonus * entropy_score_grad(fwd.dist);
            }
            backward_step(fwd, params, g, *grads);
        }
    }
    return loss;
}

}  // namespace

double episode_loss(const EngineContext& ctx, const ParamSet& params, const Rollout& rollout,
                    double advantage, double entropy_bonus, const RunOptions& /*opts*/) {
    return episode_eval(ctx, params, rollout, advantage, entropy_bonus, nullptr);
}

LossGrad episode_loss_grad(const EngineContext& ctx, const ParamSet& params,
                           const Rollout& rollout, double advantage, double entropy_bonus,
                           const RunOptions& /*opts*/) {
    LossGrad out;
    out.grads = zeros_like(params);
    out.loss = episode_eval(ctx, params, rollout, advantage, entropy_bonus, &out.grads);
    return out;
}

// ---- curriculum ------------------------------------------------------------------

TrainState init_train_state(const EngineContext& ctx, int feature_dim, int hidden_dim,
                            std::uint64_t seed, double weight_decay) {
    TrainState state;
    state.params = init_params(feature_dim, hidden_dim, ctx.graph.action_count(), seed);
    state.opt = init_optimizer(state.params, weight_decay);
    state.rng = make_rng(seed, 0x747261696e /* training stream */);
    return state;
}

namespace {

struct RowAccumulator {
    double cost_sum = 0.0;
    double utility_sum = 0.0;
    long episodes = 0;

    void add(double cost, double util) {
        cost_sum += cost;
        utility_sum += util;
        ++episodes;
    }
    void reset() { *this = RowAccumulator{}; }
    double mean_cost() const {
        return episodes > 0 ? cost_sum / static_cast<double>(episodes)
                            : std::numeric_limits<double>::quiet_NaN();
    }
    double mean_utility() const {
        return episodes > 0 ? utility_sum / static_cast<double>(episodes)
                            : std::numeric_limits<double>::quiet_NaN();
    }
};

void apply_update(TrainState& state, LossGrad& lg, double lr, double clip_norm,
                  const char* where) {
    require_finite(lg.loss, lg.grads, where);
    clip_global_norm(lg.grads, clip_norm);
    adamw_step(state.params, lg.grads, state.opt, lr);
}

const QueryInstance& pick_instance(const std::vector<QueryInstance>& suite, Rng& rng) {
    const std::uint64_t i = rng() % suite.size();
    return suite[static_cast<std::size_t>(i)];
}

}  // namespace

CurriculumResult run_curriculum(const EngineContext& ctx,
                                const std::vector<QueryInstance>& train_suite,
                                const std::vector<ExpertPair>& expert_pairs,
                                const CurriculumConfig& config, TrainState initial) {
    CurriculumResult result;
    result.state = std::move(initial);
    TrainState& ts = result.state;

    const PhaseBudgets& budget = config.phases;
    const bool needs_suite = budget.cpr_steps > 0 || budget.rl_episodes > 0;
    if (needs_suite && train_suite.empty()) {
        throw EmptySuite("training requires a non-empty instance suite");
    }
    if (budget.bc_steps > 0 && expert_pairs.empty()) {
        throw ConfigError("warmup phase requires expert demonstrations");
    }

    const auto report = [&](int phase, long step, double value, double lr, double alpha,
                            const RowAccumulator& acc) {
        result.rows.push_back(PhaseRow{phase, step, value, lr, alpha, acc.mean_cost(),
                                       acc.mean_utility()});
    };

    // Phase 1: behaviour cloning on expert pairs.
    if (ts.phase == 1) {
        RowAccumulator acc;
        for (long s = ts.step_in_phase; s < budget.bc_steps; ++s) {
            const double alpha = temperature(ts.global_step, config.temp);
            std::vector<const ExpertPair*> batch;
            batch.reserve(static_cast<std::size_t>(budget.bc_batch));
            for (int b = 0; b < budget.bc_batch; ++b) {
                batch.push_back(&expert_pairs[ts.rng() % expert_pairs.size()]);
            }
            LossGrad lg = bc_loss_grad(ctx, ts.params, batch, config.run, alpha);
            const double lr = cosine_lr(s, budget.bc_steps, config.optim.lr_bc);
            apply_update(ts, lg, lr, config.optim.clip_norm, "warmup");
            ++ts.global_step;
            ts.step_in_phase = s + 1;
            if ((s + 1) % config.report_every == 0 || s + 1 == budget.bc_steps) {
                report(1, s + 1, lg.loss, lr, alpha, acc);
            }
        }
        ts.phase = 2;
        ts.step_in_phase = 0;
    }

    // Phase 2: contrastive ranking of sampled candidate paths.
    if (ts.phase == 2) {
        RowAccumulator acc;
        for (long s = ts.step_in_phase; s < budget.cpr_steps; ++s) {
            const double alpha = temperature(ts.global_step, config.temp);
            RunOptions opts = config.run;
            opts.alpha = alpha;
            const QueryInstance& instance = pick_instance(train_suite, ts.rng);
            const CPRBatch batch = sample_cpr_batch(ctx, ts.params, instance, budget.cpr_k, opts,
                                                    config.heuristic, ts.rng);
            for (const Rollout& r : batch.rollouts) {
                const double norm = config.reward.cost_norm > 0.0 ? config.reward.cost_norm : 1.0;
                acc.add(trajectory_cost(r.traj, config.reward.cost_weights) / norm,
                        utility(r.answer, instance.truth));
            }
            LossGrad lg = cpr_loss_grad(ctx, ts.params, batch, config.reward.alpha_cpr);
            const double lr = cosine_lr(s, budget.cpr_steps, config.optim.lr_cpr);
            apply_update(ts, lg, lr, config.optim.clip_norm, "path ranking");
            ++ts.global_step;
            ts.step_in_phase = s + 1;
            if ((s + 1) % config.report_every == 0 || s + 1 == budget.cpr_steps) {
                report(2, s + 1, lg.loss, lr, alpha, acc);
                acc.reset();
            }
        }
        ts.phase = 3;
        ts.step_in_phase = 0;
    }

    // Phase 3: cost-aware policy gradient with an EMA baseline.
    if (ts.phase == 3) {
        RowAccumulator acc;
        double reward_sum = 0.0;
        long reward_count = 0;
        for (long s = ts.step_in_phase; s < budget.rl_episodes; ++s) {
            const double alpha = temperature(ts.global_step, config.temp);
            RunOptions opts = config.run;
            opts.alpha = alpha;
            const QueryInstance& instance = pick_instance(train_suite, ts.rng);
            const Rollout rollout = rollout_episode(ctx, ts.params, instance, opts, ts.rng);

            double entropy_value = 0.0;
            if (config.reward.gamma != 0.0 && config.reward.entropy_rollouts > 0) {
                entropy_value = answer_entropy(ctx, ts.params, instance,
                                               config.reward.entropy_rollouts, opts, ts.rng)
                                    .value;
            }
            const double reward = episode_reward(rollout.answer, instance.truth, rollout.traj,
                                                 config.reward, entropy_value);
            const double advantage = reward - ts.baseline.value;

            LossGrad lg = episode_loss_grad(ctx, ts.params, rollout, advantage,
                                            config.reward.entropy_bonus, opts);
            const double lr = cosine_lr(s, budget.rl_episodes, config.optim.lr_rl);
            apply_update(ts, lg, lr, config.optim.clip_norm, "policy gradient");
            ts.baseline.update(reward);

            const double norm = config.reward.cost_norm > 0.0 ? config.reward.cost_norm : 1.0;
            acc.add(trajectory_cost(rollout.traj, config.reward.cost_weights) / norm,
                    utility(rollout.answer, instance.truth));
            reward_sum += reward;
            ++reward_count;

            ++ts.global_step;
            ts.step_in_phase = s + 1;
            if ((s + 1) % config.report_every == 0 || s + 1 == budget.rl_episodes) {
                report(3, s + 1, reward_sum / static_cast<double>(reward_count), lr, alpha, acc);
                acc.reset();
                reward_sum = 0.0;
                reward_count = 0;
            }
        }
        ts.phase = 4;  // finished
        ts.step_in_phase = 0;
    }

    return result;
}

}  // namespace toolflow
