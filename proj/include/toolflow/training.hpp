#pragma once

#include "toolflow/backprop.hpp"
#include "toolflow/environment.hpp"
#include "toolflow/optcore.hpp"
#include "toolflow/runtime.hpp"

#include <vector>

namespace toolflow {

// ---- expert demonstrations -------------------------------------------------

struct ExpertPair {
    State state;
    Action action;
};

// Rolls the scripted expert over every instance and records a (state, action)
// pair per decision, including the terminal EarlyExit unless exits are
// disabled by the run options.
std::vector<ExpertPair> collect_expert_pairs(const EngineContext& ctx,
                                             const std::vector<QueryInstance>& suite,
                                             const RunOptions& opts);

// Runtime-masked legal set for a stored state; the step index and visited
// containers are reconstructed from the state's memory.
OrderedActionSet legal_for_state(const SupernetGraph& graph, const State& state,
                                 const RunOptions& opts);

struct LossGrad {
    double loss = 0.0;
    GradSet grads;
};

// Mean negative log-likelihood of the expert actions. Throws
// IllegalExpertAction when a demonstrated action is outside the legal set.
double bc_loss(const EngineContext& ctx, const ParamSet& params,
               const std::vector<const ExpertPair*>& batch, const RunOptions& opts, double alpha);
LossGrad bc_loss_grad(const EngineContext& ctx, const ParamSet& params,
                      const std::vector<const ExpertPair*>& batch, const RunOptions& opts,
                      double alpha);

// ---- contrastive path ranking ------------------------------------------------

struct CPRBatch {
    const QueryInstance* instance = nullptr;
    std::vector<Rollout> rollouts;
    std::vector<double> heuristics;  // heuristic reward per rollout
};

CPRBatch sample_cpr_batch(const EngineContext& ctx, const ParamSet& params,
                          const QueryInstance& instance, int k, const RunOptions& opts,
                          const HeuristicSpec& heuristic, Rng& rng);

// softmax(heuristics / alpha_cpr): the listwise target weights.
std::vector<double> cpr_weights(const std::vector<double>& heuristics, double alpha_cpr);

// -sum_k w_k log pi(traj_k); the weights are treated as constants, so the
// gradient flows only through the trajectory log-likelihoods.
double cpr_loss(const EngineContext& ctx, const ParamSet& params, const CPRBatch& batch,
                double alpha_cpr);
LossGrad cpr_loss_grad(const EngineContext& ctx, const ParamSet& params, const CPRBatch& batch,
                       double alpha_cpr);

// ---- cost-aware reward ----------------------------------------------------------

struct RewardSpec {
    double lambda = 0.03;       // cost pressure
    double gamma = 0.01;        // answer-uncertainty pressure
    int entropy_rollouts = 4;   // marginal-estimation rollouts per episode
    CostWeights cost_weights;
    double cost_norm = 1.0;     // suite cost normalizer
    double entropy_bonus = 0.01;  // per-step policy entropy bonus
    double alpha_cpr = 0.5;     // ranking temperature
};

struct EntropyEstimate {
    double value = 0.0;
    int rollouts = 0;
    bool low_confidence = false;  // single-rollout estimate is zero by construction
};

// Empirical entropy of the answer marginal, sharing the estimator (and hence
// the exact distribution for a given generator state) with estimate_marginal.
EntropyEstimate answer_entropy(const EngineContext& ctx, const ParamSet& params,
                               const QueryInstance& instance, int m, const RunOptions& opts,
                               Rng& rng);

// utility - lambda * normalized cost - gamma * answer entropy.
double episode_reward(const Answer& answer, const GroundTruth& truth, const Trajectory& traj,
                      const RewardSpec& spec, double answer_entropy_value);

struct Baseline {
    double value = 0.0;
    double decay = 0.99;

    void update(double reward) { value = decay * value + (1.0 - decay) * reward; }
};

// Per-episode surrogate whose gradient is the advantage-weighted score plus
// the per-step entropy bonus: -advantage * log pi(traj) - bonus * sum_t H_t.
double episode_loss(const EngineContext& ctx, const ParamSet& params, const Rollout& rollout,
                    double advantage, double entropy_bonus, const RunOptions& opts);
LossGrad episode_loss_grad(const EngineContext& ctx, const ParamSet& params,
                           const Rollout& rollout, double advantage, double entropy_bonus,
                           const RunOptions& opts);

// ---- curriculum ------------------------------------------------------------------

struct PhaseBudgets {
    long bc_steps = 1500;
    int bc_batch = 64;
    long cpr_steps = 600;
    int cpr_k = 8;
    bool cpr_fresh_samples = true;  // resample per update (false reuses a buffer)
    long rl_episodes = 1500;

    long total() const { return bc_steps + cpr_steps + rl_episodes; }
};

struct OptimConfig {
    double lr_bc = 3e-3;
    double lr_cpr = 1e-3;
    double lr_rl = 3e-4;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
};

struct PhaseRow {
    int phase = 0;
    long step = 0;                // 1-based step within the phase
    double loss_or_reward = 0.0;
    double lr = 0.0;
    double temperature = 0.0;
    double mean_cost = std::numeric_limits<double>::quiet_NaN();
    double mean_utility = std::numeric_limits<double>::quiet_NaN();
};

struct CurriculumConfig {
    PhaseBudgets phases;
    OptimConfig optim;
    TemperatureSchedule temp;
    RewardSpec reward;
    HeuristicSpec heuristic;
    RunOptions run;
    long report_every = 10;
};

// Resumable training snapshot; the RNG stream drives every sampling decision.
struct TrainState {
    ParamSet params;
    OptimizerState opt;
    Baseline baseline;
    long global_step = 0;
    int phase = 1;
    long step_in_phase = 0;
    Rng rng;
};

TrainState init_train_state(const EngineContext& ctx, int feature_dim, int hidden_dim,
                            std::uint64_t seed, double weight_decay);

struct CurriculumResult {
    TrainState state;
    std::vector<PhaseRow> rows;
};

// Runs the remaining phases of the three-phase schedule starting from
// `initial` (fresh or restored from a checkpoint). Throws NonFiniteLoss when
// a loss or gradient stops being finite.
CurriculumResult run_curriculum(const EngineContext& ctx,
                                const std::vector<QueryInstance>& train_suite,
                                const std::vector<ExpertPair>& expert_pairs,
                                const CurriculumConfig& config, TrainState initial);

}  // namespace toolflow
