#pragma once

#include "toolflow/common.hpp"
#include "toolflow/encoder.hpp"
#include "toolflow/errors.hpp"
#include "toolflow/supernet.hpp"

#include <optional>
#include <vector>

namespace toolflow {

// Pre-softmax stand-in for minus infinity on masked actions; large enough
// that masked probabilities underflow to exactly zero.
inline constexpr double kMaskedLogit = -1e9;

// Two-layer action scorer: logits = w2 * relu(w1 * h).
struct PolicyHead {
    Mat w1;  // hidden x kStateDim
    Mat w2;  // action_count x hidden

    int hidden_dim() const { return static_cast<int>(w1.rows()); }
    int action_count() const { return static_cast<int>(w2.rows()); }
};

PolicyHead init_policy_head(int hidden_dim, int action_count, Rng& rng);

// Linear anneal from `start` to `end` over `total_steps`, clamped at the end
// value afterwards. Inference uses the end value.
struct TemperatureSchedule {
    double start = 2.0;
    double end = 0.8;
    long total_steps = 1;
};

double temperature(long step, const TemperatureSchedule& schedule);

// Masked categorical distribution over the legal actions at one position.
// `logits` and `mask` cover the graph-wide action table; probabilities of
// masked actions are exactly zero and `probs` aligns with `legal.actions`.
struct ActionDistribution {
    OrderedActionSet legal;
    Vec probs;                // |legal|
    Vec logits;               // action_count, pre-mask scores
    std::vector<bool> mask;   // action_count, true = legal
    double alpha = 1.0;

    int argmax() const;       // highest probability, lowest index wins ties
    double entropy() const;   // nats, over the legal support
    int unmasked_count() const;
};

// softmax(masked(logits) / alpha) with the mask applied before the softmax.
// Requires a non-empty legal set (EarlyExit is always available).
ActionDistribution action_distribution(const Vec& h, const OrderedActionSet& legal,
                                       const PolicyHead& head, double alpha);

// Inverse-CDF draw; returns the index into `legal.actions`.
int sample_action_index(const ActionDistribution& dist, Rng& rng);
Action sample_action(const ActionDistribution& dist, Rng& rng);

// ---- trajectories -------------------------------------------------------

enum class Termination { EarlyExit, MaxSteps };

struct TrajectoryStep {
    std::uint64_t state_digest = 0;
    ActionDistribution dist;
    int chosen = -1;  // index into dist.legal.actions
    std::optional<ToolOutput> output;  // absent for EarlyExit
    bool context_empty = true;         // tool input had no routed context
    bool degraded = false;             // tool failure or routing fault

    const Action& action() const { return dist.legal.actions[static_cast<std::size_t>(chosen)]; }
    double prob() const { return dist.probs[chosen]; }
};

// One sampled workflow: at most one EarlyExit, only as the final step.
struct Trajectory {
    std::vector<TrajectoryStep> steps;
    Termination terminated_by = Termination::MaxSteps;

    std::size_t length() const { return steps.size(); }
    bool ends_with_exit() const { return terminated_by == Termination::EarlyExit; }
};

// Sum of log-probabilities of the chosen actions. Throws
// ZeroProbabilityAction if any chosen action has zero probability.
double trajectory_logprob(const Trajectory& traj);

}  // namespace toolflow
