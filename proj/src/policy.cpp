#include "toolflow/policy.hpp"

#include <algorithm>
#include <cmath>

namespace toolflow {

namespace {

Mat uniform_init(int rows, int cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
    }
    return m;
}

}  // namespace

PolicyHead init_policy_head(int hidden_dim, int action_count, Rng& rng) {
    PolicyHead head;
    head.w1 = uniform_init(hidden_dim, kStateDim, rng);
    head.w2 = uniform_init(action_count, hidden_dim, rng);
    return head;
}

double temperature(long step, const TemperatureSchedule& schedule) {
    if (schedule.total_steps <= 0 || step >= schedule.total_steps) return schedule.end;
    if (step <= 0) return schedule.start;
    const double frac = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
    return schedule.start + (schedule.end - schedule.start) * frac;
}

int ActionDistribution::argmax() const {
    int best = 0;
    for (int i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    return best;
}

double ActionDistribution::entropy() const {
    double h = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

int ActionDistribution::unmasked_count() const {
    return static_cast<int>(std::count(mask.begin(), mask.end(), true));
}

ActionDistribution action_distribution(const Vec& h, const OrderedActionSet& legal,
                                       const PolicyHead& head, double alpha) {
    if (legal.empty()) throw Error("legal action set must be non-empty");
    if (head.w1.cols() != h.size()) {
        throw DimensionMismatch("policy head expects state width " + std::to_string(head.w1.cols()) +
                                " but got " + std::to_string(h.size()));
    }
    if (alpha <= 0.0) throw Error("temperature must be positive");

    ActionDistribution dist;
    dist.legal = legal;
    dist.alpha = alpha;

    const Vec hidden = (head.w1 * h).cwiseMax(0.0);
    dist.logits.noalias() = head.w2 * hidden;

    const int n = head.action_count();
    dist.mask.assign(static_cast<std::size_t>(n), false);
    for (int gi : legal.global_indices) {
        if (gi < 0 || gi >= n) {
            throw DimensionMismatch("legal action index " + std::to_string(gi) +
                                    " is outside the action table of size " + std::to_string(n));
        }
        dist.mask[static_cast<std::size_t>(gi)] = true;
    }

    // Masked softmax over scaled scores; masked entries underflow to exact zero.
    Vec scaled(n);
    for (int i = 0; i < n; ++i) {
        scaled[i] = (dist.mask[static_cast<std::size_t>(i)] ? dist.logits[i] : kMaskedLogit) / alpha;
    }
    const double max_scaled = scaled.maxCoeff();
    Vec expd(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        expd[i] = std::exp(scaled[i] - max_scaled);
        total += expd[i];
    }

    dist.probs.resize(static_cast<int>(legal.size()));
    for (std::size_t i = 0; i < legal.size(); ++i) {
        dist.probs[static_cast<int>(i)] = expd[legal.global_indices[i]] / total;
    }
    for (int i = 0; i < n; ++i) {
        if (!dist.mask[static_cast<std::size_t>(i)] && expd[i] / total != 0.0) {
            throw Error("masked action retained non-zero probability");
        }
    }
    return dist;
}

int sample_action_index(const ActionDistribution& dist, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    double cdf = 0.0;
    const int n = static_cast<int>(dist.probs.size());
    for (int i = 0; i < n; ++i) {
        cdf += dist.probs[i];
        if (u < cdf) return i;
    }
    // Numerical residue: fall back to the last action with non-zero mass.
    for (int i = n - 1; i >= 0; --i) {
        if (dist.probs[i] > 0.0) return i;
    }
    return n - 1;
}

Action sample_action(const ActionDistribution& dist, Rng& rng) {
    return dist.legal.actions[static_cast<std::size_t>(sample_action_index(dist, rng))];
}

double trajectory_logprob(const Trajectory& traj) {
    double logp = 0.0;
    for (const TrajectoryStep& step : traj.steps) {
        const double p = step.prob();
        if (p <= 0.0) {
            throw ZeroProbabilityAction("chosen action '" + step.action().name() +
                                        "' has zero probability");
        }
        logp += std::log(p);
    }
    return logp;
}

}  // namespace toolflow
