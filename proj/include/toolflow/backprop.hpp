#pragma once

#include "toolflow/encoder.hpp"
#include "toolflow/optcore.hpp"
#include "toolflow/policy.hpp"

namespace toolflow {

// Forward pass of one controller step with every intermediate needed for the
// closed-form backward pass.
struct StepForward {
    EncodeCache enc;
    Vec hidden_pre;   // w1 * h
    Vec hidden;       // relu(hidden_pre)
    ActionDistribution dist;
};

StepForward forward_step(const State& state, const FeatureExtractors& ext, const ParamSet& params,
                         const OrderedActionSet& legal, double alpha);

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(scaled masked
// scores) restricted to the legal actions (aligned with dist.legal). Rows of
// w2 belonging to masked actions receive no gradient.
void backward_step(const StepForward& fwd, const ParamSet& params, const Vec& g_scaled_legal,
                   GradSet& grads);

// d(-log p[chosen])/d(scaled scores) = p - onehot(chosen), legal-aligned.
Vec nll_score_grad(const ActionDistribution& dist, int chosen);

// d(entropy)/d(scaled scores) = -p .* (log p + H), legal-aligned.
Vec entropy_score_grad(const ActionDistribution& dist);

}  // namespace toolflow
