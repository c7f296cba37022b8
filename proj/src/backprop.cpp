#include "toolflow/backprop.hpp"

#include <cmath>

namespace toolflow {

StepForward forward_step(const State& state, const FeatureExtractors& ext, const ParamSet& params,
                         const OrderedActionSet& legal, double alpha) {
    StepForward f;
    f.enc = encode_state_cached(state, ext, params.enc);
    f.hidden_pre.noalias() = params.head.w1 * f.enc.h;
    f.hidden = f.hidden_pre.cwiseMax(0.0);
    f.dist = action_distribution(f.enc.h, legal, params.head, alpha);
    return f;
}

void backward_step(const StepForward& fwd, const ParamSet& params, const Vec& g_scaled_legal,
                   GradSet& grads) {
    const ActionDistribution& dist = fwd.dist;
    const std::size_t n_legal = dist.legal.size();
    if (g_scaled_legal.size() != static_cast<int>(n_legal)) {
        throw DimensionMismatch("score gradient width does not match the legal action set");
    }

    // Scores were logits/alpha on legal entries; masked entries are constant.
    // d(loss)/d(logit_i) = g_scaled_i / alpha on legal rows, zero elsewhere.
    const double inv_alpha = 1.0 / dist.alpha;
    Vec d_hidden = Vec::Zero(params.head.w2.cols());
    for (std::size_t i = 0; i < n_legal; ++i) {
        const double g_logit = g_scaled_legal[static_cast<int>(i)] * inv_alpha;
        if (g_logit == 0.0) continue;
        const int row = dist.legal.global_indices[i];
        grads.w2.row(row).noalias() += g_logit * fwd.hidden.transpose();
        d_hidden.noalias() += g_logit * params.head.w2.row(row).transpose();
    }

    // ReLU gate.
    Vec d_pre = d_hidden;
    for (int i = 0; i < d_pre.size(); ++i) {
        if (fwd.hidden_pre[i] <= 0.0) d_pre[i] = 0.0;
    }

    grads.w1.noalias() += d_pre * fwd.enc.h.transpose();
    Vec d_h = params.head.w1.transpose() * d_pre;

    // Layer norm backward (no affine): h is the normalized vector itself.
    const double n = static_cast<double>(d_h.size());
    const double mean_dh = d_h.mean();
    const double mean_dh_h = d_h.dot(fwd.enc.h) / n;
    Vec d_z = (d_h.array() - mean_dh - fwd.enc.h.array() * mean_dh_h).matrix() * fwd.enc.inv_sigma;

    grads.w_image.noalias() += d_z.head(kImageProjDim) * fwd.enc.xi.transpose();
    grads.w_query.noalias() += d_z.segment(kImageProjDim, kQueryProjDim) * fwd.enc.zeta.transpose();
    grads.w_memory.noalias() += d_z.tail(kMemoryProjDim) * fwd.enc.mu.transpose();
}

Vec nll_score_grad(const ActionDistribution& dist, int chosen) {
    Vec g = dist.probs;
    g[chosen] -= 1.0;
    return g;
}

Vec entropy_score_grad(const ActionDistribution& dist) {
    const double h = dist.entropy();
    Vec g = Vec::Zero(dist.probs.size());
    for (int i = 0; i < dist.probs.size(); ++i) {
        const double p = dist.probs[i];
        if (p > 0.0) g[i] = -p * (std::log(p) + h);
    }
    return g;
}

}  // namespace toolflow
