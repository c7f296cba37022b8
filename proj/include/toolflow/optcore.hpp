#pragma once

#include "toolflow/common.hpp"
#include "toolflow/encoder.hpp"
#include "toolflow/policy.hpp"

#include <string>
#include <utility>
#include <vector>

namespace toolflow {

// The complete trainable parameter set: three state projections plus the
// two-layer action scorer. Feature extractors stay frozen.
struct ParamSet {
    EncoderParams enc;
    PolicyHead head;

    std::vector<std::pair<std::string, Mat*>> named();
    std::vector<std::pair<std::string, const Mat*>> named() const;
};

// Seeded initialization for a given graph/action-table width.
ParamSet init_params(int feature_dim, int hidden_dim, int action_count, std::uint64_t seed);

// Gradients with the same shapes as ParamSet.
struct GradSet {
    Mat w_image, w_query, w_memory, w1, w2;

    std::vector<std::pair<std::string, Mat*>> named();
    std::vector<std::pair<std::string, const Mat*>> named() const;
    void set_zero();
    void add_scaled(const GradSet& other, double scale);
    void scale(double s);
    bool all_finite() const;
};

GradSet zeros_like(const ParamSet& params);

// L2 norm across every tensor; scales all gradients down when the norm
// exceeds `max_norm` (idempotent at or below the threshold).
double global_norm(const GradSet& grads);
void clip_global_norm(GradSet& grads, double max_norm);

// base_lr * 0.5 * (1 + cos(pi * step / total_steps)), clamped at zero past
// the horizon.
double cosine_lr(long step, long total_steps, double base_lr);

// Decoupled-weight-decay Adam. Moments are stored per tensor; `step` counts
// applied updates for bias correction.
struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    long step = 0;
    GradSet m;
    GradSet v;
};

OptimizerState init_optimizer(const ParamSet& params, double weight_decay = 0.01);

// One update: p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
void adamw_step(ParamSet& params, const GradSet& grads, OptimizerState& state, double lr);

}  // namespace toolflow
