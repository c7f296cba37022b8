#include "toolflow/optcore.hpp"

#include <cmath>

namespace toolflow {

std::vector<std::pair<std::string, Mat*>> ParamSet::named() {
    return {{"w_image", &enc.w_image},
            {"w_query", &enc.w_query},
            {"w_memory", &enc.w_memory},
            {"w1", &head.w1},
            {"w2", &head.w2}};
}

std::vector<std::pair<std::string, const Mat*>> ParamSet::named() const {
    return {{"w_image", &enc.w_image},
            {"w_query", &enc.w_query},
            {"w_memory", &enc.w_memory},
            {"w1", &head.w1},
            {"w2", &head.w2}};
}

ParamSet init_params(int feature_dim, int hidden_dim, int action_count, std::uint64_t seed) {
    ParamSet p;
    Rng enc_rng = make_rng(seed, 0x656e63);
    p.enc = init_encoder_params(feature_dim, enc_rng);
    Rng head_rng = make_rng(seed, 0x68656164);
    p.head = init_policy_head(hidden_dim, action_count, head_rng);
    return p;
}

std::vector<std::pair<std::string, Mat*>> GradSet::named() {
    return {{"w_image", &w_image}, {"w_query", &w_query}, {"w_memory", &w_memory},
            {"w1", &w1},           {"w2", &w2}};
}

std::vector<std::pair<std::string, const Mat*>> GradSet::named() const {
    return {{"w_image", &w_image}, {"w_query", &w_query}, {"w_memory", &w_memory},
            {"w1", &w1},           {"w2", &w2}};
}

void GradSet::set_zero() {
    for (auto& [name, m] : named()) {
        (void)name;
        m->setZero();
    }
}

void GradSet::add_scaled(const GradSet& other, double scale) {
    auto mine = named();
    auto theirs = other.named();
    for (std::size_t i = 0; i < mine.size(); ++i) {
        *mine[i].second += scale * *theirs[i].second;
    }
}

void GradSet::scale(double s) {
    for (auto& [name, m] : named()) {
        (void)name;
        *m *= s;
    }
}

bool GradSet::all_finite() const {
    for (const auto& [name, m] : named()) {
        (void)name;
        if (!m->allFinite()) return false;
    }
    return true;
}

GradSet zeros_like(const ParamSet& params) {
    GradSet g;
    g.w_image = Mat::Zero(params.enc.w_image.rows(), params.enc.w_image.cols());
    g.w_query = Mat::Zero(params.enc.w_query.rows(), params.enc.w_query.cols());
    g.w_memory = Mat::Zero(params.enc.w_memory.rows(), params.enc.w_memory.cols());
    g.w1 = Mat::Zero(params.head.w1.rows(), params.head.w1.cols());
    g.w2 = Mat::Zero(params.head.w2.rows(), params.head.w2.cols());
    return g;
}

double global_norm(const GradSet& grads) {
    double sq = 0.0;
    for (const auto& [name, m] : grads.named()) {
        (void)name;
        sq += m->squaredNorm();
    }
    return std::sqrt(sq);
}

void clip_global_norm(GradSet& grads, double max_norm) {
    const double norm = global_norm(grads);
    if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
}

double cosine_lr(long step, long total_steps, double base_lr) {
    if (total_steps <= 0) return base_lr;
    if (step <= 0) return base_lr;
    if (step >= total_steps) return 0.0;
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * frac));
}

OptimizerState init_optimizer(const ParamSet& params, double weight_decay) {
    OptimizerState s;
    s.weight_decay = weight_decay;
    s.m = zeros_like(params);
    s.v = zeros_like(params);
    return s;
}

void adamw_step(ParamSet& params, const GradSet& grads, OptimizerState& state, double lr) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    auto ps = params.named();
    auto gs = grads.named();
    auto ms = state.m.named();
    auto vs = state.v.named();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        Mat& p = *ps[i].second;
        const Mat& g = *gs[i].second;
        Mat& m = *ms[i].second;
        Mat& v = *vs[i].second;

        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);

        const Mat m_hat = m / bc1;
        const Mat v_hat = v / bc2;
        p *= (1.0 - lr * state.weight_decay);
        p -= lr * (m_hat.array() / (v_hat.array().sqrt() + state.eps)).matrix();
    }
}

}  // namespace toolflow
