#include "toolflow/optcore.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace toolflow;
using namespace toolflow::testing;

namespace {

ParamSet tiny_params(std::uint64_t seed = 5) {
    return init_params(/*feature_dim=*/8, /*hidden_dim=*/4, /*action_count=*/3, seed);
}

}  // namespace

TEST_CASE("named tensors expose the full parameter set in fixed order") {
    ParamSet params = tiny_params();
    auto named = params.named();
    REQUIRE(named.size() == 5);
    CHECK(named[0].first == "w_image");
    CHECK(named[1].first == "w_query");
    CHECK(named[2].first == "w_memory");
    CHECK(named[3].first == "w1");
    CHECK(named[4].first == "w2");
    CHECK(named[0].second == &params.enc.w_image);
    CHECK(named[3].second == &params.head.w1);
    CHECK(named[4].second == &params.head.w2);
}

TEST_CASE("init_params is seed-deterministic") {
    const ParamSet a = tiny_params(5);
    const ParamSet b = tiny_params(5);
    const ParamSet c = tiny_params(6);
    CHECK((a.head.w1 - b.head.w1).norm() == 0.0);
    CHECK((a.enc.w_image - b.enc.w_image).norm() == 0.0);
    CHECK((a.head.w1 - c.head.w1).norm() > 0.0);
}

TEST_CASE("zeros_like matches shapes and set_zero clears") {
    const ParamSet params = tiny_params();
    GradSet g = zeros_like(params);
    CHECK(g.w_image.rows() == params.enc.w_image.rows());
    CHECK(g.w_image.cols() == params.enc.w_image.cols());
    CHECK(g.w2.rows() == params.head.w2.rows());
    CHECK(global_norm(g) == 0.0);

    g.w1.setConstant(2.0);
    CHECK(global_norm(g) > 0.0);
    g.set_zero();
    CHECK(global_norm(g) == 0.0);
}

TEST_CASE("grad arithmetic: add_scaled and scale") {
    const ParamSet params = tiny_params();
    GradSet a = zeros_like(params);
    GradSet b = zeros_like(params);
    a.w1(0, 0) = 1.0;
    b.w1(0, 0) = 2.0;
    b.w2(1, 1) = 4.0;
    a.add_scaled(b, 0.5);
    CHECK(a.w1(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(a.w2(1, 1) == doctest::Approx(2.0).epsilon(1e-15));
    a.scale(0.25);
    CHECK(a.w1(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("all_finite flags NaN and infinity") {
    const ParamSet params = tiny_params();
    GradSet g = zeros_like(params);
    CHECK(g.all_finite());
    g.w_query(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(g.all_finite());
    g.w_query(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_FALSE(g.all_finite());
}

TEST_CASE("global norm spans all tensors") {
    const ParamSet params = tiny_params();
    GradSet g = zeros_like(params);
    g.w1(0, 0) = 3.0;
    g.w2(0, 0) = 4.0;
    CHECK(global_norm(g) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("clipping leaves small gradients untouched") {
    const ParamSet params = tiny_params();
    GradSet g = zeros_like(params);
    g.w1(0, 0) = 0.5;
    clip_global_norm(g, 1.0);
    CHECK(g.w1(0, 0) == 0.5);  // bitwise: no rescale at or below the threshold
}

TEST_CASE("clipping rescales a norm-4 gradient onto the unit sphere") {
    const ParamSet params = tiny_params();
    GradSet g = zeros_like(params);
    g.w1(0, 0) = 4.0;
    g.w_memory(2, 3) = 1.0;  // norm sqrt(17), then scaled
    const double before = global_norm(g);
    clip_global_norm(g, 1.0);
    CHECK(std::abs(global_norm(g) - 1.0) < 1e-9);
    CHECK(g.w1(0, 0) == doctest::Approx(4.0 / before).epsilon(1e-12));
    CHECK(g.w_memory(2, 3) == doctest::Approx(1.0 / before).epsilon(1e-12));
}

TEST_CASE("clipping a zero gradient is a no-op") {
    const ParamSet params = tiny_params();
    GradSet g = zeros_like(params);
    clip_global_norm(g, 1.0);
    CHECK(global_norm(g) == 0.0);
    CHECK(g.all_finite());
}

TEST_CASE("cosine schedule hits base, half, and zero") {
    CHECK(cosine_lr(0, 100, 3e-3) == doctest::Approx(3e-3).epsilon(1e-12));
    CHECK(cosine_lr(50, 100, 3e-3) == doctest::Approx(1.5e-3).epsilon(1e-12));
    CHECK(cosine_lr(100, 100, 3e-3) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_lr(250, 100, 3e-3) == 0.0);
}

TEST_CASE("one AdamW step matches the hand-computed update") {
    ParamSet params = tiny_params();
    params.head.w1.setZero();
    params.head.w1(0, 0) = 1.0;
    OptimizerState opt = init_optimizer(params, /*weight_decay=*/0.01);
    CHECK(opt.step == 0);
    CHECK(global_norm(opt.m) == 0.0);
    CHECK(global_norm(opt.v) == 0.0);

    GradSet g = zeros_like(params);
    g.w1(0, 0) = 1.0;
    const double lr = 0.1;
    adamw_step(params, g, opt, lr);
    CHECK(opt.step == 1);

    // m_hat = 0.1/(1-0.9) = 1, v_hat = 0.001/(1-0.999) = 1, so the Adam
    // delta is lr/(1+eps) and the decoupled decay contributes lr*wd*p.
    const double m_hat = 0.1 / (1.0 - 0.9);
    const double v_hat = 0.001 / (1.0 - 0.999);
    const double expected =
        1.0 - lr * 0.01 * 1.0 - lr * m_hat / (std::sqrt(v_hat) + 1e-8);
    CHECK(params.head.w1(0, 0) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(params.head.w1(0, 0) == doctest::Approx(0.899000001).epsilon(1e-7));
}

TEST_CASE("weight decay shrinks parameters even with zero gradient") {
    ParamSet params = tiny_params();
    params.head.w1.setConstant(1.0);
    OptimizerState opt = init_optimizer(params, 0.01);
    const GradSet g = zeros_like(params);
    adamw_step(params, g, opt, 0.1);
    CHECK(params.head.w1(0, 0) == doctest::Approx(0.999).epsilon(1e-12));
}

TEST_CASE("zero gradient with zero weight decay leaves parameters unchanged") {
    ParamSet params = tiny_params();
    const Mat w1_before = params.head.w1;
    OptimizerState opt = init_optimizer(params, /*weight_decay=*/0.0);
    const GradSet g = zeros_like(params);
    adamw_step(params, g, opt, 0.1);
    adamw_step(params, g, opt, 0.1);
    CHECK((params.head.w1 - w1_before).norm() == 0.0);
    CHECK(opt.step == 2);
}

TEST_CASE("repeated steps with a constant gradient keep descending") {
    ParamSet params = tiny_params();
    params.head.w1.setZero();
    params.head.w1(0, 0) = 1.0;
    OptimizerState opt = init_optimizer(params, 0.0);
    GradSet g = zeros_like(params);
    double prev = params.head.w1(0, 0);
    for (int i = 0; i < 5; ++i) {
        g.set_zero();
        g.w1(0, 0) = 1.0;
        adamw_step(params, g, opt, 0.01);
        CHECK(params.head.w1(0, 0) < prev);
        prev = params.head.w1(0, 0);
    }
}
