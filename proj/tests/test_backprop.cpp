#include "toolflow/backprop.hpp"

#include "oracles.hpp"
#include "toolflow/runtime.hpp"

#include <doctest.h>

#include <cmath>

using namespace toolflow;
using namespace toolflow::testing;

namespace {

State entry_state(const std::string& query, std::uint64_t nonce) {
    State s;
    s.query = query;
    s.context = "context line";
    s.image.width = 4;
    s.image.height = 4;
    s.image.data.assign(16, 0.25);
    s.image.nonce = nonce;
    s.position = kEntryPosition;
    return s;
}

}  // namespace

TEST_CASE("finite-difference harness reproduces a quadratic gradient") {
    TestWorld world = make_chain_world({ContainerType::Classify});
    ParamSet params = make_params_for(world, 8, 1, 16);

    const auto loss_fn = [&]() { return 0.5 * params.head.w1.squaredNorm(); };
    GradSet analytic = zeros_like(params);
    analytic.w1 = params.head.w1;

    Rng rng = make_rng(1, 1);
    const FdReport report = fd_check_gradients(params, loss_fn, analytic, 6, rng);
    CHECK(report.checked > 0);
    CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("negative log-likelihood gradient matches finite differences") {
    TestWorld world = make_chain_world({ContainerType::Classify, ContainerType::Report},
                                       /*tools_per_container=*/2);
    ParamSet params = make_params_for(world, 12, 2, 16);
    const State s = entry_state("grade the finding", 99);
    const RunOptions opts;
    const OrderedActionSet legal =
        runtime_legal_actions(world.graph, s.position, opts, 1, {});
    REQUIRE(legal.size() >= 2);

    for (int chosen = 0; chosen < 2; ++chosen) {
        const double alpha = (chosen == 0) ? 1.0 : 1.3;
        const auto loss_fn = [&]() {
            const StepForward fwd = forward_step(s, world.extractors, params, legal, alpha);
            return -std::log(fwd.dist.probs[chosen]);
        };
        const StepForward fwd = forward_step(s, world.extractors, params, legal, alpha);
        GradSet analytic = zeros_like(params);
        backward_step(fwd, params, nll_score_grad(fwd.dist, chosen), analytic);

        Rng rng = make_rng(7, static_cast<std::uint64_t>(chosen));
        const FdReport report = fd_check_gradients(params, loss_fn, analytic, 5, rng);
        CHECK_MESSAGE(report.max_rel_err < 1e-4, report.worst);
    }
}

TEST_CASE("entropy gradient matches finite differences") {
    TestWorld world = make_fork_world();
    ParamSet params = make_params_for(world, 10, 3, 16);
    const State s = entry_state("which region", 17);
    const RunOptions opts;
    const OrderedActionSet legal =
        runtime_legal_actions(world.graph, s.position, opts, 1, {});
    REQUIRE(legal.size() >= 2);
    const double alpha = 0.9;

    const auto loss_fn = [&]() {
        const StepForward fwd = forward_step(s, world.extractors, params, legal, alpha);
        return fwd.dist.entropy();
    };
    const StepForward fwd = forward_step(s, world.extractors, params, legal, alpha);
    GradSet analytic = zeros_like(params);
    backward_step(fwd, params, entropy_score_grad(fwd.dist), analytic);

    Rng rng = make_rng(8, 8);
    const FdReport report = fd_check_gradients(params, loss_fn, analytic, 5, rng);
    CHECK_MESSAGE(report.max_rel_err < 1e-4, report.worst);
}

TEST_CASE("nll score gradient is probs minus one-hot") {
    TestWorld world = make_fork_world();
    const ParamSet params = make_params_for(world, 10, 4, 16);
    const State s = entry_state("q", 3);
    const OrderedActionSet legal =
        runtime_legal_actions(world.graph, s.position, RunOptions{}, 1, {});
    const StepForward fwd = forward_step(s, world.extractors, params, legal, 1.0);

    const Vec g = nll_score_grad(fwd.dist, 1);
    REQUIRE(g.size() == fwd.dist.probs.size());
    for (int i = 0; i < g.size(); ++i) {
        const double expected = fwd.dist.probs[i] - (i == 1 ? 1.0 : 0.0);
        CHECK(g[i] == doctest::Approx(expected).epsilon(1e-12));
    }
    // Score gradients of a softmax sum to zero over the support.
    CHECK(std::abs(g.sum()) < 1e-12);
    CHECK(std::abs(entropy_score_grad(fwd.dist).sum()) < 1e-12);
}

TEST_CASE("masked actions receive no w2 gradient") {
    TestWorld world = make_chain_world({ContainerType::Classify, ContainerType::Report},
                                       /*tools_per_container=*/2);
    ParamSet params = make_params_for(world, 12, 5, 16);
    const State s = entry_state("grade", 21);
    const OrderedActionSet legal =
        runtime_legal_actions(world.graph, s.position, RunOptions{}, 1, {});
    const StepForward fwd = forward_step(s, world.extractors, params, legal, 1.0);

    GradSet grads = zeros_like(params);
    backward_step(fwd, params, nll_score_grad(fwd.dist, 0), grads);

    const int action_count = params.head.action_count();
    for (int row = 0; row < action_count; ++row) {
        const double row_norm = grads.w2.row(row).norm();
        bool row_legal = false;
        for (int gi : legal.global_indices) {
            if (gi == row) row_legal = true;
        }
        if (row_legal) {
            CHECK(row_norm > 0.0);
        } else {
            CHECK(row_norm == 0.0);
        }
    }
}

TEST_CASE("backward_step accumulates rather than overwrites") {
    TestWorld world = make_bandit_world();
    ParamSet params = make_params_for(world, 8, 6, 16);
    const State s = entry_state("pick", 5);
    const OrderedActionSet legal =
        runtime_legal_actions(world.graph, s.position, RunOptions{}, 1, {});
    const StepForward fwd = forward_step(s, world.extractors, params, legal, 1.0);

    GradSet once = zeros_like(params);
    backward_step(fwd, params, nll_score_grad(fwd.dist, 0), once);
    GradSet twice = zeros_like(params);
    backward_step(fwd, params, nll_score_grad(fwd.dist, 0), twice);
    backward_step(fwd, params, nll_score_grad(fwd.dist, 0), twice);

    GradSet expected = zeros_like(params);
    expected.add_scaled(once, 2.0);
    CHECK((twice.w1 - expected.w1).norm() < 1e-15);
    CHECK((twice.w2 - expected.w2).norm() < 1e-15);
    CHECK((twice.w_image - expected.w_image).norm() < 1e-15);
}

TEST_CASE("forward_step exposes consistent intermediates") {
    TestWorld world = make_bandit_world();
    const ParamSet params = make_params_for(world, 8, 7, 16);
    const State s = entry_state("pick", 6);
    const OrderedActionSet legal =
        runtime_legal_actions(world.graph, s.position, RunOptions{}, 1, {});
    const StepForward fwd = forward_step(s, world.extractors, params, legal, 0.8);

    CHECK(fwd.enc.h.size() == kStateDim);
    CHECK(fwd.hidden_pre.size() == 8);
    CHECK((fwd.hidden - fwd.hidden_pre.cwiseMax(0.0)).norm() == 0.0);
    CHECK(fwd.dist.alpha == 0.8);
    CHECK(fwd.dist.probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
    // Same encoding as the plain encoder path.
    const Vec h = encode_state(s, world.extractors, params.enc);
    CHECK((fwd.enc.h - h).norm() == 0.0);
}
