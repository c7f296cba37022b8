#include "toolflow/policy.hpp"

#include "oracles.hpp"
#include "toolflow/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace toolflow;
using namespace toolflow::testing;

namespace {

// Legal set of n invoke-style actions (plus optional exit), with global
// indices 0..n-1 so tiny hand-built heads can target logits directly.
OrderedActionSet make_legal(int n, bool with_exit = false) {
    OrderedActionSet legal;
    for (int i = 0; i < n; ++i) {
        legal.actions.push_back(Action::invoke("c", "t" + std::to_string(i)));
        legal.global_indices.push_back(i);
    }
    if (with_exit) {
        legal.actions.push_back(Action::early_exit());
        legal.global_indices.push_back(n);
    }
    return legal;
}

// Head whose logits equal the first `action_count` entries of h: w1 = I,
// w2 = I, so non-negative h passes through ReLU untouched.
PolicyHead passthrough_head(int action_count) {
    PolicyHead head;
    head.w1 = Mat::Identity(action_count, action_count);
    head.w2 = Mat::Identity(action_count, action_count);
    return head;
}

PolicyHead zero_head(int hidden, int state_dim, int action_count) {
    PolicyHead head;
    head.w1 = Mat::Zero(hidden, state_dim);
    head.w2 = Mat::Zero(action_count, hidden);
    return head;
}

ActionDistribution hand_distribution(const std::vector<double>& probs) {
    ActionDistribution dist;
    dist.legal = make_legal(static_cast<int>(probs.size()));
    dist.probs = Vec(static_cast<Eigen::Index>(probs.size()));
    for (std::size_t i = 0; i < probs.size(); ++i) {
        dist.probs[static_cast<Eigen::Index>(i)] = probs[i];
    }
    dist.logits = Vec::Zero(static_cast<Eigen::Index>(probs.size()));
    dist.mask.assign(probs.size(), true);
    return dist;
}

TrajectoryStep hand_step(const std::vector<double>& probs, int chosen) {
    TrajectoryStep step;
    step.dist = hand_distribution(probs);
    step.chosen = chosen;
    return step;
}

}  // namespace

TEST_CASE("equal logits over four legal actions give probability 0.25 each") {
    const int n = 4;
    const PolicyHead head = zero_head(8, 16, n);
    const Vec h = Vec::Constant(16, 0.7);
    const ActionDistribution dist = action_distribution(h, make_legal(n), head, 1.0);
    REQUIRE(dist.probs.size() == n);
    for (int i = 0; i < n; ++i) {
        CHECK(dist.probs[i] == doctest::Approx(0.25).epsilon(1e-12));
    }
    CHECK(dist.probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("logits [1,0] at unit temperature match the softmax by hand") {
    Vec h(2);
    h << 1.0, 0.0;
    const ActionDistribution dist =
        action_distribution(h, make_legal(2), passthrough_head(2), 1.0);
    CHECK(dist.probs[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(dist.probs[1] == doctest::Approx(0.2689).epsilon(1e-4));

    const std::vector<double> ref = softmax_by_hand({1.0, 0.0});
    CHECK(dist.probs[0] == doctest::Approx(ref[0]).epsilon(1e-12));
    CHECK(dist.probs[1] == doctest::Approx(ref[1]).epsilon(1e-12));
}

TEST_CASE("temperature sharpens and flattens the distribution") {
    Vec h(2);
    h << 1.0, 0.0;
    const OrderedActionSet legal = make_legal(2);
    const PolicyHead head = passthrough_head(2);

    const ActionDistribution sharp = action_distribution(h, legal, head, 0.1);
    const ActionDistribution flat = action_distribution(h, legal, head, 10.0);
    CHECK(sharp.probs[0] > 0.99);
    CHECK(flat.probs[0] < 0.53);
    CHECK(flat.probs[0] > 0.5);

    // Argmax is temperature-invariant.
    CHECK(sharp.argmax() == 0);
    CHECK(flat.argmax() == 0);
}

TEST_CASE("masked actions have exactly zero probability") {
    // Global table has 3 actions; only indices 0 and 2 are legal here.
    OrderedActionSet legal;
    legal.actions = {Action::invoke("c", "t0"), Action::invoke("c", "t2")};
    legal.global_indices = {0, 2};

    PolicyHead head;
    head.w1 = Mat::Identity(3, 3);
    head.w2 = Mat::Identity(3, 3);
    Vec h(3);
    h << 0.3, 50.0, 0.1;  // the big logit sits on the masked action

    const ActionDistribution dist = action_distribution(h, legal, head, 1.0);
    REQUIRE(dist.probs.size() == 2);
    CHECK(dist.probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(dist.mask.size() == 3);
    CHECK(dist.mask[0]);
    CHECK_FALSE(dist.mask[1]);
    CHECK(dist.mask[2]);
    // Masked logit cannot leak probability mass: renormalized over {0, 2}.
    const std::vector<double> ref = softmax_by_hand({0.3, 0.1});
    CHECK(dist.probs[0] == doctest::Approx(ref[0]).epsilon(1e-12));
    CHECK(dist.probs[1] == doctest::Approx(ref[1]).epsilon(1e-12));
}

TEST_CASE("single legal action gets probability one and entropy zero") {
    const ActionDistribution dist = action_distribution(
        Vec::Constant(4, 1.0), make_legal(1), zero_head(2, 4, 1), 0.8);
    REQUIRE(dist.probs.size() == 1);
    CHECK(dist.probs[0] == 1.0);
    CHECK(dist.entropy() == doctest::Approx(0.0).epsilon(1e-12));

    Rng rng = make_rng(1, 1);
    for (int i = 0; i < 10; ++i) {
        CHECK(sample_action_index(dist, rng) == 0);
    }
}

TEST_CASE("uniform distribution has entropy ln n") {
    const int n = 4;
    const ActionDistribution dist = action_distribution(
        Vec::Constant(16, 0.7), make_legal(n), zero_head(8, 16, n), 1.0);
    CHECK(dist.entropy() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("argmax breaks ties toward the lowest index") {
    const ActionDistribution dist = action_distribution(
        Vec::Constant(16, 0.7), make_legal(3), zero_head(8, 16, 3), 1.0);
    CHECK(dist.argmax() == 0);

    Vec h(3);
    h << 0.0, 2.0, 2.0;
    const ActionDistribution tied =
        action_distribution(h, make_legal(3), passthrough_head(3), 1.0);
    CHECK(tied.argmax() == 1);
}

TEST_CASE("sampling frequencies track the probabilities") {
    const int n = 4;
    const ActionDistribution dist = action_distribution(
        Vec::Constant(16, 0.7), make_legal(n), zero_head(8, 16, n), 1.0);
    Rng rng = make_rng(42, 7);
    const int draws = 100000;
    std::vector<int> counts(n, 0);
    for (int i = 0; i < draws; ++i) {
        const int k = sample_action_index(dist, rng);
        REQUIRE(k >= 0);
        REQUIRE(k < n);
        ++counts[static_cast<std::size_t>(k)];
    }
    for (int i = 0; i < n; ++i) {
        const double freq = static_cast<double>(counts[static_cast<std::size_t>(i)]) / draws;
        CHECK(std::abs(freq - 0.25) < 0.015);
    }
}

TEST_CASE("sampling is reproducible for a fixed seed") {
    const ActionDistribution dist = action_distribution(
        Vec::Constant(16, 0.7), make_legal(5), zero_head(8, 16, 5), 1.0);
    Rng a = make_rng(9, 3);
    Rng b = make_rng(9, 3);
    for (int i = 0; i < 200; ++i) {
        CHECK(sample_action_index(dist, a) == sample_action_index(dist, b));
    }
}

TEST_CASE("sample_action returns the early-exit action when drawn") {
    OrderedActionSet legal = make_legal(0, /*with_exit=*/true);
    const ActionDistribution dist = action_distribution(
        Vec::Constant(4, 1.0), legal, zero_head(2, 4, 1), 0.8);
    Rng rng = make_rng(2, 2);
    CHECK(sample_action(dist, rng).is_exit());
}

TEST_CASE("trajectory log-probability sums the chosen log-probs") {
    Trajectory traj;
    traj.steps.push_back(hand_step({0.5, 0.5}, 0));
    traj.steps.push_back(hand_step({0.25, 0.75}, 0));
    traj.terminated_by = Termination::MaxSteps;
    CHECK(trajectory_logprob(traj) == doctest::Approx(std::log(0.125)).epsilon(1e-12));
}

TEST_CASE("a forced exit contributes log 1 = 0") {
    Trajectory traj;
    TrajectoryStep step;
    step.dist = hand_distribution({1.0});
    step.dist.legal = make_legal(0, /*with_exit=*/true);
    step.chosen = 0;
    traj.steps.push_back(step);
    traj.terminated_by = Termination::EarlyExit;
    CHECK(trajectory_logprob(traj) == 0.0);
}

TEST_CASE("zero-probability chosen action is rejected") {
    Trajectory traj;
    traj.steps.push_back(hand_step({1.0, 0.0}, 1));
    CHECK_THROWS_AS(trajectory_logprob(traj), ZeroProbabilityAction);
}

TEST_CASE("empty trajectory has log-probability zero") {
    const Trajectory traj;
    CHECK(trajectory_logprob(traj) == 0.0);
}

TEST_CASE("temperature anneals linearly from 2.0 to 0.8") {
    TemperatureSchedule sched;
    sched.start = 2.0;
    sched.end = 0.8;
    sched.total_steps = 100;
    CHECK(temperature(0, sched) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(temperature(50, sched) == doctest::Approx(1.4).epsilon(1e-12));
    CHECK(temperature(100, sched) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(temperature(5000, sched) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("policy head init respects fan-in bounds and hidden sizing") {
    Rng rng = make_rng(4, 4);
    const PolicyHead head = init_policy_head(32, 15, rng);
    CHECK(head.hidden_dim() == 32);
    CHECK(head.action_count() == 15);
    CHECK(head.w1.cols() == kStateDim);
    const double b1 = 1.0 / std::sqrt(static_cast<double>(kStateDim));
    const double b2 = 1.0 / std::sqrt(32.0);
    CHECK(head.w1.maxCoeff() <= b1);
    CHECK(head.w1.minCoeff() >= -b1);
    CHECK(head.w2.maxCoeff() <= b2);
    CHECK(head.w2.minCoeff() >= -b2);
}
