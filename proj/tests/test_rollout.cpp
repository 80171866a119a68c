#include <cmvrp/policy.hpp>
#include <cmvrp/rollout.hpp>
#include <cmvrp/training.hpp>

#include <gtest/gtest.h>

using namespace cmvrp;

namespace {

ProblemInstance make(Point depot, std::vector<Customer> customers, std::vector<int> capacities) {
    ProblemInstance inst;
    inst.instance_id = "hand";
    inst.depot = depot;
    inst.customers = std::move(customers);
    for (int c : capacities) inst.vehicles.push_back({c, depot});
    return inst;
}

std::vector<Actor> small_actors(int vehicles, std::uint64_t seed, int dim = 8) {
    return init_actors({dim, dim, vehicles}, seed);
}

// Replays a trajectory through the environment, checking every recorded
// mask and action, and returns the resulting plan.
RoutePlan replay(const Trajectory& t, const ProblemInstance& inst, int round_cap = 0) {
    auto s = reset(inst, round_cap);
    for (const auto& step : t.steps) {
        EXPECT_FALSE(is_terminal(s));
        EXPECT_EQ(step.agent, s.acting_agent);
        const auto mask = feasible_actions(s);
        EXPECT_EQ(step.mask, mask.feasible);
        EXPECT_TRUE(mask[static_cast<std::size_t>(step.action)]);
        EXPECT_LE(step.log_prob, 1e-12);
        apply_action(s, step.action);
    }
    EXPECT_TRUE(is_terminal(s));
    return finalize(s);
}

}  // namespace

TEST(Rollout, ForcedSingleActionsHaveZeroLogProb) {
    // One customer, one vehicle: every step has exactly one feasible action.
    const auto inst = make({0.0, 0.0}, {{{0.6, 0.8}, 3}}, {5});
    const auto actors = small_actors(1, 3);
    RolloutOptions opt;
    opt.mode = DecodeMode::Sample;
    auto batch = rollout_batch(std::span<const ProblemInstance>(&inst, 1), actors, opt);
    const auto& t = batch.trajectories.front();
    ASSERT_EQ(t.steps.size(), 2u);
    EXPECT_EQ(t.steps[0].action, 1);
    EXPECT_EQ(t.steps[1].action, kDepot);
    for (const auto& s : t.steps) EXPECT_DOUBLE_EQ(s.log_prob, 0.0);
    EXPECT_DOUBLE_EQ(t.log_prob(), 0.0);
    EXPECT_NEAR(t.plan.total_length, 2.0, 1e-12);
    EXPECT_TRUE(t.plan.feasible);
}

TEST(Rollout, BatchYieldsAlignedTrajectories) {
    ExperimentConfig cfg{"T", 6, 2, {10, 14}, 1, 5};
    std::vector<ProblemInstance> insts;
    for (std::uint64_t i = 0; i < 7; ++i) insts.push_back(generate_instance(cfg, i));
    const auto actors = small_actors(2, 11);
    RolloutOptions opt;
    opt.mode = DecodeMode::Sample;
    opt.seed = 77;
    auto batch = rollout_batch(insts, actors, opt);
    ASSERT_EQ(batch.trajectories.size(), insts.size());
    for (std::size_t k = 0; k < insts.size(); ++k) {
        const auto& t = batch.trajectories[k];
        EXPECT_EQ(t.instance_id, insts[k].instance_id);
        EXPECT_EQ(replay(t, insts[k]), t.plan);
        EXPECT_EQ(check_plan(t.plan, insts[k], true), "");
        double lp = 0.0;
        for (const auto& s : t.steps) lp += s.log_prob;
        EXPECT_NEAR(lp, t.log_prob(), 1e-12);
    }
}

TEST(Rollout, GreedyIsDeterministicAndBatchIndependent) {
    ExperimentConfig cfg{"T", 6, 2, {10, 14}, 1, 5};
    std::vector<ProblemInstance> insts;
    for (std::uint64_t i = 0; i < 9; ++i) insts.push_back(generate_instance(cfg, i));
    const auto actors = small_actors(2, 4);
    RolloutOptions opt;
    auto a = rollout_batch(insts, actors, opt);
    auto b = rollout_batch(insts, actors, opt);
    for (std::size_t k = 0; k < insts.size(); ++k) {
        EXPECT_EQ(a.trajectories[k].plan, b.trajectories[k].plan);
        EXPECT_EQ(a.trajectories[k].plan, solve_greedy(insts[k], actors));
    }
}

TEST(Rollout, SamplingDependsOnlyOnSeedAndStream) {
    ExperimentConfig cfg{"T", 6, 2, {10, 14}, 1, 5};
    std::vector<ProblemInstance> insts;
    for (std::uint64_t i = 0; i < 6; ++i) insts.push_back(generate_instance(cfg, i));
    const auto actors = small_actors(2, 4);
    RolloutOptions opt;
    opt.mode = DecodeMode::Sample;
    opt.seed = 9;
    opt.stream_base = 100;
    auto whole = rollout_batch(insts, actors, opt);
    auto again = rollout_batch(insts, actors, opt);
    // The second half on its own, with the matching stream offset.
    opt.stream_base = 103;
    auto half = rollout_batch(std::span<const ProblemInstance>(insts).subspan(3), actors, opt);
    for (std::size_t k = 0; k < insts.size(); ++k)
        EXPECT_EQ(whole.trajectories[k].plan, again.trajectories[k].plan);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(whole.trajectories[k + 3].plan, half.trajectories[k].plan);
        EXPECT_DOUBLE_EQ(whole.trajectories[k + 3].log_prob(), half.trajectories[k].log_prob());
    }
}

TEST(Rollout, ForcedActionsReproduceSampledLogProbs) {
    ExperimentConfig cfg{"T", 5, 2, {10, 14}, 1, 5};
    std::vector<ProblemInstance> insts;
    for (std::uint64_t i = 0; i < 4; ++i) insts.push_back(generate_instance(cfg, i));
    const auto actors = small_actors(2, 6);
    RolloutOptions opt;
    opt.mode = DecodeMode::Sample;
    opt.seed = 3;
    auto sampled = rollout_batch(insts, actors, opt);
    std::vector<std::vector<int>> forced;
    for (const auto& t : sampled.trajectories) {
        forced.emplace_back();
        for (const auto& s : t.steps) forced.back().push_back(s.action);
    }
    RolloutOptions fopt;
    fopt.forced_actions = &forced;
    auto replayed = rollout_batch(insts, actors, fopt);
    for (std::size_t k = 0; k < insts.size(); ++k) {
        EXPECT_EQ(replayed.trajectories[k].plan, sampled.trajectories[k].plan);
        ASSERT_EQ(replayed.trajectories[k].steps.size(), sampled.trajectories[k].steps.size());
        for (std::size_t t = 0; t < forced[k].size(); ++t)
            EXPECT_NEAR(replayed.trajectories[k].steps[t].log_prob, sampled.trajectories[k].steps[t].log_prob, 1e-12);
    }
}

TEST(Rollout, TruncationPenaltyAddsToCost) {
    // Round cap 1: one vehicle delivers 4 of 10 units and is sent home.
    const auto inst = make({0.0, 0.0}, {{{1.0, 0.0}, 6}, {{0.0, 1.0}, 4}}, {4});
    const auto actors = small_actors(1, 8);
    RolloutOptions opt;
    opt.round_cap = 1;
    opt.truncation_penalty = 2.5;
    auto batch = rollout_batch(std::span<const ProblemInstance>(&inst, 1), actors, opt);
    const auto& t = batch.trajectories.front();
    EXPECT_FALSE(t.plan.feasible);
    EXPECT_EQ(t.plan.residual_demand, 6);
    EXPECT_NEAR(t.plan.total_length, 2.0, 1e-12);
    EXPECT_NEAR(t.cost, 2.0 + 2.5 * 6, 1e-12);
}

TEST(Rollout, MismatchedFleetIsRefused) {
    ExperimentConfig cfg{"T", 5, 2, {10, 14}, 1, 5};
    const auto inst = generate_instance(cfg, 0);
    const auto actors = small_actors(3, 1);
    EXPECT_THROW(rollout_batch(std::span<const ProblemInstance>(&inst, 1), actors, {}), ContractViolation);
}

TEST(Rollout, GreedyRolloutsSatisfyEnvironmentInvariants) {
    const auto cfg = vrp10_config();
    std::vector<ProblemInstance> insts;
    for (std::uint64_t i = 0; i < 1000; ++i) insts.push_back(generate_instance(cfg, 5000 + i));
    const auto actors = small_actors(3, 12, 16);
    for (std::size_t begin = 0; begin < insts.size(); begin += kShardSize) {
        const std::size_t n = std::min(kShardSize, insts.size() - begin);
        auto batch = rollout_batch(std::span<const ProblemInstance>(insts).subspan(begin, n), actors, {});
        for (std::size_t k = 0; k < n; ++k) {
            const auto& inst = insts[begin + k];
            const auto& t = batch.trajectories[k];
            auto s = reset(inst);
            const int total = total_demand(inst);
            for (const auto& step : t.steps) {
                ASSERT_TRUE(feasible_actions(s)[static_cast<std::size_t>(step.action)]);
                apply_action(s, step.action);
                ASSERT_EQ(total, s.remaining_total() + s.delivered_total());
                for (std::size_t j = 0; j < s.loads.size(); ++j) {
                    ASSERT_GE(s.loads[j], 0);
                    ASSERT_LE(s.loads[j], inst.vehicles[j].capacity);
                }
                ASSERT_NEAR(s.accumulated_cost, logged_cost(s), 1e-9);
            }
            ASSERT_TRUE(is_terminal(s));
            ASSERT_EQ(finalize(s), t.plan);
            ASSERT_EQ(check_plan(t.plan, inst, true), "");
        }
    }
}
