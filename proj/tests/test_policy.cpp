#include <cmvrp/policy.hpp>
#include <cmvrp/rollout.hpp>

#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"

using namespace cmvrp;
using ad::Array;

namespace {

// Every parameter (biases included) random, so straight-line checks see them.
void randomize(ad::ParameterSet& params, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& [name, a] : params) a = gradcheck::random_array(rng, a.rows(), a.cols(), 0.5);
}

ProblemInstance small_instance(int m, int n, std::uint64_t index) {
    std::vector<int> caps;
    for (int j = 0; j < n; ++j) caps.push_back(10 + 5 * j);
    return generate_instance({"SMALL", m, n, caps, 1, 21}, index);
}

double dot_tanh(const std::vector<double>& x, const Array& W, const Array& v) {
    double u = 0.0;
    for (std::size_t a = 0; a < W.cols(); ++a) {
        double s = 0.0;
        for (std::size_t r = 0; r < W.rows(); ++r) s += x[r] * W(r, a);
        u += v[a] * std::tanh(s);
    }
    return u;
}

std::vector<double> affine(const std::vector<double>& x, const Array& W, const Array& b) {
    std::vector<double> out(W.cols());
    for (std::size_t c = 0; c < W.cols(); ++c) {
        double s = b[c];
        for (std::size_t r = 0; r < W.rows(); ++r) s += x[r] * W(r, c);
        out[c] = s;
    }
    return out;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Straight-line evaluation of one actor decision from scratch.
std::vector<double> reference_logits(const EnvState& s, const Actor& actor, const std::vector<Point>& stream) {
    const auto& P = actor.params;
    const auto& inst = *s.instance;
    const auto d = static_cast<std::size_t>(actor.dims.embed_dim);
    auto at = [&](const std::string& leaf) -> const Array& { return P.at(actor.name(leaf)); };
    std::vector<double> h(d, 0.0);
    for (const auto& p : stream) {
        const auto x = affine({p.x, p.y}, at("dec_in.W"), at("dec_in.b"));
        std::vector<double> z(d), r(d), cand(d), rh(d);
        const auto zx = affine(x, at("gru.W_z"), at("gru.b_z"));
        const auto zh = affine(h, at("gru.U_z"), Array(1, d));
        const auto rx = affine(x, at("gru.W_r"), at("gru.b_r"));
        const auto rhh = affine(h, at("gru.U_r"), Array(1, d));
        for (std::size_t k = 0; k < d; ++k) {
            z[k] = sigm(zx[k] + zh[k]);
            r[k] = sigm(rx[k] + rhh[k]);
            rh[k] = r[k] * h[k];
        }
        const auto nx = affine(x, at("gru.W_n"), at("gru.b_n"));
        const auto nh = affine(rh, at("gru.U_n"), Array(1, d));
        for (std::size_t k = 0; k < d; ++k) {
            cand[k] = std::tanh(nx[k] + nh[k]);
            h[k] = (1 - z[k]) * h[k] + z[k] * cand[k];
        }
    }
    std::vector<double> fleet;
    for (std::size_t j = 0; j < inst.vehicles.size(); ++j) {
        const auto& p = inst.coord(s.positions[j]);
        const auto e = affine({double(s.loads[j]) / inst.vehicles[j].capacity, p.x, p.y}, at("enc_veh.W"), at("enc_veh.b"));
        fleet.insert(fleet.end(), e.begin(), e.end());
    }
    std::vector<double> logits;
    for (int i = 0; i <= inst.num_customers(); ++i) {
        const auto& p = inst.coord(i);
        const double dem = i == 0 ? 0.0 : s.remaining[static_cast<std::size_t>(i - 1)] / 9.0;
        auto x = affine({p.x, p.y, dem}, at("enc_cust.W"), at("enc_cust.b"));
        x.insert(x.end(), fleet.begin(), fleet.end());
        x.insert(x.end(), h.begin(), h.end());
        logits.push_back(dot_tanh(x, at("attn.W"), at("attn.v")));
    }
    return logits;
}

std::vector<double> tape_logits(const EnvState& s, const Actor& actor, const std::vector<Point>& stream) {
    ad::Graph g;
    const EnvState* views[] = {&s};
    ad::Var h = g.constant(Array(1, static_cast<std::size_t>(actor.dims.embed_dim)));
    for (const auto& p : stream) h = decode_step(g, g.constant(Array(1, 2, {p.x, p.y})), h, actor);
    const auto nodes = static_cast<std::size_t>(s.instance->num_nodes());
    ad::Var u = attention_logits(g, encode_customers(g, views, actor), encode_vehicles(g, views, actor), h, actor, 1, nodes);
    const auto& v = g.value(u);
    return {v.data(), v.data() + v.size()};
}

double reference_critic(const ProblemInstance& inst, const Critic& c) {
    const auto& P = c.params;
    const auto d = static_cast<std::size_t>(c.embed_dim);
    std::vector<double> pooled(d, 0.0);
    for (int i = 0; i <= inst.num_customers(); ++i) {
        const auto& p = inst.coord(i);
        const auto e = affine({p.x, p.y}, P.at("critic.embed.W"), P.at("critic.embed.b"));
        for (std::size_t k = 0; k < d; ++k) pooled[k] += std::max(0.0, e[k]) / inst.num_nodes();
    }
    auto h1 = affine(pooled, P.at("critic.layer1.W"), P.at("critic.layer1.b"));
    for (auto& x : h1) x = std::max(0.0, x);
    auto h2 = affine(h1, P.at("critic.layer2.W"), P.at("critic.layer2.b"));
    for (auto& x : h2) x = std::max(0.0, x);
    return affine(h2, P.at("critic.head.W"), P.at("critic.head.b"))[0];
}

}  // namespace

TEST(Encoders, ZeroWeightsGiveZeroRows) {
    const auto inst = generate_instance(vrp10_config(), 0);
    const auto s = reset(inst);
    const Actor actor = make_actor({16, 8, 3}, 0);
    ad::Graph g;
    const EnvState* views[] = {&s};
    const auto& cust = g.value(encode_customers(g, views, actor));
    EXPECT_EQ(cust.rows(), 11u);
    EXPECT_EQ(cust.cols(), 16u);
    for (double v : cust.values()) EXPECT_EQ(v, 0.0);
    const auto& veh = g.value(encode_vehicles(g, views, actor));
    EXPECT_EQ(veh.rows(), 3u);
    for (double v : veh.values()) EXPECT_EQ(v, 0.0);
}

TEST(Encoders, FeaturesAndIdenticalCustomers) {
    ProblemInstance inst;
    inst.instance_id = "dup";
    inst.depot = {0.2, 0.7};
    inst.customers = {{{0.5, 0.5}, 4}, {{0.5, 0.5}, 4}, {{0.1, 0.9}, 2}};
    inst.vehicles = {{10, inst.depot}, {12, inst.depot}};
    const auto s = reset(inst);
    const EnvState* views[] = {&s};
    const auto vf = vehicle_features(views);
    EXPECT_EQ(vf(0, 0), 1.0);
    EXPECT_EQ(vf(0, 1), 0.2);
    EXPECT_EQ(vf(0, 2), 0.7);
    const auto cf = customer_features(views);
    EXPECT_EQ(cf(0, 2), 0.0);
    EXPECT_DOUBLE_EQ(cf(1, 2), 4.0 / 9.0);

    Actor actor = init_actor({8, 8, 2}, 0, 3);
    randomize(actor.params, 4);
    ad::Graph g;
    const auto& cust = g.value(encode_customers(g, views, actor));
    for (std::size_t c = 0; c < cust.cols(); ++c) EXPECT_EQ(cust(1, c), cust(2, c));
    const auto logits = tape_logits(s, actor, {inst.depot});
    EXPECT_EQ(logits[1], logits[2]);
}

TEST(Decoder, ZeroAndDistinctInputs) {
    const Actor zero = make_actor({8, 8, 2}, 0);
    ad::Graph g;
    const auto& h0 = g.value(decode_step(g, g.constant(Array(1, 2)), g.constant(Array(1, 8)), zero));
    EXPECT_EQ(h0.cols(), 8u);
    for (double v : h0.values()) EXPECT_EQ(v, 0.0);

    const Actor actor = init_actor({8, 8, 2}, 0, 9);
    const auto& a = g.value(decode_step(g, g.constant(Array(1, 2, {0.1, 0.2})), g.constant(Array(1, 8)), actor));
    const auto& b = g.value(decode_step(g, g.constant(Array(1, 2, {0.8, 0.3})), g.constant(Array(1, 8)), actor));
    EXPECT_NE(a, b);
}

TEST(Attention, ZeroVGivesZeroLogits) {
    const auto inst = small_instance(5, 2, 0);
    Actor actor = init_actor({8, 8, 2}, 0, 5);
    actor.params[actor.name("attn.v")].fill(0.0);
    for (double u : tape_logits(reset(inst), actor, {inst.depot})) EXPECT_EQ(u, 0.0);
}

TEST(Attention, MatchesStraightLineEvaluation) {
    for (std::uint64_t t = 0; t < 10; ++t) {
        const auto inst = small_instance(3, 2, t);
        Actor actor = make_actor({6, 5, 2}, 1);
        randomize(actor.params, 100 + t);
        auto s = reset(inst);
        apply_action(s, 1);
        apply_action(s, 2);
        const std::vector<Point> stream{inst.depot, inst.coord(1), inst.coord(2)};
        const auto ref = reference_logits(s, actor, stream);
        const auto got = tape_logits(s, actor, stream);
        ASSERT_EQ(ref.size(), got.size());
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);
    }
}

TEST(Attention, CustomerPermutationPermutesLogits) {
    const auto inst = small_instance(6, 2, 3);
    Actor actor = init_actor({8, 8, 2}, 0, 6);
    randomize(actor.params, 7);
    const std::vector<int> perm{4, 2, 6, 1, 5, 3};  // new customer k is old customer perm[k-1]
    ProblemInstance shuffled = inst;
    for (std::size_t k = 0; k < perm.size(); ++k) shuffled.customers[k] = inst.customers[static_cast<std::size_t>(perm[k] - 1)];
    const auto a = tape_logits(reset(inst), actor, {inst.depot});
    const auto b = tape_logits(reset(shuffled), actor, {inst.depot});
    EXPECT_NEAR(a[0], b[0], 1e-12);
    for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_NEAR(b[k + 1], a[static_cast<std::size_t>(perm[k])], 1e-12);

    Critic c = init_critic(8, 3);
    randomize(c.params, 8);
    EXPECT_NEAR(critic_value(inst, c), critic_value(shuffled, c), 1e-12);
}

TEST(ActionDistribution, Examples) {
    const std::vector<double> zeros{0, 0, 0};
    const auto d = action_distribution(zeros, std::vector<unsigned char>{1, 1, 0}, DecodeMode::Greedy);
    EXPECT_NEAR(d.probability(0), 0.5, 1e-15);
    EXPECT_NEAR(d.probability(1), 0.5, 1e-15);
    EXPECT_EQ(d.probability(2), 0.0);
    EXPECT_EQ(d.action, 0);  // tie -> lowest index

    Rng rng(1);
    for (auto mode : {DecodeMode::Greedy, DecodeMode::Sample}) {
        const auto one = action_distribution(std::vector<double>{3, -1, 2}, std::vector<unsigned char>{0, 1, 0}, mode, &rng);
        EXPECT_EQ(one.action, 1);
        EXPECT_EQ(one.chosen_log_prob, 0.0);
    }
    const std::vector<double> logits{std::log(0.2), std::log(0.5), std::log(0.3)};
    EXPECT_EQ(action_distribution(logits, std::vector<unsigned char>{1, 1, 1}, DecodeMode::Greedy).action, 1);
    EXPECT_THROW(action_distribution(zeros, std::vector<unsigned char>{0, 0, 0}, DecodeMode::Greedy), ContractViolation);
}

TEST(ActionDistribution, MaskedNodesNeverSampled) {
    Rng rng(31);
    std::vector<int> hits(8, 0);
    for (int t = 0; t < 100000; ++t) {
        std::vector<double> logits(8);
        for (auto& x : logits) x = rng.uniform(-4, 4);
        std::vector<unsigned char> mask(8);
        for (auto& m : mask) m = rng.uniform() < 0.4;
        mask[static_cast<std::size_t>(t % 8)] = 1;
        const auto d = action_distribution(logits, mask, DecodeMode::Sample, &rng);
        ASSERT_TRUE(mask[static_cast<std::size_t>(d.action)]);
        ++hits[static_cast<std::size_t>(d.action)];
    }
    for (int h : hits) EXPECT_GT(h, 0);
}

TEST(ActionDistribution, SamplingFollowsProbabilities) {
    Rng rng(4);
    const std::vector<double> logits{std::log(0.2), std::log(0.5), std::log(0.3)};
    const std::vector<unsigned char> mask{1, 1, 1};
    std::vector<int> hits(3, 0);
    for (int t = 0; t < 60000; ++t) ++hits[static_cast<std::size_t>(action_distribution(logits, mask, DecodeMode::Sample, &rng).action)];
    EXPECT_NEAR(hits[0] / 60000.0, 0.2, 0.01);
    EXPECT_NEAR(hits[1] / 60000.0, 0.5, 0.01);
    EXPECT_NEAR(hits[2] / 60000.0, 0.3, 0.01);
}

TEST(Critic, ZeroParamsGiveZero) {
    EXPECT_EQ(critic_value(generate_instance(vrp10_config(), 1), make_critic(16)), 0.0);
}

TEST(Critic, MatchesStraightLineEvaluation) {
    for (std::uint64_t t = 0; t < 10; ++t) {
        const auto inst = small_instance(7, 3, t);
        Critic c = make_critic(9);
        randomize(c.params, 50 + t);
        EXPECT_NEAR(critic_value(inst, c), reference_critic(inst, c), 1e-12);
    }
}

TEST(Init, DeterministicShapesAndRanges) {
    const PolicyDims dims{128, 128, 3};
    const auto a = init_actors(dims, 11);
    const auto b = init_actors(dims, 11);
    ASSERT_EQ(a.size(), 3u);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a[j].params, b[j].params);
    EXPECT_NE(a[0].params.at("actor.0.gru.W_z"), init_actors(dims, 12)[0].params.at("actor.0.gru.W_z"));
    const auto& enc = a[0].params.at("actor.0.enc_cust.W");
    EXPECT_EQ(enc.rows(), 3u);
    EXPECT_EQ(enc.cols(), 128u);
    EXPECT_EQ(a[0].params.at("actor.0.attn.W").rows(), 128u * 5);
    for (const auto& [name, p] : a[1].params) {
        const bool bias = name.ends_with(".b") || name.find(".b_") != std::string::npos;
        const double bound = 1.0 / std::sqrt(static_cast<double>(p.rows()));
        for (double v : p.values()) {
            if (bias) ASSERT_EQ(v, 0.0) << name;
            else ASSERT_LE(std::abs(v), bound) << name;
        }
    }
    EXPECT_THROW(make_actor({0, 8, 2}, 0), ValidationError);
    EXPECT_THROW(make_critic(0), ValidationError);
}

TEST(GreedyDecoding, Deterministic) {
    const auto inst = generate_instance(vrp10_config(), 4);
    const auto actors = init_actors({16, 16, 3}, 2);
    const auto a = solve_greedy(inst, actors);
    EXPECT_EQ(a, solve_greedy(inst, actors));
    EXPECT_EQ(check_plan(a, inst, true), "");
}

TEST(Trajectory, LogProbIsSumOfSteps) {
    std::vector<ProblemInstance> insts;
    for (std::uint64_t k = 0; k < 4; ++k) insts.push_back(generate_instance(vrp10_config(), k));
    const auto actors = init_actors({16, 16, 3}, 2);
    RolloutOptions opt;
    opt.mode = DecodeMode::Sample;
    opt.seed = 5;
    auto batch = rollout_batch(insts, actors, opt);
    std::vector<double> tape_sum(insts.size(), 0.0);
    for (const auto& rec : batch.records) {
        const auto& v = batch.graph->value(rec.chosen);
        for (std::size_t r = 0; r < rec.episodes.size(); ++r) tape_sum[rec.episodes[r]] += v[r];
    }
    for (std::size_t k = 0; k < insts.size(); ++k) {
        const auto& t = batch.trajectories[k];
        double per_agent = 0.0;
        for (double x : t.agent_log_prob) per_agent += x;
        EXPECT_NEAR(t.log_prob(), tape_sum[k], 1e-12);
        EXPECT_NEAR(t.log_prob(), per_agent, 1e-12);
    }
}
