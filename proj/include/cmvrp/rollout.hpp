#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "env.hpp"
#include "policy.hpp"
#include "rng.hpp"

namespace cmvrp {

struct StepInfo {
    int agent = 0;
    std::uint64_t state_hash = 0;
    std::vector<unsigned char> mask;
    int action = 0;
    double log_prob = 0.0;
};

/// One played episode.
struct Trajectory {
    std::string instance_id;
    std::vector<StepInfo> steps;
    std::vector<double> agent_log_prob;  // sum of chosen log-probabilities per agent
    std::vector<int> agent_steps;
    RoutePlan plan;
    double cost = 0.0;  // plan length plus the truncation penalty

    double log_prob() const {
        double s = 0.0;
        for (const auto& st : steps) s += st.log_prob;
        return s;
    }
};

/// Chosen log-probabilities of one decision step across the active episodes
/// (a column of the tape), used to assemble policy-gradient losses.
struct StepRecord {
    int agent = 0;
    ad::Var chosen;                     // rows x 1
    std::vector<std::size_t> episodes;  // episode index of each row
};

struct RolloutOptions {
    DecodeMode mode = DecodeMode::Greedy;
    int round_cap = 0;                // 0: twice the number of customers
    double truncation_penalty = 0.0;  // cost per undelivered unit
    std::uint64_t seed = 0;           // sampling streams: Rng(seed, stream_base + k)
    std::uint64_t stream_base = 0;
    // Replays fixed action sequences instead of choosing (one list per episode).
    const std::vector<std::vector<int>>* forced_actions = nullptr;
};

/// Episodes played together on one tape.
struct RolloutBatch {
    std::unique_ptr<ad::Graph> graph;
    std::vector<Trajectory> trajectories;
    std::vector<StepRecord> records;
};

inline std::uint64_t state_hash(const EnvState& s) {
    std::string key;
    key.reserve(8 * (s.remaining.size() + 2 * s.loads.size() + 2));
    auto put = [&](int v) { key.append(reinterpret_cast<const char*>(&v), sizeof v); };
    for (int d : s.remaining) put(d);
    for (int l : s.loads) put(l);
    for (int p : s.positions) put(p);
    put(s.acting_agent);
    put(s.round);
    return fnv1a(key);
}

/// Plays every instance to termination under the Case-1 turn order (vehicle
/// 0, 1, ..., N-1, repeat). All instances must share M and N. Every actor's
/// decoder reads the same input stream per episode: the depot, then each
/// action taken by any vehicle. Actors catch up on their own turns, which
/// yields the same hidden state as updating all of them after every action.
inline RolloutBatch rollout_batch(std::span<const ProblemInstance> instances, std::span<const Actor> actors,
                                  const RolloutOptions& options) {
    if (instances.empty()) throw ContractViolation("rollout_batch needs at least one instance");
    const int n_vehicles = instances.front().num_vehicles();
    const auto nodes = static_cast<std::size_t>(instances.front().num_nodes());
    if (static_cast<int>(actors.size()) != n_vehicles) throw ContractViolation("one actor per vehicle required");
    for (const auto& a : actors)
        if (a.dims.num_vehicles != n_vehicles) throw ContractViolation("actor fleet size differs from instance");
    for (const auto& inst : instances)
        if (inst.num_vehicles() != n_vehicles || static_cast<std::size_t>(inst.num_nodes()) != nodes)
            throw ContractViolation("rollout batch mixes instance shapes");
    if (options.forced_actions && options.forced_actions->size() != instances.size())
        throw ContractViolation("forced actions need one sequence per instance");

    RolloutBatch batch;
    batch.graph = std::make_unique<ad::Graph>();
    ad::Graph& g = *batch.graph;
    const std::size_t count = instances.size();
    const auto d = static_cast<std::size_t>(actors.front().dims.embed_dim);

    std::vector<EnvState> states;
    states.reserve(count);
    std::vector<Rng> rngs;
    for (std::size_t k = 0; k < count; ++k) {
        states.push_back(reset(instances[k], options.round_cap));
        rngs.emplace_back(options.seed, options.stream_base + k);
    }
    batch.trajectories.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        auto& t = batch.trajectories[k];
        t.instance_id = instances[k].instance_id;
        t.agent_log_prob.assign(static_cast<std::size_t>(n_vehicles), 0.0);
        t.agent_steps.assign(static_cast<std::size_t>(n_vehicles), 0);
    }
    // Decoder input stream per episode: depot, then every action so far.
    std::vector<std::vector<int>> stream(count, std::vector<int>{kDepot});
    std::vector<std::size_t> forced_pos(count, 0);

    struct Hidden {
        bool ready = false;
        ad::Var value;
        std::vector<std::size_t> episodes;
        std::size_t consumed = 0;  // stream entries already read
    };
    std::vector<Hidden> hidden(static_cast<std::size_t>(n_vehicles));

    for (;;) {
        std::vector<std::size_t> active;
        for (std::size_t k = 0; k < count; ++k)
            if (!is_terminal(states[k])) active.push_back(k);
        if (active.empty()) break;
        // All episodes start together and advance one action per loop, so the acting agent is shared.
        const int agent = states[active.front()].acting_agent;
        const auto& actor = actors[static_cast<std::size_t>(agent)];
        const std::size_t b = active.size();

        std::vector<const EnvState*> views;
        views.reserve(b);
        for (auto k : active) views.push_back(&states[k]);

        auto& h = hidden[static_cast<std::size_t>(agent)];
        if (!h.ready) {
            h.value = g.constant(ad::Array(b, d));
            h.episodes = active;
            h.ready = true;
        } else if (h.episodes != active) {
            std::vector<std::size_t> rows;
            std::size_t pos = 0;
            for (auto k : active) {
                while (h.episodes[pos] != k) ++pos;
                rows.push_back(pos);
            }
            h.value = ad::gather(h.value, std::move(rows));
            h.episodes = active;
        }

        // Active episodes share the stream length (they started together).
        const std::size_t length = stream[active.front()].size();
        for (; h.consumed < length; ++h.consumed) {
            ad::Array prev(b, 2);
            for (std::size_t r = 0; r < b; ++r) {
                const auto& p = instances[active[r]].coord(stream[active[r]][h.consumed]);
                prev(r, 0) = p.x;
                prev(r, 1) = p.y;
            }
            h.value = decode_step(g, g.constant(std::move(prev)), h.value, actor);
        }

        ad::Var cust = encode_customers(g, views, actor);
        ad::Var veh = encode_vehicles(g, views, actor);
        ad::Var logits = attention_logits(g, cust, veh, h.value, actor, b, nodes);

        std::vector<unsigned char> mask(b * nodes);
        for (std::size_t r = 0; r < b; ++r) {
            const auto m = feasible_actions(states[active[r]]);
            std::copy(m.feasible.begin(), m.feasible.end(), mask.begin() + static_cast<std::ptrdiff_t>(r * nodes));
        }
        ad::Var logp = ad::masked_log_softmax(logits, mask);
        const auto& lp = g.value(logp);

        std::vector<std::size_t> chosen(b);
        for (std::size_t r = 0; r < b; ++r) {
            const std::size_t k = active[r];
            std::span<const double> row(lp.data() + r * nodes, nodes);
            std::span<const unsigned char> row_mask(mask.data() + r * nodes, nodes);
            int a = 0;
            if (options.forced_actions) {
                const auto& seq = (*options.forced_actions)[k];
                if (forced_pos[k] >= seq.size()) throw ContractViolation("forced action sequence exhausted");
                a = seq[forced_pos[k]++];
            } else if (options.mode == DecodeMode::Greedy) {
                a = greedy_choice(row, row_mask);
            } else {
                a = sample_choice(row, row_mask, rngs[k]);
            }
            chosen[r] = static_cast<std::size_t>(a);
            auto& t = batch.trajectories[k];
            t.steps.push_back({agent, state_hash(states[k]), std::vector<unsigned char>(row_mask.begin(), row_mask.end()),
                               a, row[static_cast<std::size_t>(a)]});
            t.agent_log_prob[static_cast<std::size_t>(agent)] += row[static_cast<std::size_t>(a)];
            t.agent_steps[static_cast<std::size_t>(agent)] += 1;
        }
        batch.records.push_back({agent, ad::pick(logp, chosen), active});

        for (std::size_t r = 0; r < b; ++r) {
            const std::size_t k = active[r];
            apply_action(states[k], static_cast<int>(chosen[r]));
            stream[k].push_back(static_cast<int>(chosen[r]));
        }
    }

    for (std::size_t k = 0; k < count; ++k) {
        auto& t = batch.trajectories[k];
        t.plan = finalize(states[k]);
        t.cost = t.plan.total_length + options.truncation_penalty * t.plan.residual_demand;
    }
    return batch;
}

/// Greedy decoding of a single instance.
inline RoutePlan solve_greedy(const ProblemInstance& instance, std::span<const Actor> actors, int round_cap = 0) {
    RolloutOptions opt;
    opt.mode = DecodeMode::Greedy;
    opt.round_cap = round_cap;
    auto batch = rollout_batch(std::span<const ProblemInstance>(&instance, 1), actors, opt);
    return batch.trajectories.front().plan;
}

/// Policy-gradient surrogate of agent `agent` (or all agents when negative):
///   sum_j 1/(count_j) * sum_k A_k * sum_{t: agent j acts in k} log pi_j(a_t),
/// where count_j is the number of decisions agent j made over the batch
/// (B times its mean per-episode step count). Minimizing it descends the
/// expected cost.
inline ad::Var policy_surrogate(RolloutBatch& batch, std::span<const double> advantages, int agent,
                                std::span<const std::size_t> agent_counts) {
    ad::Graph& g = *batch.graph;
    std::vector<ad::Var> terms;
    for (const auto& rec : batch.records) {
        if (agent >= 0 && rec.agent != agent) continue;
        const double denom = static_cast<double>(agent_counts[static_cast<std::size_t>(rec.agent)]);
        ad::Array w(1, rec.episodes.size());
        for (std::size_t r = 0; r < rec.episodes.size(); ++r) w[r] = advantages[rec.episodes[r]] / denom;
        terms.push_back(ad::matmul(g.constant(std::move(w)), rec.chosen));
    }
    if (terms.empty()) return g.constant(ad::Array::scalar(0.0));
    return ad::sum(g.concat(terms, 0));
}

inline std::vector<std::size_t> agent_step_counts(const RolloutBatch& batch, int num_agents) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_agents), 0);
    for (const auto& rec : batch.records) counts[static_cast<std::size_t>(rec.agent)] += rec.episodes.size();
    return counts;
}

inline ad::GradientMap filter_prefix(const ad::GradientMap& grads, const std::string& prefix) {
    ad::GradientMap out;
    for (const auto& [name, g] : grads)
        if (name.starts_with(prefix + ".")) out.emplace(name, g);
    return out;
}

/// Gradient of the policy objective for one agent's parameters. The whole
/// episode's advantage A_k = R_k - V(s_k) scales every decision of every agent.
inline ad::GradientMap actor_gradient(RolloutBatch& batch, std::span<const double> critic_values, int agent,
                                      const Actor& actor) {
    if (batch.trajectories.empty()) throw ContractViolation("actor_gradient on an empty batch");
    if (critic_values.size() != batch.trajectories.size())
        throw ContractViolation("critic values not aligned with trajectories");
    std::vector<double> adv(batch.trajectories.size());
    for (std::size_t k = 0; k < adv.size(); ++k) adv[k] = batch.trajectories[k].cost - critic_values[k];
    auto counts = agent_step_counts(batch, actor.dims.num_vehicles);
    for (auto& c : counts) c = std::max<std::size_t>(c, 1);
    ad::Var loss = policy_surrogate(batch, adv, agent, counts);
    batch.graph->backward(loss);
    auto grads = filter_prefix(batch.graph->parameter_gradients(), actor.prefix());
    for (const auto& [name, p] : actor.params)
        if (!grads.count(name)) grads.emplace(name, ad::Array(p.rows(), p.cols()));
    return grads;
}

}  // namespace cmvrp
