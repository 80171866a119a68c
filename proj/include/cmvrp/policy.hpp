#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "config.hpp"
#include "env.hpp"
#include "rng.hpp"

namespace cmvrp {

struct PolicyDims {
    int embed_dim = 128;  // D
    int attn_dim = 128;   // A
    int num_vehicles = 1;

    void validate() const {
        if (embed_dim < 1) throw ValidationError("embed_dim must be >= 1");
        if (attn_dim < 1) throw ValidationError("attn_dim must be >= 1");
        if (num_vehicles < 1) throw ValidationError("num_vehicles must be >= 1");
    }

    // Rows of the attention matrix: customer row, flattened fleet, decoder state.
    std::size_t attention_input() const {
        return static_cast<std::size_t>(embed_dim) * static_cast<std::size_t>(num_vehicles + 2);
    }

    friend bool operator==(const PolicyDims&, const PolicyDims&) = default;
};

/// Parameters theta_j of one vehicle's actor. Names are
/// `actor.<j>.{enc_cust,enc_veh,dec_in}.{W,b}`, `actor.<j>.gru.*`,
/// `actor.<j>.attn.{W,v}`.
struct Actor {
    int agent = 0;
    PolicyDims dims;
    ad::ParameterSet params;

    std::string prefix() const { return "actor." + std::to_string(agent); }
    std::string name(const std::string& leaf) const { return prefix() + "." + leaf; }
};

/// Shared value network V_phi: `critic.{embed,layer1,layer2,head}.{W,b}`.
struct Critic {
    int embed_dim = 128;
    ad::ParameterSet params;
};

namespace detail {

// Weights uniform in +-1/sqrt(fan_in) from a stream keyed by the parameter name; biases zero.
inline void init_uniform(ad::ParameterSet& params, std::uint64_t seed) {
    for (auto& [name, a] : params) {
        const bool is_bias = name.size() >= 2 && (name.ends_with(".b") || name.find(".b_") != std::string::npos);
        if (is_bias) {
            a.fill(0.0);
            continue;
        }
        if (a.rows() == 0) throw ValidationError("parameter " + name + " has zero fan-in");
        const double bound = 1.0 / std::sqrt(static_cast<double>(a.rows()));
        Rng rng(seed, fnv1a(name));
        for (auto& v : a.values()) v = rng.uniform(-bound, bound);
    }
}

inline void add_linear(ad::ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out) {
    if (in == 0) throw ValidationError("parameter " + prefix + ".W has zero fan-in");
    params[prefix + ".W"] = ad::Array(in, out);
    params[prefix + ".b"] = ad::Array(1, out);
}

}  // namespace detail

inline Actor make_actor(const PolicyDims& dims, int agent) {
    dims.validate();
    Actor a{agent, dims, {}};
    const auto d = static_cast<std::size_t>(dims.embed_dim);
    detail::add_linear(a.params, a.name("enc_cust"), 3, d);
    detail::add_linear(a.params, a.name("enc_veh"), 3, d);
    detail::add_linear(a.params, a.name("dec_in"), 2, d);
    ad::add_gru_params(a.params, a.name("gru"), d, d);
    a.params[a.name("attn.W")] = ad::Array(dims.attention_input(), static_cast<std::size_t>(dims.attn_dim));
    a.params[a.name("attn.v")] = ad::Array(static_cast<std::size_t>(dims.attn_dim), 1);
    return a;
}

inline Actor init_actor(const PolicyDims& dims, int agent, std::uint64_t seed) {
    Actor a = make_actor(dims, agent);
    detail::init_uniform(a.params, seed);
    return a;
}

inline std::vector<Actor> init_actors(const PolicyDims& dims, std::uint64_t seed) {
    std::vector<Actor> out;
    for (int j = 0; j < dims.num_vehicles; ++j) out.push_back(init_actor(dims, j, seed));
    return out;
}

inline Critic make_critic(int embed_dim) {
    if (embed_dim < 1) throw ValidationError("embed_dim must be >= 1");
    Critic c{embed_dim, {}};
    const auto d = static_cast<std::size_t>(embed_dim);
    detail::add_linear(c.params, "critic.embed", 2, d);
    detail::add_linear(c.params, "critic.layer1", d, d);
    detail::add_linear(c.params, "critic.layer2", d, d);
    detail::add_linear(c.params, "critic.head", d, 1);
    return c;
}

inline Critic init_critic(int embed_dim, std::uint64_t seed) {
    Critic c = make_critic(embed_dim);
    detail::init_uniform(c.params, seed);
    return c;
}

// ---------------------------------------------------------------------------
// Network pieces. Each takes a batch of b episodes that share one instance
// shape; rows are ordered episode-major.

/// Customer features (x, y, d_t/9), depot row (x, y, 0): (b*(M+1)) x 3.
inline ad::Array customer_features(std::span<const EnvState* const> states) {
    const auto nodes = static_cast<std::size_t>(states.front()->instance->num_nodes());
    ad::Array f(states.size() * nodes, 3);
    for (std::size_t k = 0; k < states.size(); ++k) {
        const auto& s = *states[k];
        const auto& inst = *s.instance;
        for (std::size_t i = 0; i < nodes; ++i) {
            const auto& p = inst.coord(static_cast<int>(i));
            const std::size_t r = k * nodes + i;
            f(r, 0) = p.x;
            f(r, 1) = p.y;
            f(r, 2) = i == 0 ? 0.0 : static_cast<double>(s.remaining[i - 1]) / kMaxDemand;
        }
    }
    return f;
}

/// Vehicle features (l_t/capacity, x, y): (b*N) x 3.
inline ad::Array vehicle_features(std::span<const EnvState* const> states) {
    const auto n = static_cast<std::size_t>(states.front()->instance->num_vehicles());
    ad::Array f(states.size() * n, 3);
    for (std::size_t k = 0; k < states.size(); ++k) {
        const auto& s = *states[k];
        const auto& inst = *s.instance;
        for (std::size_t j = 0; j < n; ++j) {
            const auto& p = inst.coord(s.positions[j]);
            const std::size_t r = k * n + j;
            f(r, 0) = static_cast<double>(s.loads[j]) / inst.vehicles[j].capacity;
            f(r, 1) = p.x;
            f(r, 2) = p.y;
        }
    }
    return f;
}

inline ad::Var encode_customers(ad::Graph& g, std::span<const EnvState* const> states, const Actor& actor) {
    return ad::linear(g, actor.params, actor.name("enc_cust"), g.constant(customer_features(states)));
}

inline ad::Var encode_vehicles(ad::Graph& g, std::span<const EnvState* const> states, const Actor& actor) {
    return ad::linear(g, actor.params, actor.name("enc_veh"), g.constant(vehicle_features(states)));
}

/// One decoder step: embed the previous action's coordinates (b x 2) and
/// advance the recurrent state (b x D).
inline ad::Var decode_step(ad::Graph& g, ad::Var prev_action_coord, ad::Var hidden, const Actor& actor) {
    ad::Var x = ad::linear(g, actor.params, actor.name("dec_in"), prev_action_coord);
    return ad::gru_cell(g, actor.params, actor.name("gru"), x, hidden);
}

/// u[k, i] = v^T tanh(W^T [cust_emb(k, i); flatten(veh_emb(k)); hidden(k)]).
/// W is applied blockwise, which equals multiplying the concatenated row.
/// Returns b x (M+1).
inline ad::Var attention_logits(ad::Graph& g, ad::Var cust_emb, ad::Var veh_emb, ad::Var hidden, const Actor& actor,
                                std::size_t batch, std::size_t nodes) {
    const auto d = static_cast<std::size_t>(actor.dims.embed_dim);
    const auto fleet = static_cast<std::size_t>(actor.dims.num_vehicles) * d;
    ad::Var W = g.parameter(actor.params, actor.name("attn.W"));
    ad::Var w_cust = ad::slice_rows(W, 0, d);
    ad::Var w_fleet = ad::slice_rows(W, d, d + fleet);
    ad::Var w_hidden = ad::slice_rows(W, d + fleet, d + fleet + d);
    ad::Var veh_flat = ad::reshape(veh_emb, batch, fleet);
    ad::Var shared = ad::add(ad::matmul(veh_flat, w_fleet), ad::matmul(hidden, w_hidden));
    std::vector<std::size_t> spread(batch * nodes);
    for (std::size_t r = 0; r < spread.size(); ++r) spread[r] = r / nodes;
    ad::Var pre = ad::add(ad::matmul(cust_emb, w_cust), ad::gather(shared, std::move(spread)));
    ad::Var u = ad::matmul(ad::tanh(pre), g.parameter(actor.params, actor.name("attn.v")));
    return ad::reshape(u, batch, nodes);
}

/// Value estimate (expected episode length) per instance: b x 1.
inline ad::Var critic_forward(ad::Graph& g, std::span<const ProblemInstance* const> instances, const Critic& critic) {
    const auto nodes = static_cast<std::size_t>(instances.front()->num_nodes());
    ad::Array coords(instances.size() * nodes, 2);
    for (std::size_t k = 0; k < instances.size(); ++k) {
        if (static_cast<std::size_t>(instances[k]->num_nodes()) != nodes)
            throw ContractViolation("critic batch mixes instance sizes");
        for (std::size_t i = 0; i < nodes; ++i) {
            const auto& p = instances[k]->coord(static_cast<int>(i));
            coords(k * nodes + i, 0) = p.x;
            coords(k * nodes + i, 1) = p.y;
        }
    }
    ad::Var e = ad::relu(ad::linear(g, critic.params, "critic.embed", g.constant(std::move(coords))));
    ad::Var pooled = ad::segment_mean(e, nodes);
    ad::Var h1 = ad::relu(ad::linear(g, critic.params, "critic.layer1", pooled));
    ad::Var h2 = ad::relu(ad::linear(g, critic.params, "critic.layer2", h1));
    return ad::linear(g, critic.params, "critic.head", h2);
}

inline double critic_value(const ProblemInstance& instance, const Critic& critic) {
    ad::Graph g;
    const ProblemInstance* one[] = {&instance};
    return g.value(critic_forward(g, one, critic)).item();
}

// ---------------------------------------------------------------------------
// Action selection

enum class DecodeMode { Sample, Greedy };

struct StepDistribution {
    std::vector<double> log_probs;  // kMaskedLogProb on masked nodes
    std::vector<unsigned char> mask;
    int action = -1;
    double chosen_log_prob = 0.0;

    double probability(std::size_t node) const { return mask[node] ? std::exp(log_probs[node]) : 0.0; }
};

// Highest-probability feasible node; ties go to the lowest index.
inline int greedy_choice(std::span<const double> log_probs, std::span<const unsigned char> mask) {
    int best = -1;
    for (std::size_t i = 0; i < log_probs.size(); ++i)
        if (mask[i] && (best < 0 || log_probs[i] > log_probs[static_cast<std::size_t>(best)])) best = static_cast<int>(i);
    if (best < 0) throw ContractViolation("no feasible action");
    return best;
}

// Inverse-CDF draw over feasible nodes in index order.
inline int sample_choice(std::span<const double> log_probs, std::span<const unsigned char> mask, Rng& rng) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    int last = -1;
    for (std::size_t i = 0; i < log_probs.size(); ++i) {
        if (!mask[i]) continue;
        last = static_cast<int>(i);
        cumulative += std::exp(log_probs[i]);
        if (u < cumulative) return last;
    }
    if (last < 0) throw ContractViolation("no feasible action");
    return last;
}

/// Masked softmax over one row of logits plus the chosen action.
inline StepDistribution action_distribution(std::span<const double> logits, std::span<const unsigned char> mask,
                                            DecodeMode mode, Rng* rng = nullptr) {
    ad::Graph g;
    ad::Var x = g.constant(ad::Array(1, logits.size(), std::vector<double>(logits.begin(), logits.end())));
    ad::Var lp = ad::masked_log_softmax(x, std::vector<unsigned char>(mask.begin(), mask.end()));
    StepDistribution out;
    const auto& v = g.value(lp);
    out.log_probs.assign(v.data(), v.data() + v.size());
    out.mask.assign(mask.begin(), mask.end());
    if (mode == DecodeMode::Greedy || rng == nullptr)
        out.action = greedy_choice(out.log_probs, out.mask);
    else
        out.action = sample_choice(out.log_probs, out.mask, *rng);
    out.chosen_log_prob = out.log_probs[static_cast<std::size_t>(out.action)];
    return out;
}

}  // namespace cmvrp
