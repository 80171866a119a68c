#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adam.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "instance.hpp"
#include "parallel.hpp"
#include "policy.hpp"
#include "rollout.hpp"

namespace cmvrp {

// Episodes per tape. Fixed so that results do not depend on the thread count.
inline constexpr std::size_t kShardSize = 32;
// Validation instances use stream indices from here on (test sets start at 0).
inline constexpr std::uint64_t kValidationStreamBase = 1'000'000'000ULL;

struct TrainConfig {
    int batch_size = 128;
    int iterations = 1000;
    int round_cap = 0;  // 0: twice the number of customers
    double actor_lr = 1e-4;
    double critic_lr = 1e-4;
    double truncation_penalty = 2.0;
    int eval_every = 50;
    int checkpoint_every = 0;  // 0: only at the end
    int validation_size = 100;
    int embed_dim = 128;
    int attn_dim = 128;
    std::uint64_t seed = 1;
    int jobs = 1;
    bool record_timing = true;

    void validate() const {
        if (batch_size < 1) throw ParseError("batch_size", "must be >= 1");
        if (iterations < 0) throw ParseError("iterations", "must be >= 0");
        if (round_cap < 0) throw ParseError("round_cap", "must be >= 0");
        if (!(actor_lr > 0.0)) throw ParseError("actor_lr", "must be positive");
        if (!(critic_lr > 0.0)) throw ParseError("critic_lr", "must be positive");
        if (!(truncation_penalty >= 0.0)) throw ParseError("truncation_penalty", "must be >= 0");
        if (eval_every < 0) throw ParseError("eval_every", "must be >= 0");
        if (checkpoint_every < 0) throw ParseError("checkpoint_every", "must be >= 0");
        if (validation_size < 1) throw ParseError("validation_size", "must be >= 1");
        if (embed_dim < 1) throw ParseError("embed_dim", "must be >= 1");
        if (attn_dim < 1) throw ParseError("attn_dim", "must be >= 1");
        if (jobs < 1) throw ParseError("jobs", "must be >= 1");
    }

    static TrainConfig from_doc(const KeyValueDoc& doc) {
        TrainConfig c;
        auto get_int = [&](const char* key, int& dst) {
            if (doc.has(key)) dst = static_cast<int>(doc.get_int(key));
        };
        auto get_double = [&](const char* key, double& dst) {
            if (doc.has(key)) dst = doc.get_double(key);
        };
        get_int("batch_size", c.batch_size);
        get_int("iterations", c.iterations);
        get_int("round_cap", c.round_cap);
        get_double("actor_lr", c.actor_lr);
        get_double("critic_lr", c.critic_lr);
        get_double("truncation_penalty", c.truncation_penalty);
        get_int("eval_every", c.eval_every);
        get_int("checkpoint_every", c.checkpoint_every);
        get_int("validation_size", c.validation_size);
        get_int("embed_dim", c.embed_dim);
        get_int("attn_dim", c.attn_dim);
        if (doc.has("seed")) c.seed = static_cast<std::uint64_t>(doc.get_int("seed"));
        get_int("jobs", c.jobs);
        doc.require_consumed();
        c.validate();
        return c;
    }

    static TrainConfig load(const std::string& path) { return from_doc(KeyValueDoc::load(path)); }
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_hexfloat(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

// ---------------------------------------------------------------------------
// Critic objective

struct CriticStep {
    std::vector<double> values;
    double loss = 0.0;
    ad::GradientMap grads;
};

/// Value estimates, mean squared error (1/B) sum_k (V(s_k) - R_k)^2 and its gradient.
inline CriticStep critic_gradient(std::span<const ProblemInstance* const> instances, std::span<const double> costs,
                                  const Critic& critic) {
    if (instances.empty()) throw ContractViolation("critic_gradient on an empty batch");
    if (instances.size() != costs.size()) throw ContractViolation("costs not aligned with instances");
    ad::Graph g;
    ad::Var v = critic_forward(g, instances, critic);
    ad::Var target = g.constant(ad::Array(costs.size(), 1, std::vector<double>(costs.begin(), costs.end())));
    ad::Var diff = ad::sub(v, target);
    ad::Var loss = ad::mean(ad::mul(diff, diff));
    g.backward(loss);
    CriticStep out;
    const auto& vals = g.value(v);
    out.values.assign(vals.data(), vals.data() + vals.size());
    out.loss = g.value(loss).item();
    out.grads = g.parameter_gradients();
    return out;
}

// ---------------------------------------------------------------------------
// Greedy evaluation

/// Greedy plans for every instance, decoded in fixed chunks of kShardSize
/// consecutive instances so results are independent of `jobs`.
inline std::vector<RoutePlan> greedy_plans(std::span<const ProblemInstance> instances, std::span<const Actor> actors,
                                           int round_cap = 0, int jobs = 1) {
    std::vector<RoutePlan> plans(instances.size());
    const std::size_t chunks = (instances.size() + kShardSize - 1) / kShardSize;
    parallel_for(chunks, jobs, [&](std::size_t c) {
        const std::size_t begin = c * kShardSize;
        const std::size_t end = std::min(instances.size(), begin + kShardSize);
        RolloutOptions opt;
        opt.mode = DecodeMode::Greedy;
        opt.round_cap = round_cap;
        auto batch = rollout_batch(instances.subspan(begin, end - begin), actors, opt);
        for (std::size_t k = begin; k < end; ++k) plans[k] = std::move(batch.trajectories[k - begin].plan);
    });
    return plans;
}

inline double mean_penalized_cost(std::span<const RoutePlan> plans, double penalty) {
    double s = 0.0;
    for (const auto& p : plans) s += p.total_length + penalty * p.residual_demand;
    return s / static_cast<double>(plans.size());
}

inline std::vector<ProblemInstance> validation_set(const ExperimentConfig& experiment, int size) {
    std::vector<ProblemInstance> out;
    for (int i = 0; i < size; ++i)
        out.push_back(generate_instance(experiment, kValidationStreamBase + static_cast<std::uint64_t>(i)));
    return out;
}

// ---------------------------------------------------------------------------
// Training state and checkpoints

struct TrainState {
    std::vector<Actor> actors;
    Critic critic;
    std::vector<ad::AdamState> actor_opt;
    ad::AdamState critic_opt;
    int iteration = 0;
};

inline TrainState init_train_state(const TrainConfig& config, const ExperimentConfig& experiment) {
    TrainState st;
    const PolicyDims dims{config.embed_dim, config.attn_dim, experiment.num_vehicles};
    st.actors = init_actors(dims, derive_stream(config.seed, 1));
    st.critic = init_critic(config.embed_dim, derive_stream(config.seed, 2));
    for (std::size_t j = 0; j < st.actors.size(); ++j) {
        ad::AdamState opt;
        opt.hyper.lr = config.actor_lr;
        st.actor_opt.push_back(std::move(opt));
    }
    st.critic_opt.hyper.lr = config.critic_lr;
    return st;
}

namespace detail {

inline void pack_adam(Checkpoint& ckpt, const std::string& group, const ad::AdamState& opt) {
    ckpt.meta["adam." + group + ".step"] = std::to_string(opt.step);
    ckpt.meta["adam." + group + ".lr"] = format_hexfloat(opt.hyper.lr);
    ckpt.meta["adam." + group + ".beta1"] = format_hexfloat(opt.hyper.beta1);
    ckpt.meta["adam." + group + ".beta2"] = format_hexfloat(opt.hyper.beta2);
    ckpt.meta["adam." + group + ".eps"] = format_hexfloat(opt.hyper.eps);
    for (const auto& [name, a] : opt.m) ckpt.tensors["adam." + group + ".m." + name] = a;
    for (const auto& [name, a] : opt.v) ckpt.tensors["adam." + group + ".v." + name] = a;
}

inline const std::string& meta_at(const Checkpoint& ckpt, const std::string& key) {
    auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end()) throw ParseError("checkpoint.meta." + key, "missing field");
    return it->second;
}

inline ad::AdamState unpack_adam(const Checkpoint& ckpt, const std::string& group, const ad::ParameterSet& params) {
    ad::AdamState opt;
    opt.step = std::stoll(meta_at(ckpt, "adam." + group + ".step"));
    opt.hyper.lr = std::strtod(meta_at(ckpt, "adam." + group + ".lr").c_str(), nullptr);
    opt.hyper.beta1 = std::strtod(meta_at(ckpt, "adam." + group + ".beta1").c_str(), nullptr);
    opt.hyper.beta2 = std::strtod(meta_at(ckpt, "adam." + group + ".beta2").c_str(), nullptr);
    opt.hyper.eps = std::strtod(meta_at(ckpt, "adam." + group + ".eps").c_str(), nullptr);
    for (const auto& [name, p] : params) {
        auto m = ckpt.tensors.find("adam." + group + ".m." + name);
        auto v = ckpt.tensors.find("adam." + group + ".v." + name);
        if (m != ckpt.tensors.end()) opt.m[name] = m->second;
        if (v != ckpt.tensors.end()) opt.v[name] = v->second;
    }
    return opt;
}

inline void load_params(const Checkpoint& ckpt, ad::ParameterSet& params) {
    for (auto& [name, p] : params) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) throw ParseError("checkpoint.tensor." + name, "missing parameter");
        if (!it->second.same_shape(p)) throw ParseError("checkpoint.tensor." + name, "shape mismatch");
        p = it->second;
    }
}

}  // namespace detail

inline Checkpoint make_checkpoint(const TrainState& st, const ExperimentConfig& experiment) {
    Checkpoint ckpt;
    ckpt.config_hash = experiment.hash();
    const auto& dims = st.actors.front().dims;
    ckpt.meta["iteration"] = std::to_string(st.iteration);
    ckpt.meta["embed_dim"] = std::to_string(dims.embed_dim);
    ckpt.meta["attn_dim"] = std::to_string(dims.attn_dim);
    ckpt.meta["num_vehicles"] = std::to_string(dims.num_vehicles);
    ckpt.meta["experiment"] = experiment.name;
    for (const auto& a : st.actors)
        for (const auto& [name, p] : a.params) ckpt.tensors[name] = p;
    for (const auto& [name, p] : st.critic.params) ckpt.tensors[name] = p;
    for (std::size_t j = 0; j < st.actors.size(); ++j) detail::pack_adam(ckpt, st.actors[j].prefix(), st.actor_opt[j]);
    detail::pack_adam(ckpt, "critic", st.critic_opt);
    return ckpt;
}

inline TrainState restore_train_state(const Checkpoint& ckpt) {
    TrainState st;
    PolicyDims dims;
    dims.embed_dim = std::stoi(detail::meta_at(ckpt, "embed_dim"));
    dims.attn_dim = std::stoi(detail::meta_at(ckpt, "attn_dim"));
    dims.num_vehicles = std::stoi(detail::meta_at(ckpt, "num_vehicles"));
    st.iteration = std::stoi(detail::meta_at(ckpt, "iteration"));
    for (int j = 0; j < dims.num_vehicles; ++j) {
        Actor a = make_actor(dims, j);
        detail::load_params(ckpt, a.params);
        st.actor_opt.push_back(detail::unpack_adam(ckpt, a.prefix(), a.params));
        st.actors.push_back(std::move(a));
    }
    st.critic = make_critic(dims.embed_dim);
    detail::load_params(ckpt, st.critic.params);
    st.critic_opt = detail::unpack_adam(ckpt, "critic", st.critic.params);
    return st;
}

// ---------------------------------------------------------------------------
// A2C loop

struct LogLine {
    int iteration = 0;
    double mean_cost = 0.0;
    std::optional<double> val_cost;
    double adv_mean = 0.0;
    double adv_std = 0.0;
    double critic_loss = 0.0;
    std::vector<double> actor_grad_norms;
    double critic_grad_norm = 0.0;
    double wall_ms = 0.0;

    static std::string header() {
        return "iteration,mean_cost,val_cost,adv_mean,adv_std,critic_loss,actor_grad_norms,critic_grad_norm,wall_ms";
    }

    std::string to_string() const {
        std::string norms;
        for (std::size_t j = 0; j < actor_grad_norms.size(); ++j)
            norms += (j ? ";" : "") + format_double(actor_grad_norms[j]);
        return std::to_string(iteration) + "," + format_double(mean_cost) + "," +
               (val_cost ? format_double(*val_cost) : std::string()) + "," + format_double(adv_mean) + "," +
               format_double(adv_std) + "," + format_double(critic_loss) + "," + norms + "," +
               format_double(critic_grad_norm) + "," + format_double(wall_ms);
    }
};

struct TrainOutputs {
    std::string checkpoint_dir;  // empty: no files written
    std::string log_path;
};

/// Problem family used for training batches: the experiment's fleet with a
/// seed of its own so that training never samples test instances.
inline ExperimentConfig training_family(const ExperimentConfig& experiment, const TrainConfig& config) {
    ExperimentConfig fam = experiment;
    fam.seed = derive_stream(config.seed, 3);
    return fam;
}

/// One A2C iteration: sample a batch, play it with the stochastic policies,
/// compute every actor's policy gradient and the critic's regression
/// gradient, then apply Adam to each theta_j followed by phi.
inline LogLine train_iteration(TrainState& st, const TrainConfig& config, const ExperimentConfig& experiment) {
    const auto batch_size = static_cast<std::size_t>(config.batch_size);
    const auto base = static_cast<std::uint64_t>(st.iteration) * batch_size;
    const auto family = training_family(experiment, config);
    std::vector<ProblemInstance> instances;
    instances.reserve(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k) instances.push_back(generate_instance(family, base + k));

    const std::size_t shards = (batch_size + kShardSize - 1) / kShardSize;
    std::vector<RolloutBatch> rollouts(shards);
    parallel_for(shards, config.jobs, [&](std::size_t s) {
        const std::size_t begin = s * kShardSize;
        const std::size_t end = std::min(batch_size, begin + kShardSize);
        RolloutOptions opt;
        opt.mode = DecodeMode::Sample;
        opt.round_cap = config.round_cap;
        opt.truncation_penalty = config.truncation_penalty;
        opt.seed = derive_stream(config.seed, 4);
        opt.stream_base = base + begin;
        rollouts[s] = rollout_batch(std::span<const ProblemInstance>(instances).subspan(begin, end - begin),
                                    st.actors, opt);
    });

    std::vector<double> costs;
    std::vector<const ProblemInstance*> views;
    for (const auto& r : rollouts)
        for (const auto& t : r.trajectories) costs.push_back(t.cost);
    for (const auto& inst : instances) views.push_back(&inst);
    auto critic_step = critic_gradient(views, costs, st.critic);

    std::vector<double> adv(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k) adv[k] = costs[k] - critic_step.values[k];

    const auto n_agents = static_cast<int>(st.actors.size());
    std::vector<std::size_t> counts(static_cast<std::size_t>(n_agents), 0);
    for (const auto& r : rollouts) {
        const auto c = agent_step_counts(r, n_agents);
        for (std::size_t j = 0; j < c.size(); ++j) counts[j] += c[j];
    }
    for (auto& c : counts) c = std::max<std::size_t>(c, 1);

    std::vector<ad::GradientMap> shard_grads(shards);
    parallel_for(shards, config.jobs, [&](std::size_t s) {
        const std::size_t begin = s * kShardSize;
        auto& r = rollouts[s];
        std::span<const double> shard_adv(adv.data() + begin, r.trajectories.size());
        ad::Var loss = policy_surrogate(r, shard_adv, -1, counts);
        r.graph->backward(loss);
        shard_grads[s] = r.graph->parameter_gradients();
        r.graph.reset();
    });

    LogLine line;
    line.iteration = st.iteration;
    for (std::size_t j = 0; j < st.actors.size(); ++j) {
        auto& actor = st.actors[j];
        ad::GradientMap grads;
        for (const auto& [name, p] : actor.params) grads.emplace(name, ad::Array(p.rows(), p.cols()));
        for (const auto& sg : shard_grads)
            for (auto& [name, g] : grads)
                if (auto it = sg.find(name); it != sg.end())
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += it->second[i];
        for (const auto& [name, g] : grads)
            if (!g.all_finite()) throw NumericError("non-finite gradient for " + name);
        line.actor_grad_norms.push_back(std::sqrt(ad::squared_norm(grads)));
        ad::adam_step(actor.params, grads, st.actor_opt[j]);
    }
    for (const auto& [name, g] : critic_step.grads)
        if (!g.all_finite()) throw NumericError("non-finite gradient for " + name);
    line.critic_grad_norm = std::sqrt(ad::squared_norm(critic_step.grads));
    ad::adam_step(st.critic.params, critic_step.grads, st.critic_opt);

    double mc = 0.0, am = 0.0, av = 0.0;
    for (std::size_t k = 0; k < batch_size; ++k) {
        mc += costs[k];
        am += adv[k];
    }
    mc /= static_cast<double>(batch_size);
    am /= static_cast<double>(batch_size);
    for (double a : adv) av += (a - am) * (a - am);
    line.mean_cost = mc;
    line.adv_mean = am;
    line.adv_std = std::sqrt(av / static_cast<double>(batch_size));
    line.critic_loss = critic_step.loss;
    ++st.iteration;
    return line;
}

inline std::string checkpoint_dir_override(const std::string& requested) {
    if (const char* env = std::getenv("CMVRP_CHECKPOINT_DIR"); env && *env) return env;
    return requested;
}

/// Full training run. Writes `<checkpoint_dir>/checkpoint_<iter>.ckpt` at the
/// configured cadence, `<checkpoint_dir>/final.ckpt` at the end and one log
/// line per iteration. A non-finite value aborts the run after writing
/// `<checkpoint_dir>/diagnostic.txt`.
inline TrainState train(const TrainConfig& config, const ExperimentConfig& experiment, const TrainOutputs& outputs,
                        const std::function<void(const LogLine&)>& on_log = {}) {
    config.validate();
    experiment.validate();
    TrainState st = init_train_state(config, experiment);
    const auto validation = validation_set(experiment, config.validation_size);

    std::ofstream log;
    if (!outputs.log_path.empty()) {
        log.open(outputs.log_path, std::ios::trunc);
        if (!log) throw IoError("cannot write training log " + outputs.log_path);
        log << LogLine::header() << "\n";
    }
    const std::string ckpt_dir = outputs.checkpoint_dir;
    if (!ckpt_dir.empty()) std::filesystem::create_directories(ckpt_dir);

    auto save = [&](const std::string& file) {
        if (!ckpt_dir.empty()) write_checkpoint((std::filesystem::path(ckpt_dir) / file).string(), make_checkpoint(st, experiment));
    };

    try {
        for (int it = 0; it < config.iterations; ++it) {
            const auto t0 = std::chrono::steady_clock::now();
            LogLine line = train_iteration(st, config, experiment);
            const bool last = it + 1 == config.iterations;
            if ((config.eval_every > 0 && (it + 1) % config.eval_every == 0) || last) {
                const auto plans = greedy_plans(validation, st.actors, config.round_cap, config.jobs);
                line.val_cost = mean_penalized_cost(plans, config.truncation_penalty);
            }
            if (config.record_timing)
                line.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            if (log) log << line.to_string() << "\n" << std::flush;
            if (on_log) on_log(line);
            if (config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 && !last)
                save("checkpoint_" + std::to_string(it + 1) + ".ckpt");
        }
    } catch (const NumericError& e) {
        if (!ckpt_dir.empty()) {
            std::ofstream dump((std::filesystem::path(ckpt_dir) / "diagnostic.txt").string());
            dump << "iteration " << st.iteration << "\n" << e.what() << "\n";
            for (const auto& a : st.actors)
                for (const auto& [name, p] : a.params) dump << name << " finite=" << p.all_finite() << "\n";
        }
        throw;
    }
    save("final.ckpt");
    return st;
}

}  // namespace cmvrp
