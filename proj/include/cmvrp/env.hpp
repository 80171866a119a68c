#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "instance.hpp"

namespace cmvrp {

// ---------------------------------------------------------------------------
// Route plans

struct Tour {
    std::vector<int> nodes;      // starts and ends at the depot
    std::vector<int> delivered;  // aligned with nodes; 0 at the depot

    int load() const {
        int s = 0;
        for (int d : delivered) s += d;
        return s;
    }

    friend bool operator==(const Tour&, const Tour&) = default;
};

struct VehicleRoutes {
    int capacity = 0;
    std::vector<Tour> tours;

    friend bool operator==(const VehicleRoutes&, const VehicleRoutes&) = default;
};

struct RoutePlan {
    std::vector<VehicleRoutes> vehicles;
    double total_length = 0.0;
    bool feasible = true;      // false when demand was left unserved
    int residual_demand = 0;
    bool slot_overflow = false;  // a heuristic needed more than two tours on some vehicle

    int num_tours() const {
        int n = 0;
        for (const auto& v : vehicles) n += static_cast<int>(v.tours.size());
        return n;
    }

    friend bool operator==(const RoutePlan&, const RoutePlan&) = default;
};

inline double tour_length(const std::vector<int>& nodes, const ProblemInstance& instance) {
    double len = 0.0;
    for (std::size_t k = 1; k < nodes.size(); ++k) len += instance.dist(nodes[k - 1], nodes[k]);
    return len;
}

inline double plan_length(const RoutePlan& plan, const ProblemInstance& instance) {
    double len = 0.0;
    for (const auto& v : plan.vehicles)
        for (const auto& t : v.tours) len += tour_length(t.nodes, instance);
    return len;
}

inline double episode_cost(const RoutePlan& plan) noexcept { return plan.total_length; }

/// Checks the structural invariants of a plan against its instance and
/// returns an empty string when they hold, otherwise a description of the
/// first violation. Split deliveries are accepted only with `allow_split`.
inline std::string check_plan(const RoutePlan& plan, const ProblemInstance& instance, bool allow_split,
                              double length_tol = 1e-9) {
    if (static_cast<int>(plan.vehicles.size()) != instance.num_vehicles()) return "vehicle count mismatch";
    std::vector<int> served(static_cast<std::size_t>(instance.num_customers()), 0);
    std::vector<int> visits(served.size(), 0);
    for (std::size_t j = 0; j < plan.vehicles.size(); ++j) {
        const auto& v = plan.vehicles[j];
        if (v.capacity != instance.vehicles[j].capacity) return "capacity mismatch on vehicle " + std::to_string(j);
        for (const auto& t : v.tours) {
            if (t.nodes.size() < 3 || t.nodes.front() != kDepot || t.nodes.back() != kDepot)
                return "tour must start and end at the depot and visit a customer";
            if (t.delivered.size() != t.nodes.size()) return "delivered list misaligned";
            if (t.load() > v.capacity) return "tour load exceeds capacity on vehicle " + std::to_string(j);
            for (std::size_t k = 1; k + 1 < t.nodes.size(); ++k) {
                const int node = t.nodes[k];
                if (node < 1 || node > instance.num_customers()) return "interior node is not a customer";
                if (t.delivered[k] <= 0) return "visit without delivery";
                served[static_cast<std::size_t>(node - 1)] += t.delivered[k];
                visits[static_cast<std::size_t>(node - 1)] += 1;
            }
        }
    }
    int residual = 0;
    for (std::size_t i = 0; i < served.size(); ++i) {
        const int d = instance.customers[i].demand;
        if (served[i] > d) return "customer " + std::to_string(i + 1) + " over-served";
        residual += d - served[i];
        if (!allow_split && visits[i] > 1) return "customer " + std::to_string(i + 1) + " split across visits";
    }
    if (plan.feasible && residual != 0) return "plan marked feasible with unserved demand";
    if (residual != plan.residual_demand) return "residual demand mismatch";
    if (std::abs(plan_length(plan, instance) - plan.total_length) > length_tol) return "total_length mismatch";
    return {};
}

// ---------------------------------------------------------------------------
// Environment

struct Visit {
    int node = 0;
    int delivered = 0;

    friend bool operator==(const Visit&, const Visit&) = default;
};

/// Dynamic state of one episode. Agents act one at a time in fixed vehicle
/// order; a round ends after the last vehicle acts.
struct EnvState {
    const ProblemInstance* instance = nullptr;  // must outlive the state
    std::vector<int> remaining;                 // per customer, index i-1 for node i
    std::vector<int> loads;
    std::vector<int> positions;                 // node indices
    int acting_agent = 0;
    int round = 0;
    int round_cap = 0;
    int steps = 0;
    std::vector<std::vector<Visit>> visit_log;
    double accumulated_cost = 0.0;

    int remaining_total() const {
        int s = 0;
        for (int d : remaining) s += d;
        return s;
    }

    int delivered_total() const {
        int s = 0;
        for (const auto& log : visit_log)
            for (const auto& v : log) s += v.delivered;
        return s;
    }

    friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct ActionMask {
    std::vector<unsigned char> feasible;  // index 0 is the depot

    int count() const {
        int n = 0;
        for (auto f : feasible) n += f ? 1 : 0;
        return n;
    }

    bool operator[](std::size_t node) const { return feasible[node] != 0; }
};

inline int default_round_cap(const ProblemInstance& instance) { return 2 * instance.num_customers(); }

inline EnvState reset(const ProblemInstance& instance, int round_cap = 0) {
    EnvState s;
    s.instance = &instance;
    s.remaining.reserve(instance.customers.size());
    for (const auto& c : instance.customers) s.remaining.push_back(c.demand);
    for (const auto& v : instance.vehicles) s.loads.push_back(v.capacity);
    s.positions.assign(instance.vehicles.size(), kDepot);
    s.round_cap = round_cap > 0 ? round_cap : default_round_cap(instance);
    s.visit_log.resize(instance.vehicles.size());
    return s;
}

/// Feasibility rules for the acting vehicle:
///   - served customers are closed;
///   - an empty vehicle may only return to the depot;
///   - no vehicle stays where it is, except idling at the depot once all
///     demand is served;
///   - the depot is open to every vehicle that is away from it.
inline ActionMask feasible_actions(const EnvState& state) {
    const int m = static_cast<int>(state.remaining.size());
    const auto j = static_cast<std::size_t>(state.acting_agent);
    const int here = state.positions[j];
    ActionMask mask;
    mask.feasible.assign(static_cast<std::size_t>(m + 1), 0);
    if (state.loads[j] > 0) {
        for (int i = 1; i <= m; ++i)
            if (state.remaining[static_cast<std::size_t>(i - 1)] > 0 && i != here) mask.feasible[static_cast<std::size_t>(i)] = 1;
    }
    if (here != kDepot)
        mask.feasible[kDepot] = 1;
    else if (state.remaining_total() == 0)
        mask.feasible[kDepot] = 1;
    return mask;
}

/// Moves the acting vehicle to `action` in place and returns the travelled
/// distance. Throws ContractViolation for infeasible actions.
inline double apply_action(EnvState& state, int action) {
    const auto mask = feasible_actions(state);
    if (action < 0 || action >= static_cast<int>(mask.feasible.size()) || !mask[static_cast<std::size_t>(action)])
        throw ContractViolation("infeasible action " + std::to_string(action) + " for vehicle " +
                                std::to_string(state.acting_agent));
    const auto j = static_cast<std::size_t>(state.acting_agent);
    const auto& inst = *state.instance;
    const int from = state.positions[j];
    double cost = 0.0;
    if (!(action == kDepot && from == kDepot)) {
        cost = inst.dist(from, action);
        int delivered = 0;
        if (action == kDepot) {
            state.loads[j] = inst.vehicles[j].capacity;
        } else {
            auto& rem = state.remaining[static_cast<std::size_t>(action - 1)];
            delivered = std::min(state.loads[j], rem);
            rem -= delivered;
            state.loads[j] -= delivered;
        }
        state.positions[j] = action;
        state.visit_log[j].push_back({action, delivered});
        state.accumulated_cost += cost;
    }
    ++state.steps;
    state.acting_agent = (state.acting_agent + 1) % inst.num_vehicles();
    if (state.acting_agent == 0) ++state.round;
    return cost;
}

inline std::pair<EnvState, double> step(const EnvState& state, int action) {
    EnvState next = state;
    const double cost = apply_action(next, action);
    return {std::move(next), cost};
}

inline bool all_served_and_home(const EnvState& state) {
    if (state.remaining_total() != 0) return false;
    for (int p : state.positions)
        if (p != kDepot) return false;
    return true;
}

inline bool is_terminal(const EnvState& state) { return all_served_and_home(state) || state.round >= state.round_cap; }

// Sum of leg lengths implied by the visit log, excluding closing legs.
inline double logged_cost(const EnvState& state) {
    double c = 0.0;
    for (const auto& log : state.visit_log) {
        int at = kDepot;
        for (const auto& v : log) {
            c += state.instance->dist(at, v.node);
            at = v.node;
        }
    }
    return c;
}

/// Splits each vehicle's visit log into depot-to-depot tours, closing any
/// tour left open with a return leg.
inline RoutePlan finalize(const EnvState& state) {
    if (!is_terminal(state)) throw ContractViolation("finalize called on a non-terminal state");
    const auto& inst = *state.instance;
    RoutePlan plan;
    double total = state.accumulated_cost;
    for (std::size_t j = 0; j < state.visit_log.size(); ++j) {
        VehicleRoutes routes{inst.vehicles[j].capacity, {}};
        Tour current{{kDepot}, {0}};
        for (const auto& v : state.visit_log[j]) {
            current.nodes.push_back(v.node);
            current.delivered.push_back(v.delivered);
            if (v.node == kDepot) {
                routes.tours.push_back(std::move(current));
                current = Tour{{kDepot}, {0}};
            }
        }
        if (current.nodes.size() > 1) {
            total += inst.dist(current.nodes.back(), kDepot);
            current.nodes.push_back(kDepot);
            current.delivered.push_back(0);
            routes.tours.push_back(std::move(current));
        }
        plan.vehicles.push_back(std::move(routes));
    }
    plan.total_length = total;
    plan.residual_demand = state.remaining_total();
    plan.feasible = plan.residual_demand == 0;
    return plan;
}

}  // namespace cmvrp
