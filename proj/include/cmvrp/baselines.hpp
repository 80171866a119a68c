#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "config.hpp"
#include "env.hpp"
#include "errors.hpp"
#include "instance.hpp"
#include "rng.hpp"

namespace cmvrp {

// ---------------------------------------------------------------------------
// Shared pieces

/// s(i, j) = d(0, i) + d(0, j) - d(i, j): length saved by serving i and j on
/// one depot-anchored route instead of two.
inline double savings_value(const ProblemInstance& instance, int i, int j) {
    return instance.dist(kDepot, i) + instance.dist(kDepot, j) - instance.dist(i, j);
}

/// First-improvement 2-opt on a closed depot tour. Endpoints stay fixed.
inline std::vector<int> two_opt(std::vector<int> tour, const ProblemInstance& instance) {
    if (tour.size() < 2 || tour.front() != kDepot || tour.back() != kDepot)
        throw ContractViolation("two_opt expects a tour from and to the depot");
    const std::size_t n = tour.size();
    bool improved = true;
    while (improved) {
        improved = false;
        for (std::size_t i = 1; i + 1 < n && !improved; ++i) {
            for (std::size_t j = i + 1; j + 1 < n; ++j) {
                const int a = tour[i - 1], b = tour[i], c = tour[j], d = tour[j + 1];
                const double delta = instance.dist(a, c) + instance.dist(b, d) - instance.dist(a, b) - instance.dist(c, d);
                if (delta < -1e-12) {
                    std::reverse(tour.begin() + static_cast<std::ptrdiff_t>(i), tour.begin() + static_cast<std::ptrdiff_t>(j) + 1);
                    improved = true;
                    break;
                }
            }
        }
    }
    return tour;
}

/// A tour slot: the k-th tour (k < 2) of a vehicle. Slots are consumed
/// largest vehicle first.
struct TourSlot {
    int vehicle = 0;
    int capacity = 0;
};

inline std::vector<TourSlot> tour_slots(const ProblemInstance& instance, int tours_per_vehicle = 2) {
    std::vector<int> order(static_cast<std::size_t>(instance.num_vehicles()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return instance.vehicles[static_cast<std::size_t>(a)].capacity > instance.vehicles[static_cast<std::size_t>(b)].capacity;
    });
    std::vector<TourSlot> slots;
    for (int v : order)
        for (int k = 0; k < tours_per_vehicle; ++k) slots.push_back({v, instance.vehicles[static_cast<std::size_t>(v)].capacity});
    return slots;
}

struct AssignedTour {
    int vehicle = 0;
    std::vector<int> customers;  // visit order, depot excluded
};

/// Builds a full-delivery plan from tours assigned to vehicles, keeping the
/// assignment order per vehicle.
inline RoutePlan assemble_plan(const ProblemInstance& instance, const std::vector<AssignedTour>& tours, bool overflow) {
    RoutePlan plan;
    for (const auto& v : instance.vehicles) plan.vehicles.push_back({v.capacity, {}});
    for (const auto& t : tours) {
        if (t.customers.empty()) continue;
        Tour tour{{kDepot}, {0}};
        for (int c : t.customers) {
            tour.nodes.push_back(c);
            tour.delivered.push_back(instance.demand(c));
        }
        tour.nodes.push_back(kDepot);
        tour.delivered.push_back(0);
        plan.vehicles[static_cast<std::size_t>(t.vehicle)].tours.push_back(std::move(tour));
    }
    plan.total_length = plan_length(plan, instance);
    plan.slot_overflow = overflow;
    return plan;
}

inline std::vector<int> closed(const std::vector<int>& customers) {
    std::vector<int> t{kDepot};
    t.insert(t.end(), customers.begin(), customers.end());
    t.push_back(kDepot);
    return t;
}

inline std::vector<int> interior(const std::vector<int>& tour) { return {tour.begin() + 1, tour.end() - 1}; }

inline int route_demand(const ProblemInstance& instance, const std::vector<int>& customers) {
    int s = 0;
    for (int c : customers) s += instance.demand(c);
    return s;
}

// ---------------------------------------------------------------------------
// Clarke-Wright savings

/// Parallel savings merge over `customers` with route capacity `capacity`.
/// Starts from one out-and-back route per customer and merges route ends in
/// decreasing order of positive savings (ties by customer indices).
inline std::vector<std::vector<int>> savings_routes(const ProblemInstance& instance, const std::vector<int>& customers,
                                                    int capacity) {
    struct Route {
        std::vector<int> nodes;
        int load = 0;
        bool alive = true;
    };
    std::vector<Route> routes;
    std::vector<int> route_of(static_cast<std::size_t>(instance.num_nodes()), -1);
    for (int c : customers) {
        route_of[static_cast<std::size_t>(c)] = static_cast<int>(routes.size());
        routes.push_back({{c}, instance.demand(c), true});
    }
    struct Saving {
        int i, j;
        double value;
    };
    std::vector<Saving> savings;
    for (std::size_t a = 0; a < customers.size(); ++a)
        for (std::size_t b = a + 1; b < customers.size(); ++b) {
            const int i = std::min(customers[a], customers[b]);
            const int j = std::max(customers[a], customers[b]);
            const double s = savings_value(instance, i, j);
            if (s > 0.0) savings.push_back({i, j, s});
        }
    std::sort(savings.begin(), savings.end(), [](const Saving& x, const Saving& y) {
        if (x.value != y.value) return x.value > y.value;
        if (x.i != y.i) return x.i < y.i;
        return x.j < y.j;
    });
    for (const auto& s : savings) {
        const int ri = route_of[static_cast<std::size_t>(s.i)];
        const int rj = route_of[static_cast<std::size_t>(s.j)];
        if (ri == rj) continue;
        auto& A = routes[static_cast<std::size_t>(ri)];
        auto& B = routes[static_cast<std::size_t>(rj)];
        if (A.load + B.load > capacity) continue;
        const bool i_front = A.nodes.front() == s.i, i_back = A.nodes.back() == s.i;
        const bool j_front = B.nodes.front() == s.j, j_back = B.nodes.back() == s.j;
        if (!(i_front || i_back) || !(j_front || j_back)) continue;
        // Orient as [... i] + [j ...].
        if (!i_back) std::reverse(A.nodes.begin(), A.nodes.end());
        if (!j_front) std::reverse(B.nodes.begin(), B.nodes.end());
        A.nodes.insert(A.nodes.end(), B.nodes.begin(), B.nodes.end());
        A.load += B.load;
        B.alive = false;
        for (int c : B.nodes) route_of[static_cast<std::size_t>(c)] = ri;
        B.nodes.clear();
    }
    std::vector<std::vector<int>> out;
    for (auto& r : routes)
        if (r.alive) out.push_back(std::move(r.nodes));
    return out;
}

/// Clarke-Wright with successive approximation: tour slots are filled one at
/// a time (largest vehicle first, two tours per vehicle). For each slot the
/// savings algorithm runs over the still unserved customers with that slot's
/// capacity and the route with the largest demand is kept (ties: shorter,
/// then lowest smallest index). Customers left when slots run out are routed
/// on extra tours of the largest vehicle and the plan is flagged. Every tour
/// is finished with 2-opt.
inline RoutePlan clarke_wright(const ProblemInstance& instance) {
    const auto slots = tour_slots(instance);
    std::vector<int> unserved(static_cast<std::size_t>(instance.num_customers()));
    std::iota(unserved.begin(), unserved.end(), 1);
    std::vector<AssignedTour> tours;
    std::size_t si = 0;
    while (!unserved.empty() && si < slots.size()) {
        auto routes = savings_routes(instance, unserved, slots[si].capacity);
        std::size_t best = 0;
        for (std::size_t r = 1; r < routes.size(); ++r) {
            const int dr = route_demand(instance, routes[r]), db = route_demand(instance, routes[best]);
            if (dr != db) {
                if (dr > db) best = r;
                continue;
            }
            const double lr = tour_length(closed(routes[r]), instance), lb = tour_length(closed(routes[best]), instance);
            if (lr != lb) {
                if (lr < lb) best = r;
                continue;
            }
            if (*std::min_element(routes[r].begin(), routes[r].end()) < *std::min_element(routes[best].begin(), routes[best].end()))
                best = r;
        }
        tours.push_back({slots[si].vehicle, routes[best]});
        std::erase_if(unserved, [&](int c) { return std::find(routes[best].begin(), routes[best].end(), c) != routes[best].end(); });
        ++si;
    }
    const bool overflow = !unserved.empty();
    if (overflow)
        for (auto& r : savings_routes(instance, unserved, slots.front().capacity)) tours.push_back({slots.front().vehicle, std::move(r)});
    for (auto& t : tours) t.customers = interior(two_opt(closed(t.customers), instance));
    return assemble_plan(instance, tours, overflow);
}

// ---------------------------------------------------------------------------
// Sweep

inline std::vector<int> nearest_neighbor_order(const ProblemInstance& instance, std::vector<int> customers) {
    std::vector<int> order;
    int at = kDepot;
    while (!customers.empty()) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < customers.size(); ++k) {
            const double dk = instance.dist(at, customers[k]), db = instance.dist(at, customers[best]);
            if (dk < db || (dk == db && customers[k] < customers[best])) best = k;
        }
        at = customers[best];
        order.push_back(at);
        customers.erase(customers.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return order;
}

/// Customers in sweep order: counterclockwise polar angle about the depot,
/// ties by distance then index.
inline std::vector<int> sweep_order(const ProblemInstance& instance) {
    std::vector<int> order(static_cast<std::size_t>(instance.num_customers()));
    std::iota(order.begin(), order.end(), 1);
    std::vector<double> angle(static_cast<std::size_t>(instance.num_nodes()));
    for (int c : order) angle[static_cast<std::size_t>(c)] = polar_angle(instance.depot, instance.coord(c));
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double aa = angle[static_cast<std::size_t>(a)], ab = angle[static_cast<std::size_t>(b)];
        if (aa != ab) return aa < ab;
        const double ra = instance.dist(kDepot, a), rb = instance.dist(kDepot, b);
        if (ra != rb) return ra < rb;
        return a < b;
    });
    return order;
}

/// Sweep clustering: walk customers in sweep order, closing the current
/// cluster when the next customer would exceed the active slot's capacity.
/// Slots follow the same largest-first, two-tours-per-vehicle order as
/// clarke_wright; clusters beyond the last slot go to the largest vehicle
/// (flagged). Each cluster is routed by nearest neighbour, then 2-opt.
inline RoutePlan sweep(const ProblemInstance& instance) {
    const auto slots = tour_slots(instance);
    std::vector<std::vector<int>> clusters;
    std::vector<int> current;
    int load = 0;
    auto active_capacity = [&]() {
        return clusters.size() < slots.size() ? slots[clusters.size()].capacity : slots.front().capacity;
    };
    for (int c : sweep_order(instance)) {
        const int d = instance.demand(c);
        if (!current.empty() && load + d > active_capacity()) {
            clusters.push_back(std::move(current));
            current.clear();
            load = 0;
        }
        current.push_back(c);
        load += d;
    }
    if (!current.empty()) clusters.push_back(std::move(current));

    std::vector<AssignedTour> tours;
    for (std::size_t k = 0; k < clusters.size(); ++k) {
        const int vehicle = k < slots.size() ? slots[k].vehicle : slots.front().vehicle;
        auto route = two_opt(closed(nearest_neighbor_order(instance, clusters[k])), instance);
        tours.push_back({vehicle, interior(route)});
    }
    return assemble_plan(instance, tours, clusters.size() > slots.size());
}

// ---------------------------------------------------------------------------
// Random play

/// Uniform choice among feasible actions at every step of the environment.
inline RoutePlan random_policy(const ProblemInstance& instance, std::uint64_t seed, int round_cap = 0) {
    Rng rng(seed, fnv1a(instance.instance_id));
    EnvState s = reset(instance, round_cap);
    while (!is_terminal(s)) {
        const auto mask = feasible_actions(s);
        std::vector<int> options;
        for (std::size_t i = 0; i < mask.feasible.size(); ++i)
            if (mask.feasible[i]) options.push_back(static_cast<int>(i));
        const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1));
        apply_action(s, options[pick]);
    }
    return finalize(s);
}

// ---------------------------------------------------------------------------
// Exact search

inline constexpr int kExactMaxCustomers = 7;
inline constexpr int kExactMaxVehicles = 3;

/// Minimum-length plan with full single-visit deliveries and at most two
/// tours per vehicle, found by exhaustive assignment of customers to tour
/// slots with exact subset tours (Held-Karp) and pruning on the running
/// length. When no assignment fits in two tours per vehicle the largest
/// vehicle may take extra tours and the plan is flagged, as the heuristics do.
inline RoutePlan brute_force_optimal(const ProblemInstance& instance) {
    const int m = instance.num_customers();
    if (m > kExactMaxCustomers || instance.num_vehicles() > kExactMaxVehicles)
        throw ValidationError("exact search is limited to " + std::to_string(kExactMaxCustomers) + " customers and " +
                              std::to_string(kExactMaxVehicles) + " vehicles");
    const std::size_t subsets = std::size_t{1} << m;
    constexpr double inf = std::numeric_limits<double>::infinity();

    // dp[mask][last]: shortest depot -> ... -> last path covering mask.
    std::vector<double> dp(subsets * static_cast<std::size_t>(m), inf);
    std::vector<int> parent(subsets * static_cast<std::size_t>(m), -1);
    auto at = [m](std::size_t mask, int last) { return mask * static_cast<std::size_t>(m) + static_cast<std::size_t>(last); };
    for (int c = 0; c < m; ++c) dp[at(std::size_t{1} << c, c)] = instance.dist(kDepot, c + 1);
    for (std::size_t mask = 1; mask < subsets; ++mask)
        for (int last = 0; last < m; ++last) {
            if (!(mask >> last & 1) || dp[at(mask, last)] == inf) continue;
            for (int nxt = 0; nxt < m; ++nxt) {
                if (mask >> nxt & 1) continue;
                const std::size_t nm = mask | (std::size_t{1} << nxt);
                const double cand = dp[at(mask, last)] + instance.dist(last + 1, nxt + 1);
                if (cand < dp[at(nm, nxt)]) {
                    dp[at(nm, nxt)] = cand;
                    parent[at(nm, nxt)] = last;
                }
            }
        }
    std::vector<double> tsp(subsets, 0.0);
    std::vector<int> tsp_last(subsets, -1);
    std::vector<int> demand(subsets, 0);
    for (std::size_t mask = 1; mask < subsets; ++mask) {
        tsp[mask] = inf;
        for (int last = 0; last < m; ++last)
            if (mask >> last & 1) {
                const double c = dp[at(mask, last)] + instance.dist(last + 1, kDepot);
                if (c < tsp[mask]) {
                    tsp[mask] = c;
                    tsp_last[mask] = last;
                }
            }
        for (int c = 0; c < m; ++c)
            if (mask >> c & 1) demand[mask] += instance.customers[static_cast<std::size_t>(c)].demand;
    }
    auto tour_of = [&](std::size_t mask) {
        std::vector<int> rev;
        int last = tsp_last[mask];
        std::size_t cur = mask;
        while (last >= 0) {
            rev.push_back(last + 1);
            const int prev = parent[at(cur, last)];
            cur &= ~(std::size_t{1} << last);
            last = prev;
        }
        return std::vector<int>(rev.rbegin(), rev.rend());
    };

    auto search = [&](const std::vector<TourSlot>& slots, std::vector<std::size_t>& best_masks) {
        std::vector<std::size_t> masks(slots.size(), 0);
        double best = inf;
        auto current = [&]() {
            double s = 0.0;
            for (auto mk : masks) s += tsp[mk];
            return s;
        };
        std::function<void(int)> dfs = [&](int c) {
            const double bound = current();
            if (bound >= best) return;
            if (c == m) {
                best = bound;
                best_masks = masks;
                return;
            }
            const int d = instance.customers[static_cast<std::size_t>(c)].demand;
            for (std::size_t s = 0; s < slots.size(); ++s) {
                if (demand[masks[s]] + d > slots[s].capacity) continue;
                if (masks[s] == 0) {
                    // Empty slots of equal capacity are interchangeable: use the first one.
                    bool earlier_empty = false;
                    for (std::size_t e = 0; e < s; ++e)
                        if (masks[e] == 0 && slots[e].capacity == slots[s].capacity) earlier_empty = true;
                    if (earlier_empty) continue;
                }
                masks[s] |= std::size_t{1} << c;
                dfs(c + 1);
                masks[s] &= ~(std::size_t{1} << c);
            }
        };
        dfs(0);
        return best;
    };

    auto slots = tour_slots(instance);
    std::vector<std::size_t> best_masks;
    bool overflow = false;
    if (search(slots, best_masks) == inf) {
        overflow = true;
        for (int extra = 0; extra < m; ++extra) slots.push_back(slots.front());
        search(slots, best_masks);
    }
    std::vector<AssignedTour> tours;
    for (std::size_t s = 0; s < slots.size(); ++s)
        if (best_masks[s] != 0) tours.push_back({slots[s].vehicle, tour_of(best_masks[s])});
    auto plan = assemble_plan(instance, tours, overflow);
    if (overflow) {
        // Flag only if the largest vehicle actually needed more than two tours.
        plan.slot_overflow = plan.vehicles[static_cast<std::size_t>(slots.front().vehicle)].tours.size() > 2;
    }
    return plan;
}

}  // namespace cmvrp
