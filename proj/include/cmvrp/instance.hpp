#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "json_text.hpp"
#include "rng.hpp"

namespace cmvrp {

inline constexpr int kMinDemand = 1;
inline constexpr int kMaxDemand = 9;
inline constexpr int kDepot = 0;

struct Customer {
    Point coord;
    int demand = 0;

    friend bool operator==(const Customer&, const Customer&) = default;
};

struct Vehicle {
    int capacity = 0;
    Point position;

    friend bool operator==(const Vehicle&, const Vehicle&) = default;
};

/// Static description of one routing problem. Node 0 is the depot,
/// nodes 1..M are the customers in order.
struct ProblemInstance {
    std::string instance_id;
    Point depot;
    std::vector<Customer> customers;
    std::vector<Vehicle> vehicles;

    int num_customers() const noexcept { return static_cast<int>(customers.size()); }
    int num_vehicles() const noexcept { return static_cast<int>(vehicles.size()); }
    int num_nodes() const noexcept { return num_customers() + 1; }

    const Point& coord(int node) const { return node == kDepot ? depot : customers[static_cast<std::size_t>(node - 1)].coord; }
    int demand(int node) const { return node == kDepot ? 0 : customers[static_cast<std::size_t>(node - 1)].demand; }
    double dist(int a, int b) const { return distance(coord(a), coord(b)); }

    int max_capacity() const {
        int c = 0;
        for (const auto& v : vehicles) c = std::max(c, v.capacity);
        return c;
    }

    friend bool operator==(const ProblemInstance&, const ProblemInstance&) = default;
};

inline int total_demand(const ProblemInstance& instance) {
    return std::accumulate(instance.customers.begin(), instance.customers.end(), 0,
                           [](int acc, const Customer& c) { return acc + c.demand; });
}

namespace detail {

inline bool in_unit_square(const Point& p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; }

}  // namespace detail

inline void validate(const ProblemInstance& instance) {
    if (instance.customers.empty()) throw ValidationError("instance " + instance.instance_id + ": no customers");
    if (instance.vehicles.empty()) throw ValidationError("instance " + instance.instance_id + ": no vehicles");
    if (!detail::in_unit_square(instance.depot)) throw ParseError("depot", "coordinate outside [0,1]^2");
    int min_capacity = instance.vehicles.front().capacity;
    for (std::size_t j = 0; j < instance.vehicles.size(); ++j) {
        const auto& v = instance.vehicles[j];
        const auto field = "vehicles[" + std::to_string(j) + "]";
        if (v.capacity <= 0) throw ParseError(field + ".capacity", "must be positive");
        if (!(v.position == instance.depot)) throw ParseError(field + ".position", "vehicles start at the depot");
        min_capacity = std::min(min_capacity, v.capacity);
    }
    for (std::size_t i = 0; i < instance.customers.size(); ++i) {
        const auto& c = instance.customers[i];
        const auto field = "customers[" + std::to_string(i) + "]";
        if (!detail::in_unit_square(c.coord)) throw ParseError(field + ".coord", "coordinate outside [0,1]^2");
        if (c.demand < kMinDemand || c.demand > kMaxDemand)
            throw ParseError(field + ".demand", "value " + std::to_string(c.demand) + " outside [1,9]");
        if (c.demand >= min_capacity)
            throw ParseError(field + ".demand", "must be smaller than every vehicle capacity");
    }
}

/// One row of the experiment table: fleet, instance size and test-set seed.
struct ExperimentConfig {
    std::string name;
    int num_customers = 0;
    int num_vehicles = 0;
    std::vector<int> capacities;
    int test_set_size = 1000;
    std::uint64_t seed = 0;

    void validate() const {
        if (name.empty()) throw ParseError("name", "must not be empty");
        if (num_customers < 1) throw ParseError("num_customers", "must be >= 1");
        if (num_vehicles < 1) throw ParseError("num_vehicles", "must be >= 1");
        if (static_cast<int>(capacities.size()) != num_vehicles)
            throw ParseError("capacities", "expected " + std::to_string(num_vehicles) + " values, got " +
                                               std::to_string(capacities.size()));
        for (int c : capacities)
            if (c < kMaxDemand + 1) throw ParseError("capacities", "capacity " + std::to_string(c) + " must be >= 10");
        if (test_set_size < 1) throw ParseError("test_set_size", "must be >= 1");
    }

    // Identity of the problem family a policy is trained for; seeds and set sizes are excluded.
    std::string hash() const {
        std::string key = name + "|" + std::to_string(num_customers) + "|" + std::to_string(num_vehicles);
        for (int c : capacities) key += "|" + std::to_string(c);
        return to_hex(fnv1a(key));
    }

    static ExperimentConfig from_doc(const KeyValueDoc& doc) {
        ExperimentConfig cfg;
        cfg.name = doc.get_string("name");
        cfg.num_customers = static_cast<int>(doc.get_int("num_customers"));
        cfg.num_vehicles = static_cast<int>(doc.get_int("num_vehicles"));
        for (auto c : doc.get_int_list("capacities")) cfg.capacities.push_back(static_cast<int>(c));
        if (doc.has("test_set_size")) cfg.test_set_size = static_cast<int>(doc.get_int("test_set_size"));
        if (doc.has("seed")) cfg.seed = static_cast<std::uint64_t>(doc.get_int("seed"));
        doc.require_consumed();
        cfg.validate();
        return cfg;
    }

    static ExperimentConfig load(const std::string& path) { return from_doc(KeyValueDoc::load(path)); }

    std::string to_text() const {
        std::string caps;
        for (std::size_t j = 0; j < capacities.size(); ++j) caps += (j ? ", " : "") + std::to_string(capacities[j]);
        return "name = " + name + "\nnum_customers = " + std::to_string(num_customers) +
               "\nnum_vehicles = " + std::to_string(num_vehicles) + "\ncapacities = " + caps +
               "\ntest_set_size = " + std::to_string(test_set_size) + "\nseed = " + std::to_string(seed) + "\n";
    }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// The four fleets of the experiment table.
inline ExperimentConfig vrp10_config() { return {"VRP10", 10, 3, {10, 15, 20}, 1000, 1}; }
inline ExperimentConfig vrp20_config() { return {"VRP20", 20, 3, {20, 30, 35}, 1000, 2}; }
inline ExperimentConfig vrp50_config() { return {"VRP50", 50, 3, {60, 70, 80}, 1000, 3}; }
inline ExperimentConfig vrp80_config() { return {"VRP80", 80, 3, {80, 100, 120}, 1000, 4}; }

inline std::string instance_name(const std::string& experiment, std::uint64_t stream_index) {
    auto digits = std::to_string(stream_index);
    if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
    return experiment + "-" + digits;
}

/// Instance `stream_index` of the family described by `config`. Depot and
/// customer coordinates are uniform on the unit square, demands uniform on
/// {1..9}; every vehicle starts at the depot.
inline ProblemInstance generate_instance(const ExperimentConfig& config, std::uint64_t stream_index) {
    config.validate();
    Rng rng(config.seed, stream_index);
    ProblemInstance inst;
    inst.instance_id = instance_name(config.name, stream_index);
    inst.depot.x = rng.uniform();
    inst.depot.y = rng.uniform();
    inst.customers.resize(static_cast<std::size_t>(config.num_customers));
    for (auto& c : inst.customers) {
        c.coord.x = rng.uniform();
        c.coord.y = rng.uniform();
        c.demand = static_cast<int>(rng.uniform_int(kMinDemand, kMaxDemand));
    }
    for (int cap : config.capacities) inst.vehicles.push_back({cap, inst.depot});
    return inst;
}

inline std::vector<ProblemInstance> generate_test_set(const ExperimentConfig& config) {
    config.validate();
    std::vector<ProblemInstance> out;
    out.reserve(static_cast<std::size_t>(config.test_set_size));
    for (int i = 0; i < config.test_set_size; ++i) out.push_back(generate_instance(config, static_cast<std::uint64_t>(i)));
    return out;
}

// ---------------------------------------------------------------------------
// Instance documents

inline nlohmann::ordered_json instance_to_json(const ProblemInstance& instance) {
    nlohmann::ordered_json doc;
    doc["instance_id"] = instance.instance_id;
    doc["depot"] = {instance.depot.x, instance.depot.y};
    auto customers = nlohmann::ordered_json::array();
    for (const auto& c : instance.customers) {
        nlohmann::ordered_json item;
        item["coord"] = {c.coord.x, c.coord.y};
        item["demand"] = c.demand;
        customers.push_back(std::move(item));
    }
    doc["customers"] = std::move(customers);
    auto vehicles = nlohmann::ordered_json::array();
    for (const auto& v : instance.vehicles) {
        nlohmann::ordered_json item;
        item["capacity"] = v.capacity;
        vehicles.push_back(std::move(item));
    }
    doc["vehicles"] = std::move(vehicles);
    return doc;
}

namespace detail {

inline const nlohmann::ordered_json& field(const nlohmann::ordered_json& obj, const std::string& key,
                                           const std::string& path) {
    if (!obj.is_object()) throw ParseError(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path.empty() ? key : path + "." + key, "missing field");
    return *it;
}

inline Point read_point(const nlohmann::ordered_json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ParseError(path, "expected [x, y]");
    return {v[0].get<double>(), v[1].get<double>()};
}

inline int read_int(const nlohmann::ordered_json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ParseError(path, "expected an integer");
    return v.get<int>();
}

}  // namespace detail

inline ProblemInstance instance_from_json(const nlohmann::ordered_json& doc) {
    ProblemInstance inst;
    const auto& id = detail::field(doc, "instance_id", "");
    if (!id.is_string()) throw ParseError("instance_id", "expected a string");
    inst.instance_id = id.get<std::string>();
    inst.depot = detail::read_point(detail::field(doc, "depot", ""), "depot");
    const auto& customers = detail::field(doc, "customers", "");
    if (!customers.is_array()) throw ParseError("customers", "expected an array");
    for (std::size_t i = 0; i < customers.size(); ++i) {
        const auto path = "customers[" + std::to_string(i) + "]";
        Customer c;
        c.coord = detail::read_point(detail::field(customers[i], "coord", path), path + ".coord");
        c.demand = detail::read_int(detail::field(customers[i], "demand", path), path + ".demand");
        inst.customers.push_back(c);
    }
    const auto& vehicles = detail::field(doc, "vehicles", "");
    if (!vehicles.is_array()) throw ParseError("vehicles", "expected an array");
    for (std::size_t j = 0; j < vehicles.size(); ++j) {
        const auto path = "vehicles[" + std::to_string(j) + "]";
        inst.vehicles.push_back({detail::read_int(detail::field(vehicles[j], "capacity", path), path + ".capacity"),
                                 inst.depot});
    }
    if (inst.customers.empty()) throw ParseError("customers", "at least one customer required");
    if (inst.vehicles.empty()) throw ParseError("vehicles", "at least one vehicle required");
    validate(inst);
    return inst;
}

inline std::string write_instance(const ProblemInstance& instance) { return to_json_text(instance_to_json(instance)); }

inline ProblemInstance read_instance(const std::string& text) {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("document", e.what());
    }
    return instance_from_json(doc);
}

}  // namespace cmvrp
