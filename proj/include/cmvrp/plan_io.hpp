#pragma once

#include <string>

#include <json.hpp>

#include "env.hpp"
#include "instance.hpp"

namespace cmvrp {

/// A plan together with the instance it routes, as stored in plan documents.
struct PlanDocument {
    std::string method;
    ProblemInstance instance;
    RoutePlan plan;
};

inline std::string write_plan(const PlanDocument& doc) {
    nlohmann::ordered_json out;
    out["method"] = doc.method;
    out["instance"] = instance_to_json(doc.instance);
    out["total_length"] = doc.plan.total_length;
    out["feasible"] = doc.plan.feasible;
    out["residual_demand"] = doc.plan.residual_demand;
    out["slot_overflow"] = doc.plan.slot_overflow;
    auto vehicles = nlohmann::ordered_json::array();
    for (const auto& v : doc.plan.vehicles) {
        nlohmann::ordered_json item;
        item["capacity"] = v.capacity;
        double len = 0.0;
        for (const auto& t : v.tours) len += tour_length(t.nodes, doc.instance);
        item["length"] = len;
        auto tours = nlohmann::ordered_json::array();
        for (const auto& t : v.tours) tours.push_back({{"nodes", t.nodes}, {"delivered", t.delivered}});
        item["tours"] = std::move(tours);
        vehicles.push_back(std::move(item));
    }
    out["vehicles"] = std::move(vehicles);
    return to_json_text(out);
}

inline PlanDocument read_plan(const std::string& text) {
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("document", e.what());
    }
    PlanDocument out;
    try {
        const auto& method = detail::field(doc, "method", "");
        if (!method.is_string()) throw ParseError("method", "expected a string");
        out.method = method.get<std::string>();
        out.instance = instance_from_json(detail::field(doc, "instance", ""));
        const auto& total = detail::field(doc, "total_length", "");
        if (!total.is_number()) throw ParseError("total_length", "expected a number");
        out.plan.total_length = total.get<double>();
        out.plan.feasible = detail::field(doc, "feasible", "").get<bool>();
        out.plan.residual_demand = detail::read_int(detail::field(doc, "residual_demand", ""), "residual_demand");
        out.plan.slot_overflow = detail::field(doc, "slot_overflow", "").get<bool>();
        const auto& vehicles = detail::field(doc, "vehicles", "");
        if (!vehicles.is_array()) throw ParseError("vehicles", "expected an array");
        for (std::size_t j = 0; j < vehicles.size(); ++j) {
            const auto path = "vehicles[" + std::to_string(j) + "]";
            VehicleRoutes routes;
            routes.capacity = detail::read_int(detail::field(vehicles[j], "capacity", path), path + ".capacity");
            const auto& tours = detail::field(vehicles[j], "tours", path);
            if (!tours.is_array()) throw ParseError(path + ".tours", "expected an array");
            for (std::size_t t = 0; t < tours.size(); ++t) {
                const auto tpath = path + ".tours[" + std::to_string(t) + "]";
                Tour tour;
                tour.nodes = detail::field(tours[t], "nodes", tpath).get<std::vector<int>>();
                tour.delivered = detail::field(tours[t], "delivered", tpath).get<std::vector<int>>();
                for (int n : tour.nodes)
                    if (n < 0 || n > out.instance.num_customers()) throw ParseError(tpath + ".nodes", "node out of range");
                if (tour.nodes.size() != tour.delivered.size())
                    throw ParseError(tpath + ".delivered", "length differs from nodes");
                routes.tours.push_back(std::move(tour));
            }
            out.plan.vehicles.push_back(std::move(routes));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("document", e.what());
    }
    if (static_cast<int>(out.plan.vehicles.size()) != out.instance.num_vehicles())
        throw ParseError("vehicles", "count differs from instance");
    return out;
}

}  // namespace cmvrp
