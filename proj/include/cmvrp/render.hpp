#pragma once

#include <cstdio>
#include <string>

#include "env.hpp"
#include "instance.hpp"

namespace cmvrp {

// Unit square drawn into a fixed 600x600 viewport with a margin; the legend
// sits on the right.
inline constexpr double kViewSize = 600.0;
inline constexpr double kViewMargin = 30.0;
inline constexpr double kLegendWidth = 220.0;

inline const char* vehicle_color(std::size_t v) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return palette[v % (sizeof palette / sizeof palette[0])];
}

inline std::string svg_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

/// SVG depiction of a plan: depot as a square, customers as circles whose
/// radius grows with demand, one polyline (class "vehicle-<v>") per vehicle
/// that has tours, and a legend with per-vehicle lengths.
inline std::string render_svg(const RoutePlan& plan, const ProblemInstance& instance) {
    const double inner = kViewSize - 2.0 * kViewMargin;
    auto px = [&](const Point& p) { return kViewMargin + p.x * inner; };
    auto py = [&](const Point& p) { return kViewMargin + (1.0 - p.y) * inner; };  // y axis up

    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_number(kViewSize + kLegendWidth) +
         "\" height=\"" + svg_number(kViewSize) + "\" viewBox=\"0 0 " + svg_number(kViewSize + kLegendWidth) + " " +
         svg_number(kViewSize) + "\">\n";
    s += "<title>" + xml_escape(instance.instance_id) + "</title>\n<style>\n";
    for (std::size_t v = 0; v < plan.vehicles.size(); ++v)
        s += ".vehicle-" + std::to_string(v) + " { fill: none; stroke: " + vehicle_color(v) +
             "; stroke-width: 2; }\n";
    s += "</style>\n";
    s += "<rect x=\"" + svg_number(kViewMargin) + "\" y=\"" + svg_number(kViewMargin) + "\" width=\"" +
         svg_number(inner) + "\" height=\"" + svg_number(inner) + "\" fill=\"none\" stroke=\"#cccccc\"/>\n";

    for (std::size_t v = 0; v < plan.vehicles.size(); ++v) {
        std::string points;
        for (const auto& tour : plan.vehicles[v].tours)
            for (int node : tour.nodes) {
                const auto& p = instance.coord(node);
                points += svg_number(px(p)) + "," + svg_number(py(p)) + " ";
            }
        if (points.empty()) continue;
        points.pop_back();
        s += "<polyline class=\"vehicle-" + std::to_string(v) + "\" points=\"" + points + "\"/>\n";
    }

    for (std::size_t i = 0; i < instance.customers.size(); ++i) {
        const auto& c = instance.customers[i];
        s += "<circle class=\"customer\" cx=\"" + svg_number(px(c.coord)) + "\" cy=\"" + svg_number(py(c.coord)) +
             "\" r=\"" + svg_number(3.0 + 1.0 * c.demand) + "\" fill=\"#444444\" fill-opacity=\"0.6\"/>\n";
    }
    const double half = 7.0;
    s += "<rect class=\"depot\" x=\"" + svg_number(px(instance.depot) - half) + "\" y=\"" +
         svg_number(py(instance.depot) - half) + "\" width=\"" + svg_number(2 * half) + "\" height=\"" +
         svg_number(2 * half) + "\" fill=\"#000000\"/>\n";

    const double lx = kViewSize + 10.0;
    double ly = kViewMargin + 10.0;
    s += "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"13\">\n";
    for (std::size_t v = 0; v < plan.vehicles.size(); ++v) {
        double len = 0.0;
        for (const auto& t : plan.vehicles[v].tours) len += tour_length(t.nodes, instance);
        s += "<line x1=\"" + svg_number(lx) + "\" y1=\"" + svg_number(ly) + "\" x2=\"" + svg_number(lx + 24) +
             "\" y2=\"" + svg_number(ly) + "\" stroke=\"" + vehicle_color(v) + "\" stroke-width=\"3\"/>\n";
        s += "<text x=\"" + svg_number(lx + 30) + "\" y=\"" + svg_number(ly + 4) + "\">vehicle " +
             std::to_string(v + 1) + " (cap " + std::to_string(plan.vehicles[v].capacity) + "): " +
             svg_number(len) + "</text>\n";
        ly += 20.0;
    }
    s += "<text x=\"" + svg_number(lx) + "\" y=\"" + svg_number(ly + 10) + "\">total: " +
         svg_number(plan.total_length) + (plan.feasible ? "" : " (infeasible)") + "</text>\n";
    s += "</g>\n</svg>\n";
    return s;
}

}  // namespace cmvrp
