#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "baselines.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "training.hpp"

namespace cmvrp {

struct ResultRow {
    std::string experiment;
    std::string method;
    std::string instance_id;
    double length = 0.0;
    bool feasible = true;
    double wall_ms = 0.0;

    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline const std::string kCsvHeader = "experiment,method,instance_id,length,feasible,wall_ms";

inline std::string csv_line(const ResultRow& r) {
    return r.experiment + "," + r.method + "," + r.instance_id + "," + format_double(r.length) + "," +
           (r.feasible ? "1" : "0") + "," + format_double(r.wall_ms);
}

inline std::string write_csv(const std::vector<ResultRow>& rows) {
    std::string out = kCsvHeader + "\n";
    for (const auto& r : rows) out += csv_line(r) + "\n";
    return out;
}

inline std::vector<ResultRow> read_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw ParseError("csv.header", "expected '" + kCsvHeader + "'");
    std::vector<ResultRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        const auto where = "csv.line" + std::to_string(line_no);
        if (cells.size() != 6) throw ParseError(where, "expected 6 columns");
        ResultRow r;
        r.experiment = cells[0];
        r.method = cells[1];
        r.instance_id = cells[2];
        try {
            r.length = std::stod(cells[3]);
            r.wall_ms = std::stod(cells[5]);
        } catch (const std::exception&) {
            throw ParseError(where, "non-numeric length or wall_ms");
        }
        if (cells[4] != "0" && cells[4] != "1") throw ParseError(where + ".feasible", "expected 0 or 1");
        r.feasible = cells[4] == "1";
        if (r.length < 0.0 || r.wall_ms < 0.0) throw ParseError(where, "negative length or wall time");
        rows.push_back(std::move(r));
    }
    return rows;
}

/// Mean/std of feasible lengths and mean wall time for one method.
struct MethodSummary {
    std::string experiment;
    std::string method;
    int count = 0;       // feasible rows
    int infeasible = 0;  // excluded from the statistics
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
    double mean_seconds = 0.0;
};

inline std::vector<MethodSummary> summarize(const std::vector<ResultRow>& rows) {
    std::map<std::pair<std::string, std::string>, std::vector<const ResultRow*>> groups;
    std::vector<std::pair<std::string, std::string>> order;
    for (const auto& r : rows) {
        auto key = std::make_pair(r.experiment, r.method);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(&r);
    }
    std::vector<MethodSummary> out;
    for (const auto& key : order) {
        const auto& g = groups[key];
        MethodSummary s{key.first, key.second};
        double sum = 0.0, wall = 0.0;
        for (const auto* r : g) {
            wall += r->wall_ms;
            if (!r->feasible) {
                ++s.infeasible;
                continue;
            }
            ++s.count;
            sum += r->length;
        }
        s.mean = s.count ? sum / s.count : 0.0;
        double ss = 0.0;
        for (const auto* r : g)
            if (r->feasible) ss += (r->length - s.mean) * (r->length - s.mean);
        s.stddev = s.count > 1 ? std::sqrt(ss / (s.count - 1)) : 0.0;
        s.mean_seconds = wall / static_cast<double>(g.size()) / 1000.0;
        out.push_back(s);
    }
    return out;
}

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string summary_table(const std::vector<MethodSummary>& summaries) {
    std::string out = "| experiment | method | n | infeasible | mean | std | time (s) |\n";
    out += "|---|---|---|---|---|---|---|\n";
    for (const auto& s : summaries)
        out += "| " + s.experiment + " | " + s.method + " | " + std::to_string(s.count) + " | " +
               std::to_string(s.infeasible) + " | " + fixed(s.mean, 3) + " | " + fixed(s.stddev, 3) + " | " +
               fixed(s.mean_seconds, 3) + " |\n";
    return out;
}

/// Merges result tables: per-method length table (methods x experiments,
/// mean and std) and run-time table (experiments x methods). The same
/// (experiment, method) pair in two inputs is refused.
inline std::string compare_tables(const std::vector<std::vector<ResultRow>>& inputs) {
    std::vector<MethodSummary> all;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& rows : inputs)
        for (auto& s : summarize(rows)) {
            if (!seen.insert({s.experiment, s.method}).second)
                throw ValidationError("duplicate results for " + s.experiment + "/" + s.method);
            all.push_back(s);
        }
    std::vector<std::string> experiments, methods;
    for (const auto& s : all) {
        if (std::find(experiments.begin(), experiments.end(), s.experiment) == experiments.end()) experiments.push_back(s.experiment);
        if (std::find(methods.begin(), methods.end(), s.method) == methods.end()) methods.push_back(s.method);
    }
    auto find = [&](const std::string& e, const std::string& m) -> const MethodSummary* {
        for (const auto& s : all)
            if (s.experiment == e && s.method == m) return &s;
        return nullptr;
    };
    std::string out = "Average tour length\n\n| method |";
    for (const auto& e : experiments) out += " " + e + " mean | " + e + " std |";
    out += "\n|---|";
    for (std::size_t k = 0; k < experiments.size(); ++k) out += "---|---|";
    out += "\n";
    for (const auto& m : methods) {
        out += "| " + m + " |";
        for (const auto& e : experiments) {
            const auto* s = find(e, m);
            out += s ? " " + fixed(s->mean, 3) + " | " + fixed(s->stddev, 3) + " |" : " - | - |";
        }
        out += "\n";
    }
    out += "\nAverage run time (s)\n\n| experiment |";
    for (const auto& m : methods) out += " " + m + " |";
    out += "\n|---|";
    for (std::size_t k = 0; k < methods.size(); ++k) out += "---|";
    out += "\n";
    for (const auto& e : experiments) {
        out += "| " + e + " |";
        for (const auto& m : methods) {
            const auto* s = find(e, m);
            out += s ? " " + fixed(s->mean_seconds, 3) + " |" : " - |";
        }
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Running methods

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m{"drl-greedy", "cw", "sweep", "random", "exact"};
    return m;
}

struct EvalOptions {
    std::string experiment;
    std::uint64_t seed = 0;  // random policy
    int round_cap = 0;
    int jobs = 1;
    bool record_timing = true;
};

/// Plans of one baseline method for a single instance.
inline RoutePlan solve_baseline(const std::string& method, const ProblemInstance& instance, std::uint64_t seed,
                                int round_cap = 0) {
    if (method == "cw") return clarke_wright(instance);
    if (method == "sweep") return sweep(instance);
    if (method == "random") return random_policy(instance, seed, round_cap);
    if (method == "exact") return brute_force_optimal(instance);
    throw ValidationError("unknown method '" + method + "'");
}

/// Runs every method over the instances. Rows are ordered method-major, then
/// by instance index, independent of `jobs`.
inline std::vector<ResultRow> evaluate_methods(const std::vector<std::string>& methods,
                                               std::span<const ProblemInstance> instances,
                                               const std::vector<Actor>* actors, const EvalOptions& options) {
    if (methods.empty()) throw ValidationError("no methods requested");
    for (const auto& m : methods) {
        if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
            throw ValidationError("unknown method '" + m + "'");
        if (m == "drl-greedy" && !actors) throw ValidationError("drl-greedy needs a checkpoint");
    }
    using clock = std::chrono::steady_clock;
    std::vector<ResultRow> rows;
    for (const auto& method : methods) {
        std::vector<ResultRow> part(instances.size());
        auto fill = [&](std::size_t k, const RoutePlan& plan, double ms) {
            part[k] = {options.experiment, method, instances[k].instance_id, plan.total_length, plan.feasible,
                       options.record_timing ? ms : 0.0};
        };
        if (method == "drl-greedy") {
            const std::size_t chunks = (instances.size() + kShardSize - 1) / kShardSize;
            parallel_for(chunks, options.jobs, [&](std::size_t c) {
                const std::size_t begin = c * kShardSize;
                const std::size_t end = std::min(instances.size(), begin + kShardSize);
                const auto t0 = clock::now();
                RolloutOptions opt;
                opt.mode = DecodeMode::Greedy;
                opt.round_cap = options.round_cap;
                auto batch = rollout_batch(instances.subspan(begin, end - begin), *actors, opt);
                const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count() /
                                  static_cast<double>(end - begin);
                for (std::size_t k = begin; k < end; ++k) fill(k, batch.trajectories[k - begin].plan, ms);
            });
        } else {
            parallel_for(instances.size(), options.jobs, [&](std::size_t k) {
                const auto t0 = clock::now();
                auto plan = solve_baseline(method, instances[k], options.seed, options.round_cap);
                fill(k, plan, std::chrono::duration<double, std::milli>(clock::now() - t0).count());
            });
        }
        rows.insert(rows.end(), part.begin(), part.end());
    }
    return rows;
}

}  // namespace cmvrp
