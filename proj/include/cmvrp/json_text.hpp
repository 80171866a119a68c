#pragma once

#include <cstdio>
#include <string>

#include <json.hpp>

namespace cmvrp {

/// Pretty JSON with every floating-point number printed to 17 significant
/// digits, so documents are canonical and re-read bit-exactly.
inline void dump_json(const nlohmann::ordered_json& v, std::string& out, int indent = 0) {
    const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
    const std::string close(static_cast<std::size_t>(indent), ' ');
    if (v.is_number_float()) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
        out += buf;
    } else if (v.is_object()) {
        if (v.empty()) {
            out += "{}";
            return;
        }
        out += "{\n";
        bool first = true;
        for (const auto& [key, item] : v.items()) {
            if (!first) out += ",\n";
            first = false;
            out += pad + nlohmann::ordered_json(key).dump() + ": ";
            dump_json(item, out, indent + 2);
        }
        out += "\n" + close + "}";
    } else if (v.is_array()) {
        if (v.empty()) {
            out += "[]";
            return;
        }
        // Arrays of scalars stay on one line.
        bool flat = true;
        for (const auto& item : v) flat = flat && item.is_primitive();
        out += flat ? "[" : "[\n";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out += flat ? ", " : ",\n";
            if (!flat) out += pad;
            dump_json(v[i], out, indent + 2);
        }
        out += flat ? "]" : "\n" + close + "]";
    } else {
        out += v.dump();
    }
}

inline std::string to_json_text(const nlohmann::ordered_json& v) {
    std::string out;
    dump_json(v, out);
    out += "\n";
    return out;
}

}  // namespace cmvrp
