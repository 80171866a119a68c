#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "autodiff.hpp"
#include "errors.hpp"

namespace cmvrp {

/// Versioned container for named arrays plus string metadata.
///
/// Layout (text lines, each array followed by its payload):
///
///     CMVRP-CHECKPOINT 1
///     config_hash <hex>
///     meta <key> <value>
///     tensor <name> <rows> <cols>
///     <rows*cols little-endian IEEE-754 binary64 values>
///     end
struct Checkpoint {
    static constexpr int kVersion = 1;

    std::string config_hash;
    std::map<std::string, std::string> meta;
    std::map<std::string, ad::Array> tensors;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

inline void put_f64_le(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
}

inline double get_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int k = 7; k >= 0; --k) bits = (bits << 8) | p[k];
    return std::bit_cast<double>(bits);
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string out = "CMVRP-CHECKPOINT " + std::to_string(Checkpoint::kVersion) + "\n";
    out += "config_hash " + ckpt.config_hash + "\n";
    for (const auto& [k, v] : ckpt.meta) {
        if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
            throw ContractViolation("checkpoint metadata must be single-line, key without spaces");
        out += "meta " + k + " " + v + "\n";
    }
    for (const auto& [name, a] : ckpt.tensors) {
        out += "tensor " + name + " " + std::to_string(a.rows()) + " " + std::to_string(a.cols()) + "\n";
        for (double v : a.values()) detail::put_f64_le(out, v);
        out += "\n";
    }
    out += "end\n";
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Checkpoint ckpt;
    std::size_t pos = 0;
    auto next_line = [&]() {
        auto nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw ParseError("checkpoint", "truncated document");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };
    const auto header = next_line();
    if (header != "CMVRP-CHECKPOINT " + std::to_string(Checkpoint::kVersion))
        throw ParseError("checkpoint.header", "unsupported header '" + header + "'");
    for (;;) {
        const auto line = next_line();
        if (line == "end") break;
        std::istringstream in(line);
        std::string kind;
        in >> kind;
        if (kind == "config_hash") {
            in >> ckpt.config_hash;
        } else if (kind == "meta") {
            std::string key;
            in >> key;
            std::string value;
            std::getline(in, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            ckpt.meta[key] = value;
        } else if (kind == "tensor") {
            std::string name;
            std::size_t rows = 0, cols = 0;
            if (!(in >> name >> rows >> cols)) throw ParseError("checkpoint.tensor", "bad tensor header");
            const std::size_t n = rows * cols;
            if (pos + 8 * n + 1 > bytes.size()) throw ParseError("checkpoint.tensor." + name, "truncated payload");
            ad::Array a(rows, cols);
            const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
            for (std::size_t i = 0; i < n; ++i) a[i] = detail::get_f64_le(p + 8 * i);
            pos += 8 * n;
            if (bytes[pos] != '\n') throw ParseError("checkpoint.tensor." + name, "payload not terminated");
            ++pos;
            ckpt.tensors.emplace(name, std::move(a));
        } else {
            throw ParseError("checkpoint", "unknown record '" + kind + "'");
        }
    }
    return ckpt;
}

inline void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path);
    const auto bytes = serialize_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return deserialize_checkpoint(buffer.str());
}

}  // namespace cmvrp
