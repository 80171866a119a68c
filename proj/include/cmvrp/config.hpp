#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace cmvrp {

/// Flat `key = value` document. Blank lines and `#` comments are ignored.
/// Unknown keys are an error when the document is consumed through
/// `require_consumed`.
class KeyValueDoc {
public:
    static KeyValueDoc parse(std::string_view text) {
        KeyValueDoc doc;
        std::istringstream in{std::string(text)};
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string_view::npos)
                throw ParseError("line " + std::to_string(line_no), "expected `key = value`");
            auto key = std::string(trim(trimmed.substr(0, eq)));
            auto value = std::string(trim(trimmed.substr(eq + 1)));
            if (key.empty()) throw ParseError("line " + std::to_string(line_no), "empty key");
            if (!doc.values_.emplace(key, value).second) throw ParseError(key, "duplicate key");
        }
        return doc;
    }

    static KeyValueDoc load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file " + path);
        std::stringstream buffer;
        buffer << in.rdbuf();
        return parse(buffer.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ParseError(key, "missing field");
        consumed_.insert({key, true});
        return it->second;
    }

    std::int64_t get_int(const std::string& key) const { return parse_int(key, get_string(key)); }

    double get_double(const std::string& key) const {
        const auto text = get_string(key);
        try {
            std::size_t used = 0;
            double v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            return v;
        } catch (const std::exception&) {
            throw ParseError(key, "not a number: '" + text + "'");
        }
    }

    std::vector<std::int64_t> get_int_list(const std::string& key) const {
        std::vector<std::int64_t> out;
        const auto text = get_string(key);
        std::string_view rest = text;
        while (!rest.empty()) {
            auto comma = rest.find(',');
            auto item = trim(rest.substr(0, comma));
            out.push_back(parse_int(key, std::string(item)));
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        if (out.empty()) throw ParseError(key, "empty list");
        return out;
    }

    void require_consumed() const {
        for (const auto& [key, value] : values_)
            if (!consumed_.count(key)) throw ParseError(key, "unknown field");
    }

private:
    static std::string_view trim(std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
        return s;
    }

    static std::int64_t parse_int(const std::string& key, const std::string& text) {
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
            throw ParseError(key, "not an integer: '" + text + "'");
        return v;
    }

    std::map<std::string, std::string> values_;
    mutable std::map<std::string, bool> consumed_;
};

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return out;
}

}  // namespace cmvrp
