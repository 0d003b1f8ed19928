#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "imtk/core.hpp"

namespace imtk {

// Flat dotted-key configuration: one `key = value` pair per line, `#`
// comments. CLI flags override file values; all randomness flows from the
// single `seed` key.
class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file: " + path);
        Config config;
        config.parse(in, path);
        return config;
    }

    static Config from_string(const std::string& text) {
        std::istringstream in(text);
        Config config;
        config.parse(in, "<string>");
        return config;
    }

    void set(const std::string& key, const std::string& value) {
        values_[key] = value;
    }

    // Accepts "key=value" as passed on the command line.
    void set_from_flag(const std::string& assignment) {
        auto eq = assignment.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key=value, got: " + assignment);
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback = "") const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end() || it->second.empty())
            throw ConfigError("missing required config key: " + key);
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " is not a number: " + it->second);
        }
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoll(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " is not an integer: " + it->second);
        }
    }

    std::uint64_t get_seed(std::uint64_t fallback = 0) const {
        return static_cast<std::uint64_t>(get_int("seed", static_cast<std::int64_t>(fallback)));
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        auto v = to_lower(trim(it->second));
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError("config key " + key + " is not a boolean: " + it->second);
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    void parse(std::istream& in, const std::string& where) {
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto stripped = trim(line);
            if (stripped.empty()) continue;
            auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw ConfigError(where + ":" + std::to_string(line_no) +
                                  ": expected key = value");
            auto key = trim(stripped.substr(0, eq));
            auto value = trim(stripped.substr(eq + 1));
            if (key.empty())
                throw ConfigError(where + ":" + std::to_string(line_no) + ": empty key");
            values_[key] = value;
        }
    }

    std::map<std::string, std::string> values_;
};

}  // namespace imtk
