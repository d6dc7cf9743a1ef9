#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "clamp/common.hpp"

namespace clamp::config {

// Flat `key = value` configuration with `#` comments and dotted sections
// (e.g. `train.r_s = 3.0`). Every lookup supplies a default, so config
// resolution is total; the resolved map is what goes into the manifest.
class Config {
  public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto it = values_.find(key);
        const std::string v = it == values_.end() ? fallback : it->second;
        resolved_[key] = v;
        return v;
    }

    double get_double(const std::string& key, double fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) {
            std::ostringstream os;
            os << fallback;
            resolved_[key] = os.str();
            return fallback;
        }
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            resolved_[key] = it->second;
            return v;
        } catch (const std::exception&) {
            throw ValidationError("config: key '" + key + "' is not a number: " + it->second);
        }
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) {
            resolved_[key] = std::to_string(fallback);
            return fallback;
        }
        try {
            std::size_t pos = 0;
            const std::int64_t v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            resolved_[key] = it->second;
            return v;
        } catch (const std::exception&) {
            throw ValidationError("config: key '" + key + "' is not an integer: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) {
            resolved_[key] = fallback ? "true" : "false";
            return fallback;
        }
        resolved_[key] = it->second;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ValidationError("config: key '" + key + "' is not a boolean: " + it->second);
    }

    // Comma-separated list of positive integers, e.g. "64,64".
    std::vector<std::size_t> get_size_list(const std::string& key, const std::string& fallback) {
        const std::string raw = get_string(key, fallback);
        std::vector<std::size_t> out;
        std::stringstream ss(raw);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                const long v = std::stol(tok);
                if (v <= 0) throw std::invalid_argument("nonpositive");
                out.push_back(static_cast<std::size_t>(v));
            } catch (const std::exception&) {
                throw ValidationError("config: key '" + key + "' has a bad list entry: " + tok);
            }
        }
        if (out.empty()) throw ValidationError("config: key '" + key + "' resolves to an empty list");
        return out;
    }

    std::vector<double> get_double_list(const std::string& key, const std::string& fallback) {
        const std::string raw = get_string(key, fallback);
        std::vector<double> out;
        std::stringstream ss(raw);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                out.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw ValidationError("config: key '" + key + "' has a bad list entry: " + tok);
            }
        }
        return out;
    }

    const std::map<std::string, std::string>& resolved() const { return resolved_; }
    const std::map<std::string, std::string>& raw() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
    std::map<std::string, std::string> resolved_;  // every key touched, with its final value
};

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline Config parse_config_text(std::istream& in) {
    Config cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config: missing '=' on line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ValidationError("config: empty key on line " + std::to_string(lineno));
        cfg.set(key, value);
    }
    return cfg;
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    return parse_config_text(in);
}

// `--set key=value` override.
inline void apply_override(Config& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ValidationError("override must look like key=value: " + assignment);
    cfg.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

}  // namespace clamp::config
