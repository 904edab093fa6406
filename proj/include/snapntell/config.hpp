#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "error.hpp"

namespace snt {

/// Flat key/value settings read from a TOML-style file: `key = value`
/// lines, `[section]` headers prefixing keys as `section.key`, `#` comments,
/// optionally double-quoted values.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in) {
        KeyValueConfig cfg;
        std::string line, section;
        std::size_t lineno = 0;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        while (std::getline(in, line)) {
            ++lineno;
            bool in_quotes = false;
            for (std::size_t i = 0; i < line.size(); ++i) {
                if (line[i] == '"') in_quotes = !in_quotes;
                if (line[i] == '#' && !in_quotes) {
                    line.resize(i);
                    break;
                }
            }
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw Error(ErrorKind::ParseError, "config line " + std::to_string(lineno) + ": bad section");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw Error(ErrorKind::ParseError, "config line " + std::to_string(lineno) + ": expected key = value");
            auto key = trim(line.substr(0, eq));
            auto value = trim(line.substr(eq + 1));
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
                value = value.substr(1, value.size() - 2);
            cfg.values_[section.empty() ? key : section + "." + key] = value;
        }
        return cfg;
    }

    static KeyValueConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::IoFailure, "cannot open config " + path.string());
        return parse(in);
    }

    std::optional<std::string> get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        return get(key).value_or(fallback);
    }

    double get_or(const std::string& key, double fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        try {
            return std::stod(*v);
        } catch (const std::exception&) {
            throw Error(ErrorKind::ParseError, "config key " + key + " is not a number");
        }
    }

    long long get_or(const std::string& key, long long fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        try {
            return std::stoll(*v);
        } catch (const std::exception&) {
            throw Error(ErrorKind::ParseError, "config key " + key + " is not an integer");
        }
    }

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

} // namespace snt
