#include "misbayes/config.hpp"

#include <fstream>
#include <sstream>

#include "misbayes/errors.hpp"

namespace misbayes::config {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

std::string slot(const std::string& section, const std::string& key) {
    return section + "." + key;
}

}  // namespace

Ini Ini::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

Ini Ini::parse_string(const std::string& text, const std::string& origin) {
    Ini ini;
    std::stringstream ss(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
            ini.sections_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (section.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": key outside any [section]");
        if (ini.sections_[section].count(key))
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                              key + "' in [" + section + "]");
        ini.sections_[section][key] = value;
    }
    return ini;
}

bool Ini::has(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
}

std::string Ini::get_str(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    if (it == sections_.end() || !it->second.count(key))
        throw ConfigError("missing required key '" + key + "' in section [" + section + "]");
    consumed_.insert(slot(section, key));
    return it->second.at(key);
}

std::string Ini::get_str(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    if (!has(section, key)) return fallback;
    return get_str(section, key);
}

double Ini::get_double(const std::string& section, const std::string& key) const {
    const std::string v = get_str(section, key);
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' in [" + section + "]: '" + v +
                          "' is not a number");
    }
}

double Ini::get_double(const std::string& section, const std::string& key,
                       double fallback) const {
    if (!has(section, key)) return fallback;
    return get_double(section, key);
}

long Ini::get_long(const std::string& section, const std::string& key) const {
    const std::string v = get_str(section, key);
    try {
        std::size_t used = 0;
        const long x = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' in [" + section + "]: '" + v +
                          "' is not an integer");
    }
}

long Ini::get_long(const std::string& section, const std::string& key, long fallback) const {
    if (!has(section, key)) return fallback;
    return get_long(section, key);
}

std::uint64_t Ini::get_u64(const std::string& section, const std::string& key,
                           std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_str(section, key);
    try {
        std::size_t used = 0;
        const std::uint64_t x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' in [" + section + "]: '" + v +
                          "' is not an unsigned integer");
    }
}

bool Ini::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_str(section, key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "' in [" + section + "]: '" + v + "' is not a boolean");
}

std::vector<std::string> Ini::get_list(const std::string& section,
                                       const std::string& key) const {
    const std::string v = get_str(section, key);
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> Ini::get_double_list(const std::string& section,
                                         const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : get_list(section, key)) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "' in [" + section + "]: '" + item +
                              "' is not a number");
        }
    }
    return out;
}

void Ini::set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
    consumed_.insert(slot(section, key));
}

void Ini::require_all_consumed() const {
    std::string unknown;
    for (const auto& [section, kv] : sections_)
        for (const auto& [key, value] : kv)
            if (!consumed_.count(slot(section, key)))
                unknown += (unknown.empty() ? "" : ", ") + slot(section, key);
    if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

std::string Ini::canonical() const {
    std::string out;
    for (const auto& [section, kv] : sections_) {
        out += "[" + section + "]\n";
        for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
        out += "\n";
    }
    return out;
}

}  // namespace misbayes::config
