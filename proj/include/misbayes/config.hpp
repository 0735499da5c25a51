#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace misbayes::config {

// Sectioned key = value configuration ('#' comments). Getters record which
// keys were consumed so that unknown keys can be rejected after dispatch.
class Ini {
public:
    static Ini parse_file(const std::string& path);
    static Ini parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;

    std::string get_str(const std::string& section, const std::string& key) const;
    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long get_long(const std::string& section, const std::string& key) const;
    long get_long(const std::string& section, const std::string& key, long fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;
    std::vector<double> get_double_list(const std::string& section,
                                        const std::string& key) const;

    void set(const std::string& section, const std::string& key, const std::string& value);

    // Throws ConfigError naming every key that was never consumed.
    void require_all_consumed() const;

    // Deterministic serialization (sorted sections and keys).
    std::string canonical() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
    mutable std::set<std::string> consumed_;
};

}  // namespace misbayes::config
