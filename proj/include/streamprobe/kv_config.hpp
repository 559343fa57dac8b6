#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace streamprobe {

// Strict "key = value" text configuration. '#' starts a comment line. Every
// key must be read by its consumer; require_all_consumed() reports the first
// key nobody asked for, so typos fail loudly instead of being ignored.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in, const std::string& source = "<input>");
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool contains(const std::string& key) const { return values_.count(key) != 0; }

    std::optional<std::string> get(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    unsigned long long get_uint(const std::string& key, unsigned long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Throws ConfigError naming the first unread key.
    void require_all_consumed() const;

    const std::map<std::string, std::string>& entries() const { return values_; }

    // Sorted "key=value" lines; stable input for hashing.
    std::string canonical() const;

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;
};

// 64-bit FNV-1a, hex-encoded.
std::string fnv1a_hex(const std::string& text);

}  // namespace streamprobe
