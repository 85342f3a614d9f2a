#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unfold/errors.hpp"

namespace unfold {

/// Flat `key = value` run configuration. Every key has a registered default;
/// unknown keys are rejected. Lines starting with '#' are comments.
class RunConfig {
public:
    RunConfig();

    static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
    static RunConfig load(const std::string& path);

    /// Sets a known key; throws ConfigError for unknown keys.
    void set(const std::string& key, const std::string& value);
    bool is_set(const std::string& key) const;  // explicitly given, not defaulted

    const std::string& str(const std::string& key) const;
    double real(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    std::uint64_t uint(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> real_list(const std::string& key) const;
    std::vector<std::int64_t> int_list(const std::string& key) const;

    /// Makes every path-valued key absolute relative to `base`.
    void resolve_paths(const std::string& base);
    /// All keys in sorted order, one `key = value` per line.
    std::string echo() const;

    static const std::vector<std::string>& known_keys();

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, bool> explicit_;
};

}  // namespace unfold
