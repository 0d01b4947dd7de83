#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace noboxlab {

// Layered plain-text configuration with dotted keys:
//
//     # comment
//     margin.m = 0.15
//     budget.epsilon = 16/255
//
// Later overlays (additional files, then command-line --set pairs) override
// earlier values key by key. Numeric getters accept plain decimals and
// integer ratios like 16/255. Missing keys and malformed values raise
// ValidationError naming the key.
class RunConfig {
public:
    RunConfig() = default;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text,
                               const std::string& origin = "<config>");

    void overlay_file(const std::string& path);
    void overlay_text(const std::string& text,
                      const std::string& origin = "<config>");
    // Single assignment, as given by a command-line override.
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& entries() const { return values_; }

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::size_t get_size(const std::string& key) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Fingerprint over every semantically meaningful key: sorted key=value
    // pairs, excluding output placement (out.* and run.id).
    std::string config_hash() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace noboxlab
