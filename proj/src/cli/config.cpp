#include "noboxlab/cli/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "noboxlab/core/errors.hpp"
#include "noboxlab/core/hash.hpp"

namespace noboxlab {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool valid_key(const std::string& key) {
    if (key.empty()) return false;
    for (char c : key) {
        bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                  c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* want) {
    throw ValidationError("config key '" + key + "': cannot parse '" + value +
                              "' as " + want,
                          key);
}

double parse_double(const std::string& key, const std::string& value) {
    // Integer ratios like 16/255 are accepted for pixel-scale quantities.
    std::size_t slash = value.find('/');
    try {
        if (slash != std::string::npos) {
            std::size_t ln = 0;
            std::size_t rn = 0;
            double num = std::stod(value.substr(0, slash), &ln);
            std::string den_s = value.substr(slash + 1);
            double den = std::stod(den_s, &rn);
            if (ln != slash || rn != den_s.size() || den == 0.0)
                bad_value(key, value, "a number");
            return num / den;
        }
        std::size_t n = 0;
        double v = std::stod(value, &n);
        if (n != value.size()) bad_value(key, value, "a number");
        return v;
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, value, "a number");
    }
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    RunConfig cfg;
    cfg.overlay_file(path);
    return cfg;
}

RunConfig RunConfig::from_text(const std::string& text,
                               const std::string& origin) {
    RunConfig cfg;
    cfg.overlay_text(text, origin);
    return cfg;
}

void RunConfig::overlay_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    overlay_text(ss.str(), path);
}

void RunConfig::overlay_text(const std::string& text,
                             const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ValidationError(origin + ":" + std::to_string(lineno) +
                                  ": expected key=value, got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (!valid_key(key))
            throw ValidationError(origin + ":" + std::to_string(lineno) +
                                  ": invalid config key '" + key + "'");
        values_[key] = value;
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!valid_key(key))
        throw ValidationError("invalid config key '" + key + "'", key);
    values_[key] = value;
}

std::string RunConfig::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
        throw ValidationError("missing required config key '" + key + "'", key);
    return it->second;
}

std::string RunConfig::get_string(const std::string& key,
                                  const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key) const {
    return parse_double(key, get_string(key));
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::size_t RunConfig::get_size(const std::string& key) const {
    std::string v = get_string(key);
    try {
        std::size_t n = 0;
        long long parsed = std::stoll(v, &n);
        if (n != v.size() || parsed < 0) bad_value(key, v, "a non-negative integer");
        return static_cast<std::size_t>(parsed);
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, v, "a non-negative integer");
    }
}

std::size_t RunConfig::get_size(const std::string& key,
                                std::size_t fallback) const {
    return has(key) ? get_size(key) : fallback;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    std::string v = get_string(key);
    try {
        std::size_t n = 0;
        unsigned long long parsed = std::stoull(v, &n);
        if (n != v.size()) bad_value(key, v, "a non-negative integer");
        return parsed;
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, v, "a non-negative integer");
    }
}

std::uint64_t RunConfig::get_u64(const std::string& key,
                                 std::uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
}

bool RunConfig::get_bool(const std::string& key) const {
    std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, v, "a boolean");
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

std::string RunConfig::config_hash() const {
    std::string acc;
    for (const auto& [key, value] : values_) {
        if (key.rfind("out.", 0) == 0 || key == "run.id") continue;
        acc += key;
        acc += '=';
        acc += value;
        acc += '\n';
    }
    return fnv1a64_hex(acc);
}

}  // namespace noboxlab
