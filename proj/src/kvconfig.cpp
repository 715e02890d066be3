#include "sft/kvconfig.hpp"

#include <fstream>
#include <stdexcept>

namespace sft {

namespace {

std::string strip(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    KvConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = strip(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config " + path + " line " + std::to_string(lineno) +
                                     ": expected key=value, got '" + t + "'");
        cfg.set(strip(t.substr(0, eq)), strip(t.substr(eq + 1)));
    }
    return cfg;
}

std::string KvConfig::get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::runtime_error("config: missing key '" + key + "'");
    return it->second;
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int64_t KvConfig::get_int(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t pos = 0;
        const int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' is not an integer: '" + v + "'");
    }
}

int64_t KvConfig::get_int(const std::string& key, int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double KvConfig::get_double(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw std::runtime_error("config: key '" + key + "' is not a number: '" + v + "'");
    }
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

}  // namespace sft
