#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace sft {

// Flat key=value configuration: loaded from a file ('#' comments, blank lines
// ignored), every key overridable from the command line. Typed getters throw
// on malformed values; get_* with a default tolerate missing keys.
class KvConfig {
  public:
    KvConfig() = default;

    static KvConfig from_file(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace sft
