#pragma once

#include <map>
#include <string>
#include <vector>

#include "dmsbl/sampler.hpp"

namespace dmsbl {

// Flat key=value text; '#' starts a comment. Unknown keys are rejected.
class Config {
public:
    static Config from_file(const std::string& path);
    static Config from_string(const std::string& text);

    // "key=value"
    void set(const std::string& assignment);
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key, double def) const;
    long long get_int(const std::string& key, long long def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& def) const;
    std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& def) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }
    static const std::vector<std::string>& known_keys();

private:
    std::map<std::string, std::string> kv_;
};

VpSchedule schedule_from_config(const Config& c);
SamplerConfig sampler_from_config(const Config& c);

}  // namespace dmsbl
