#include "dmsbl/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dmsbl {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double x = 0;
    auto s = trim(v);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": '" + v + "' is not a number");
    return x;
}

}  // namespace

const std::vector<std::string>& Config::known_keys() {
    static const std::vector<std::string> keys = {
        "sde.beta_min", "sde.beta_max", "sde.steps", "sde.alpha_form",
        "guidance.method", "guidance.mu", "guidance.kappa", "guidance.K", "guidance.pgdm_variance",
        "sampler.T", "sampler.K", "sampler.nu", "sampler.rho", "sampler.em", "sampler.seed",
        "sampler.corrector_steps", "sampler.denoise_last", "sampler.gamma_ceiling", "sampler.vjp",
        "channel.p0", "channel.L", "channel.inter_arrival_mean", "channel.decay_db", "channel.decay_span",
        "channel.symbol_rate", "channel.normalize",
        "interference.kind", "interference.B", "interference.T_lfm", "interference.covariance",
        "interference.bandwidth", "interference.length_scale",
        "scenario.M", "scenario.snr_db", "scenario.sir_db",
        "bench.snr_db", "bench.sir_db", "bench.methods", "bench.trials", "bench.seed", "bench.output",
        "bench.threads",
        "score.weights",
        "baseline.mmse_prior_var", "baseline.sbl_max_iters", "baseline.sbl_tol", "baseline.omp_sparsity",
    };
    return keys;
}

Config Config::from_string(const std::string& text) {
    Config c;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.find('=') == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        c.set(line);
    }
    return c;
}

Config Config::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_string(ss.str());
}

void Config::set(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
    const auto& known = known_keys();
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
    kv_[key] = value;
}

std::string Config::get_string(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

double Config::get_double(const std::string& key, double def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : parse_double(key, it->second);
}

long long Config::get_int(const std::string& key, long long def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    long long x = 0;
    const std::string& s = it->second;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not an integer");
    return x;
}

bool Config::get_bool(const std::string& key, bool def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    const std::string& s = it->second;
    if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "off" || s == "no") return false;
    throw ConfigError(key + ": '" + s + "' is not a boolean");
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<double> out;
    for (const auto& s : split_list(it->second)) out.push_back(parse_double(key, s));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

std::vector<std::string> Config::get_strings(const std::string& key, const std::vector<std::string>& def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    auto out = split_list(it->second);
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

namespace {

// Two keys naming one quantity must agree when both are present.
long long aliased_int(const Config& c, const std::string& a, const std::string& b, long long def) {
    if (c.has(a) && c.has(b) && c.get_int(a, def) != c.get_int(b, def))
        throw ConfigError(a + " and " + b + " disagree");
    return c.has(a) ? c.get_int(a, def) : c.get_int(b, def);
}

}  // namespace

VpSchedule schedule_from_config(const Config& c) {
    std::string form = c.get_string("sde.alpha_form", "consistent");
    VpSchedule::Form f;
    if (form == "consistent")
        f = VpSchedule::Form::consistent;
    else if (form == "paper")
        f = VpSchedule::Form::paper;
    else
        throw ConfigError("sde.alpha_form must be consistent or paper");
    try {
        return VpSchedule(c.get_double("sde.beta_min", 0.1), c.get_double("sde.beta_max", 20.0),
                          static_cast<int>(aliased_int(c, "sde.steps", "sampler.T", 500)), f);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("schedule: ") + e.what());
    }
}

SamplerConfig sampler_from_config(const Config& c) {
    SamplerConfig s;
    s.T = static_cast<int>(aliased_int(c, "sde.steps", "sampler.T", s.T));
    s.K = static_cast<int>(aliased_int(c, "guidance.K", "sampler.K", s.K));
    s.nu = c.get_double("sampler.nu", s.nu);
    s.rho = c.get_double("sampler.rho", s.rho);
    s.mu = c.get_double("guidance.mu", s.mu);
    s.kappa = c.get_double("guidance.kappa", s.kappa);
    s.em_enabled = c.get_bool("sampler.em", s.em_enabled);
    s.seed = static_cast<std::uint64_t>(c.get_int("sampler.seed", 0));
    s.method = parse_method(c.get_string("guidance.method", "pgdm"));
    s.pgdm_variance = parse_pgdm_variance(c.get_string("guidance.pgdm_variance", "empirical"));
    s.corrector_steps = static_cast<int>(c.get_int("sampler.corrector_steps", s.corrector_steps));
    s.denoise_last = c.get_bool("sampler.denoise_last", s.denoise_last);
    s.gamma_ceiling = c.get_double("sampler.gamma_ceiling", s.gamma_ceiling);
    s.validate();
    return s;
}

}  // namespace dmsbl
