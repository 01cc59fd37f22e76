#include "ponwatch/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ponwatch {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": empty key");
        out[key] = val;
    }
    return out;
}

ConfigMap parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

double config_get_double(const ConfigMap& cfg, const std::string& key,
                         double fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': not a number: " +
                                 it->second);
    }
}

long config_get_long(const ConfigMap& cfg, const std::string& key, long fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    try {
        return std::stol(it->second);
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "': not an integer: " +
                                 it->second);
    }
}

std::string config_get_string(const ConfigMap& cfg, const std::string& key,
                              const std::string& fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : it->second;
}

std::vector<double> config_get_doubles(const ConfigMap& cfg,
                                       const std::string& key,
                                       const std::vector<double>& fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    std::vector<double> out;
    std::istringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + key +
                                     "': not a number list: " + it->second);
        }
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string render_config(const ConfigMap& cfg) {
    std::ostringstream out;
    for (const auto& [k, v] : cfg) out << k << "=" << v << "\n";
    return out.str();
}

std::uint64_t config_digest(const ConfigMap& cfg) {
    return fnv1a64(render_config(cfg));
}

PonTopology topology_from_config(const ConfigMap& cfg) {
    PonTopology t = default_topology();
    t.feeder_length_m = config_get_double(cfg, "feeder_length_m", t.feeder_length_m);
    t.split_ratio =
        static_cast<int>(config_get_long(cfg, "split_ratio", t.split_ratio));
    auto lengths = config_get_doubles(cfg, "branch_lengths_m", {});
    if (!lengths.empty()) {
        t.branches.clear();
        int id = 1;
        for (double L : lengths) t.branches.push_back({id++, L, true});
    }
    t.validate();
    return t;
}

SimConfig simconfig_from_config(const ConfigMap& cfg) {
    SimConfig c;
    c.pulse_width_ns = config_get_double(cfg, "pulse_width_ns", c.pulse_width_ns);
    c.sample_interval_ns =
        config_get_double(cfg, "sample_interval_ns", c.sample_interval_ns);
    c.wavelength_nm = config_get_double(cfg, "wavelength_nm", c.wavelength_nm);
    c.group_index = config_get_double(cfg, "group_index", c.group_index);
    c.attenuation_db_per_km =
        config_get_double(cfg, "attenuation_db_per_km", c.attenuation_db_per_km);
    c.splitter_loss_db =
        config_get_double(cfg, "splitter_loss_db", c.splitter_loss_db);
    c.reflector_return_db =
        config_get_double(cfg, "reflector_return_db", c.reflector_return_db);
    c.trace_len = static_cast<std::size_t>(
        config_get_long(cfg, "trace_len", static_cast<long>(c.trace_len)));
    c.dynamic_range_db =
        config_get_double(cfg, "dynamic_range_db", c.dynamic_range_db);
    c.validate();
    return c;
}

}  // namespace ponwatch
