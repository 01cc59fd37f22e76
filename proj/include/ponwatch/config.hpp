#pragma once

// Flat key=value run configuration: file parsing, typed lookups, canonical
// digest, and construction of topology/sim-config from a key map.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ponwatch/otdr.hpp"

namespace ponwatch {

using ConfigMap = std::map<std::string, std::string>;

// '#' comments, blank lines ignored; "key = value" per line.
ConfigMap parse_config_file(const std::string& path);
ConfigMap parse_config_text(const std::string& text);

double config_get_double(const ConfigMap& cfg, const std::string& key,
                         double fallback);
long config_get_long(const ConfigMap& cfg, const std::string& key, long fallback);
std::string config_get_string(const ConfigMap& cfg, const std::string& key,
                              const std::string& fallback);
std::vector<double> config_get_doubles(const ConfigMap& cfg,
                                       const std::string& key,
                                       const std::vector<double>& fallback);

std::uint64_t fnv1a64(std::string_view data);
// digest over the canonical "key=value\n" rendering
std::uint64_t config_digest(const ConfigMap& cfg);
std::string render_config(const ConfigMap& cfg);

// Recognized keys: feeder_length_m, split_ratio, branch_lengths_m (comma
// list), pulse_width_ns, sample_interval_ns, wavelength_nm, group_index,
// attenuation_db_per_km, splitter_loss_db, reflector_return_db, trace_len,
// dynamic_range_db.
PonTopology topology_from_config(const ConfigMap& cfg);
SimConfig simconfig_from_config(const ConfigMap& cfg);

}  // namespace ponwatch
