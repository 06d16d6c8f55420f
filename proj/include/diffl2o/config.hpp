#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "diffl2o/bench.hpp"
#include "diffl2o/bounds.hpp"

namespace diffl2o {

// Config files are INI text: "[section]" headers followed by "key = value"
// lines; ';' and '#' start comment lines. Every key must appear in the
// schema below; list values are comma separated.
struct ConfigKey {
  std::string key;  // "section.name"
  std::string default_value;
  std::string help;
};

const std::vector<ConfigKey>& config_schema();
ConfigMap default_config();

// Sections a subcommand reads; empty for an unknown subcommand.
std::vector<std::string> sections_for(std::string_view subcommand);
// "Config keys:" block listing every key a subcommand accepts.
std::string config_help(std::string_view subcommand);

// Defaults overlaid with the file's keys. Unknown sections or keys, keys
// outside a section, and duplicates throw ConfigError.
ConfigMap parse_config_text(const std::string& text, const std::string& origin);
ConfigMap load_config(const std::filesystem::path& path);
// "section.key=value"; the key must exist.
void apply_override(ConfigMap& config, std::string_view assignment);
std::string render_config(const ConfigMap& config);

std::string get_string(const ConfigMap& config, const std::string& key);
long get_int(const ConfigMap& config, const std::string& key);
double get_double(const ConfigMap& config, const std::string& key);
bool get_bool(const ConfigMap& config, const std::string& key);
std::vector<std::string> get_list(const ConfigMap& config, const std::string& key);

// Builds the typed experiment; loads the IDX files for the mlp optimizee.
ExperimentConfig experiment_from_config(const ConfigMap& config);
BoundInput bound_from_config(const ConfigMap& config);

}  // namespace diffl2o
