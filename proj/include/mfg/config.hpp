#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mfg/solver.hpp"

namespace mfg::cli {

/// Flat configuration: one "dotted.key = value" per line, '#' starts a
/// comment. Lists are comma separated. A "preset = <name>" line (anywhere in
/// the file) selects the base values that the other lines override.
///
///   preset = non_potential_kernel
///   solver.particles = 500
///   flow.widths = 8,8
using Entries = std::map<std::string, std::string>;

std::vector<std::string> preset_names();
SolverConfig preset_config(std::string_view name);

SolverConfig parse_config(std::string_view text, std::string_view origin);
SolverConfig load_config(const std::filesystem::path& path);

/// Applies "key=value" overrides on top of an existing config.
SolverConfig apply_overrides(const SolverConfig& base, const std::vector<std::string>& assignments);

/// Canonical key/value view of a config; parse_config(echo_config(c)) == c.
Entries config_entries(const SolverConfig& config);
std::string echo_config(const SolverConfig& config);

bool is_known_key(std::string_view key);

}  // namespace mfg::cli
