#pragma once

// Run configuration file (YAML, strict schema, unknown keys rejected):
//
//   mode: Method2              # Method1 | Method2 | DapoBaseline
//   iterations: 300
//   group_size: 8
//   off_group_size: 8          # optional, defaults to group_size
//   max_retries: 10            # DapoBaseline resampling cap
//   seed: 1
//   context_window: 2
//   reward_threshold: 0.5
//   sigma_estimate_samples: 20
//   lipschitz_probe_count: 20
//   schedule: {kind: Theorem1} # or {kind: Constant, alpha: 20.0}
//   mix: {gamma: 0.05, epsilon: 0.2, w_lower: 0.2, w_upper: 5.0,
//         on_weight: 0.5, mix_weight: 0.5}
//
// Every key is optional; omitted keys keep the TrainConfig defaults.

#include <filesystem>
#include <string>

#include "mixpo/trainer.hpp"

namespace mixpo {

struct LoadedConfig {
  TrainConfig config;
  /// off_group_size appeared explicitly in the file.
  bool off_group_size_set = false;
};

LoadedConfig parse_config(const std::string& text);
LoadedConfig load_config(const std::filesystem::path& path);

/// Canonical YAML rendering; parse_config(format_config(c)) reproduces c.
std::string format_config(const TrainConfig& config);

}  // namespace mixpo
