#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "evoloco/evolution.hpp"
#include "evoloco/ppo.hpp"

namespace evoloco {

// Full run configuration: [evolution], [training], [world] and [reward]
// sections plus top-level run keys. Defaults are the desk-scale values;
// --dump-config prints every effective value.
struct RunConfig {
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool wall_clock_seeds = false;
  std::string output_dir = "evoloco_out";
  bool allow_any_scaling = false;

  EvolutionConfig evolution;
  TrainConfig training;

  // test hook: exit the process right after claiming this slot
  int crash_after_claim_slot = -1;
};

struct ConfigReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

// Known presets: "desk" (P=8,T=4,W=2,G=3, 64 envs, 2e5 steps) and "paper"
// (P=100,T=50,W=10,G=10, 8192 envs, 3e7 steps).
void apply_preset(RunConfig& config, const std::string& name);

// Parses the TOML-style key/value format produced by dump_config. Throws
// std::runtime_error with a line number on syntax errors or unknown keys.
void load_config_file(RunConfig& config, const std::string& path);

void dump_config(const RunConfig& config, std::ostream& out);

ConfigReport validate_config(const RunConfig& config);

// Applies derived settings (master seed propagation, deterministic flag)
// after all sources are merged.
void finalize_config(RunConfig& config);

}  // namespace evoloco
