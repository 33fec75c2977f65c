#include "evoloco/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace evoloco {

namespace {

std::string trim(const std::string& text) {
  std::size_t begin = 0, end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin])))
    ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1])))
    --end;
  return text.substr(begin, end - begin);
}

struct Setter {
  std::function<void(RunConfig&, const std::string&)> apply;
};

template <typename T>
T parse_number(const std::string& raw, const std::string& key) {
  std::istringstream stream(raw);
  T value{};
  stream >> value;
  if (stream.fail() || !(stream >> std::ws).eof()) {
    throw std::runtime_error("invalid numeric value for " + key + ": " + raw);
  }
  return value;
}

bool parse_bool(const std::string& raw, const std::string& key) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  throw std::runtime_error("invalid boolean for " + key + ": " + raw);
}

std::string parse_string(const std::string& raw, const std::string& key) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    return raw.substr(1, raw.size() - 2);
  }
  throw std::runtime_error("string value for " + key +
                           " must be double-quoted: " + raw);
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed",
       {[](RunConfig& c, const std::string& v) {
         c.seed = parse_number<std::uint64_t>(v, "seed");
         c.seed_set = true;
       }}},
      {"output_dir",
       {[](RunConfig& c, const std::string& v) {
         c.output_dir = parse_string(v, "output_dir");
       }}},
      {"wall_clock_seeds",
       {[](RunConfig& c, const std::string& v) {
         c.wall_clock_seeds = parse_bool(v, "wall_clock_seeds");
       }}},
      {"allow_any_scaling",
       {[](RunConfig& c, const std::string& v) {
         c.allow_any_scaling = parse_bool(v, "allow_any_scaling");
       }}},

      {"evolution.population",
       {[](RunConfig& c, const std::string& v) {
         c.evolution.population = parse_number<int>(v, "population");
       }}},
      {"evolution.tournaments_per_generation",
       {[](RunConfig& c, const std::string& v) {
         c.evolution.tournaments = parse_number<int>(v, "tournaments");
       }}},
      {"evolution.workers",
       {[](RunConfig& c, const std::string& v) {
         c.evolution.workers = parse_number<int>(v, "workers");
       }}},
      {"evolution.max_generations",
       {[](RunConfig& c, const std::string& v) {
         c.evolution.max_generations = parse_number<int>(v, "max_generations");
       }}},
      {"evolution.lease_seconds",
       {[](RunConfig& c, const std::string& v) {
         c.evolution.lease_seconds = parse_number<double>(v, "lease_seconds");
       }}},

      {"training.num_envs",
       {[](RunConfig& c, const std::string& v) {
         c.training.num_envs = parse_number<int>(v, "num_envs");
       }}},
      {"training.horizon",
       {[](RunConfig& c, const std::string& v) {
         c.training.horizon = parse_number<int>(v, "horizon");
       }}},
      {"training.total_steps",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.total_steps = parse_number<long long>(v, "total_steps");
       }}},
      {"training.fitness_window_fraction",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.fitness_window_fraction =
             parse_number<double>(v, "fitness_window_fraction");
       }}},
      {"training.learning_rate",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.learning_rate = parse_number<double>(v, "learning_rate");
       }}},
      {"training.anneal_lr",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.anneal_lr = parse_bool(v, "anneal_lr");
       }}},
      {"training.clip_epsilon",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.clip_epsilon = parse_number<double>(v, "clip_epsilon");
       }}},
      {"training.gae_gamma",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.gae_gamma = parse_number<double>(v, "gae_gamma");
       }}},
      {"training.gae_lambda",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.gae_lambda = parse_number<double>(v, "gae_lambda");
       }}},
      {"training.epochs",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.epochs = parse_number<int>(v, "epochs");
       }}},
      {"training.minibatches",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.minibatches = parse_number<int>(v, "minibatches");
       }}},
      {"training.value_coeff",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.value_coeff = parse_number<double>(v, "value_coeff");
       }}},
      {"training.entropy_coeff",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.entropy_coeff = parse_number<double>(v, "entropy_coeff");
       }}},
      {"training.max_grad_norm",
       {[](RunConfig& c, const std::string& v) {
         c.training.ppo.max_grad_norm = parse_number<double>(v, "max_grad_norm");
       }}},

      {"world.gravity",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.world.gravity = parse_number<double>(v, "gravity");
       }}},
      {"world.dt",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.world.dt = parse_number<double>(v, "dt");
       }}},
      {"world.ground_friction",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.world.ground_friction_coeff =
             parse_number<double>(v, "ground_friction");
       }}},
      {"world.contact_stiffness",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.world.contact_stiffness =
             parse_number<double>(v, "contact_stiffness");
       }}},
      {"world.contact_damping",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.world.contact_damping =
             parse_number<double>(v, "contact_damping");
       }}},
      {"world.arena_radius",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.world.arena_radius =
             parse_number<double>(v, "arena_radius");
       }}},
      {"world.max_episode_steps",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.max_episode_steps =
             parse_number<int>(v, "max_episode_steps");
       }}},
      {"world.target_x",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.target_x = parse_number<double>(v, "target_x");
       }}},

      {"reward.progress",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.reward.progress = parse_number<double>(v, "progress");
       }}},
      {"reward.alive",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.reward.alive = parse_number<double>(v, "alive");
       }}},
      {"reward.upright",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.reward.upright = parse_number<double>(v, "upright");
       }}},
      {"reward.heading",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.reward.heading = parse_number<double>(v, "heading");
       }}},
      {"reward.effort",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.reward.effort = parse_number<double>(v, "effort");
       }}},
      {"reward.action",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.reward.action = parse_number<double>(v, "action");
       }}},
      {"reward.dof",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.reward.dof = parse_number<double>(v, "dof");
       }}},
      {"reward.death",
       {[](RunConfig& c, const std::string& v) {
         c.training.env.reward.death = parse_number<double>(v, "death");
       }}},
  };
  return table;
}

}  // namespace

void apply_preset(RunConfig& config, const std::string& name) {
  if (name == "desk") {
    config.evolution.population = 8;
    config.evolution.tournaments = 4;
    config.evolution.workers = 2;
    config.evolution.max_generations = 3;
    config.training.num_envs = 64;
    config.training.horizon = 32;
    config.training.ppo.total_steps = 200000;
    config.training.ppo.fitness_window_fraction = 0.1;
    // desk hardware cannot honor the reference envs*horizon budget
    config.allow_any_scaling = true;
  } else if (name == "paper") {
    config.evolution.population = 100;
    config.evolution.tournaments = 50;
    config.evolution.workers = 10;
    config.evolution.max_generations = 10;
    config.training.num_envs = 8192;
    config.training.horizon = 16;
    config.training.ppo.total_steps = 30000000;
    config.training.ppo.fitness_window_fraction = 100000.0 / 30000000.0;
    config.allow_any_scaling = false;
  } else {
    throw std::runtime_error("unknown preset: " + name +
                             " (expected desk or paper)");
  }
}

void load_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full_key = section.empty() ? key : section + "." + key;
    auto it = setters().find(full_key);
    if (it == setters().end()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": unknown config key " + full_key);
    }
    try {
      it->second.apply(config, value);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
}

void dump_config(const RunConfig& config, std::ostream& out) {
  out << "# evoloco run configuration\n";
  out << "seed = " << config.seed << "\n";
  out << "output_dir = \"" << config.output_dir << "\"\n";
  out << "wall_clock_seeds = " << (config.wall_clock_seeds ? "true" : "false")
      << "\n";
  out << "allow_any_scaling = "
      << (config.allow_any_scaling ? "true" : "false") << "\n";
  out << "\n[evolution]\n";
  out << "population = " << config.evolution.population << "\n";
  out << "tournaments_per_generation = " << config.evolution.tournaments
      << "\n";
  out << "workers = " << config.evolution.workers << "\n";
  out << "max_generations = " << config.evolution.max_generations << "\n";
  out << "lease_seconds = " << config.evolution.lease_seconds << "\n";
  out << "\n[training]\n";
  out << "num_envs = " << config.training.num_envs << "\n";
  out << "horizon = " << config.training.horizon << "\n";
  out << "total_steps = " << config.training.ppo.total_steps << "\n";
  out << "fitness_window_fraction = "
      << config.training.ppo.fitness_window_fraction << "\n";
  out << "learning_rate = " << config.training.ppo.learning_rate << "\n";
  out << "anneal_lr = " << (config.training.ppo.anneal_lr ? "true" : "false")
      << "\n";
  out << "clip_epsilon = " << config.training.ppo.clip_epsilon << "\n";
  out << "gae_gamma = " << config.training.ppo.gae_gamma << "\n";
  out << "gae_lambda = " << config.training.ppo.gae_lambda << "\n";
  out << "epochs = " << config.training.ppo.epochs << "\n";
  out << "minibatches = " << config.training.ppo.minibatches << "\n";
  out << "value_coeff = " << config.training.ppo.value_coeff << "\n";
  out << "entropy_coeff = " << config.training.ppo.entropy_coeff << "\n";
  out << "max_grad_norm = " << config.training.ppo.max_grad_norm << "\n";
  out << "\n[world]\n";
  out << "gravity = " << config.training.env.world.gravity << "\n";
  out << "dt = " << config.training.env.world.dt << "\n";
  out << "ground_friction = " << config.training.env.world.ground_friction_coeff
      << "\n";
  out << "contact_stiffness = " << config.training.env.world.contact_stiffness
      << "\n";
  out << "contact_damping = " << config.training.env.world.contact_damping
      << "\n";
  out << "arena_radius = " << config.training.env.world.arena_radius << "\n";
  out << "max_episode_steps = " << config.training.env.max_episode_steps
      << "\n";
  out << "target_x = " << config.training.env.target_x << "\n";
  out << "\n[reward]\n";
  out << "progress = " << config.training.env.reward.progress << "\n";
  out << "alive = " << config.training.env.reward.alive << "\n";
  out << "upright = " << config.training.env.reward.upright << "\n";
  out << "heading = " << config.training.env.reward.heading << "\n";
  out << "effort = " << config.training.env.reward.effort << "\n";
  out << "action = " << config.training.env.reward.action << "\n";
  out << "dof = " << config.training.env.reward.dof << "\n";
  out << "death = " << config.training.env.reward.death << "\n";
}

ConfigReport validate_config(const RunConfig& config) {
  ConfigReport report;
  auto error = [&report](const std::string& message) {
    report.errors.push_back(message);
  };
  auto warn = [&report](const std::string& message) {
    report.warnings.push_back(message);
  };

  const EvolutionConfig& evo = config.evolution;
  if (evo.population < evo.tournament_size) {
    error("population P=" + std::to_string(evo.population) +
          " must be >= tournament size " +
          std::to_string(evo.tournament_size));
  }
  if (evo.tournaments < 1) error("tournaments_per_generation must be >= 1");
  if (evo.workers < 1) error("workers must be >= 1");
  if (evo.max_generations < 1) error("max_generations must be >= 1");
  if (!config.wall_clock_seeds &&
      evo.population < evo.tournament_size + evo.workers - 1) {
    error("deterministic scheduling needs P >= tournament_size + workers - 1 "
          "(= " +
          std::to_string(evo.tournament_size + evo.workers - 1) +
          "); lower workers or raise population");
  }
  if (evo.lease_seconds < 0.0) error("lease_seconds must be >= 0");

  if (!config.seed_set && !config.wall_clock_seeds) {
    error("a master seed is required unless --wall-clock-seeds is given");
  }

  const TrainConfig& train = config.training;
  if (train.num_envs < 1) error("num_envs must be >= 1");
  if (train.horizon < 1) error("horizon must be >= 1");
  if (train.ppo.total_steps < 1) error("total_steps must be >= 1");
  if (train.ppo.fitness_window_fraction <= 0.0 ||
      train.ppo.fitness_window_fraction > 1.0) {
    error("fitness_window_fraction must be in (0, 1]");
  }
  if (train.ppo.clip_epsilon <= 0.0 || train.ppo.clip_epsilon >= 1.0) {
    error("clip_epsilon must be in (0, 1)");
  }
  if (train.ppo.gae_gamma <= 0.0 || train.ppo.gae_gamma > 1.0) {
    error("gae_gamma must be in (0, 1]");
  }
  if (train.ppo.gae_lambda <= 0.0 || train.ppo.gae_lambda > 1.0) {
    error("gae_lambda must be in (0, 1]");
  }
  if (train.ppo.epochs < 1) error("epochs must be >= 1");
  if (train.ppo.minibatches < 1) error("minibatches must be >= 1");

  const WorldConfig& world = train.env.world;
  if (!(world.dt > 0.0)) error("dt must be > 0");
  if (world.contact_stiffness < 0.0) error("contact_stiffness must be >= 0");
  if (world.contact_damping < 0.0) error("contact_damping must be >= 0");
  if (!(world.arena_radius > 0.0)) error("arena_radius must be > 0");
  if (train.env.max_episode_steps < 1) error("max_episode_steps must be >= 1");

  const RewardWeights& reward = train.env.reward;
  if (reward.alive < 0.0) error("reward.alive must be >= 0");
  if (reward.death > 0.0) error("reward.death must be <= 0");
  for (double w : {reward.progress, reward.alive, reward.upright,
                   reward.heading, reward.effort, reward.action, reward.dof,
                   reward.death}) {
    if (!std::isfinite(w)) error("reward weights must be finite");
  }

  const ScalingCheck scaling =
      validate_scaling(train.num_envs, train.horizon);
  if (!scaling.ok && !config.allow_any_scaling) {
    warn(scaling.message + "; set allow_any_scaling = true to silence");
  }
  if (train.ppo.total_steps % train.num_envs != 0) {
    warn("total_steps is not a multiple of num_envs; training consumes " +
         std::to_string(effective_total_steps(train.ppo, train.num_envs)) +
         " steps (rounded up)");
  }
  return report;
}

void finalize_config(RunConfig& config) {
  config.evolution.master_seed = config.seed;
  config.evolution.deterministic = !config.wall_clock_seeds;
}

}  // namespace evoloco
