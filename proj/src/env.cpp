#include "evoloco/env.hpp"

#include <algorithm>
#include <cmath>

namespace evoloco {

namespace {

constexpr double kHeadingSpeedDeadzone = 1.0e-3;  // m/s
constexpr double kForceScale = 1.0e-3;            // report forces in kN
constexpr double kDofLimitFraction = 0.01;

std::vector<double> assemble_observation(
    const EpisodeState& state, const ObservationLayout& layout,
    const std::vector<ContactReading>& contacts) {
  std::vector<double> obs(layout.size(), 0.0);
  const HeadPose head = head_pose(state.body);
  const Vec2 to_target = state.target - state.body.bodies.front().position;

  obs[ObservationLayout::kHeadHeight] = head.height;
  obs[ObservationLayout::kHeadVelocity] = head.velocity.x;
  obs[ObservationLayout::kHeadVelocity + 1] = head.velocity.y;
  obs[ObservationLayout::kHeadAngularVelocity] = head.angular_velocity;
  obs[ObservationLayout::kAngleToTarget] = std::atan2(to_target.y, to_target.x);
  obs[ObservationLayout::kUpProjection] = head.up_projection;

  const double speed = head.velocity.norm();
  double heading = 0.0;
  if (speed >= kHeadingSpeedDeadzone) {
    const double dist = to_target.norm();
    if (dist > 0.0) {
      heading = dot(head.velocity, to_target) / (speed * dist);
    }
  }
  obs[ObservationLayout::kHeadingProjection] = heading;

  for (int j = 0; j < layout.num_joints; ++j) {
    obs[layout.joint_positions() + j] = state.body.joints[j].angle;
    obs[layout.joint_velocities() + j] = state.body.joints[j].velocity;
  }
  for (int f = 0; f < layout.num_feet; ++f) {
    const ContactReading reading =
        f < static_cast<int>(contacts.size()) ? contacts[f] : ContactReading{};
    obs[layout.foot_normal_forces() + f] = reading.normal_force * kForceScale;
    obs[layout.foot_tangential_forces() + f] =
        reading.tangential_force * kForceScale;
  }
  for (int j = 0; j < layout.num_joints; ++j) {
    obs[layout.previous_actions() + j] = state.previous_action[j];
  }
  return obs;
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

ObservationLayout observation_layout(const MorphologyGenome& genome) {
  ObservationLayout layout;
  layout.num_joints = static_cast<int>(genome.limb_count()) - 1;
  layout.num_feet = 0;
  for (const auto& [id, gene] : genome.limbs) {
    if (gene.is_foot) ++layout.num_feet;
  }
  return layout;
}

EpisodeState reset(const MorphologyGenome& genome, const EnvConfig& config,
                   std::uint64_t seed) {
  EpisodeState state;
  state.body = instantiate(genome, config.world);
  state.target = {config.target_x, 0.0};
  state.initial_head_height = head_pose(state.body).height;
  state.termination_height = 0.5 * state.initial_head_height;
  state.previous_action.assign(state.body.joint_count(), 0.0);
  state.noise_stream = Rng(seed);
  const ObservationLayout layout = observation_layout(genome);
  state.last_observation = assemble_observation(state, layout, {});
  return state;
}

RewardBreakdown compute_reward(const EpisodeState& state,
                               std::span<const double> action,
                               std::span<const double> torques,
                               const EnvConfig& config) {
  const RewardWeights& w = config.reward;
  RewardBreakdown r;
  const HeadPose head = head_pose(state.body);
  const Vec2 to_target = state.target - state.body.bodies.front().position;
  const double dist = to_target.norm();
  const Vec2 direction = dist > 0.0 ? to_target * (1.0 / dist) : Vec2{1.0, 0.0};

  r.progress = w.progress * dot(head.velocity, direction);
  r.upright = w.upright * head.up_projection;

  const double speed = head.velocity.norm();
  if (speed >= kHeadingSpeedDeadzone) {
    r.heading = w.heading * (dot(head.velocity, direction) / speed);
  }

  double effort = 0.0;
  for (double tau : torques) effort += tau * tau;
  r.effort = -w.effort * effort;

  double act = 0.0;
  for (double a : action) act += a * a;
  r.action = -w.action * act;

  int at_limit = 0;
  for (const JointState& joint : state.body.joints) {
    const double margin = kDofLimitFraction * (joint.limit_hi - joint.limit_lo);
    if (joint.angle - joint.limit_lo <= margin ||
        joint.limit_hi - joint.angle <= margin) {
      ++at_limit;
    }
  }
  r.dof = -w.dof * at_limit;

  // Eq-style alive/death indicators, exclusive with the alive branch taken
  // at exact equality.
  if (head.height >= state.termination_height) {
    r.alive = w.alive;
  } else {
    r.death = w.death;
  }
  return r;
}

StepOutput env_step(EpisodeState& state, std::span<const double> action,
                    const EnvConfig& config) {
  StepOutput out;
  if (state.done) {
    out.observation = state.last_observation;
    out.done = true;
    return out;
  }

  const int num_joints = state.body.joint_count();
  std::vector<double> clamped(num_joints, 0.0);
  std::vector<double> torques(num_joints, 0.0);
  for (int j = 0; j < num_joints; ++j) {
    clamped[j] = std::clamp(j < static_cast<int>(action.size()) ? action[j] : 0.0,
                            -1.0, 1.0);
    torques[j] = clamped[j] * state.body.joints[j].torque_limit;
  }

  const StepResult sim = step(state.body, torques, config.world);
  state.step_count += 1;
  state.previous_action = clamped;

  if (sim.diverged) {
    state.done = true;
    state.diverged = true;
    out.reward = config.reward.death;
    out.breakdown.death = config.reward.death;
    out.done = true;
    out.diverged = true;
    out.observation = state.last_observation;
    state.episode_return += out.reward;
    return out;
  }

  const ObservationLayout layout{num_joints,
                                 static_cast<int>(state.body.foot_count())};
  out.observation = assemble_observation(state, layout, sim.foot_contacts);
  if (!all_finite(out.observation)) {
    state.done = true;
    state.diverged = true;
    out.reward = config.reward.death;
    out.breakdown.death = config.reward.death;
    out.done = true;
    out.diverged = true;
    out.observation = state.last_observation;
    state.episode_return += out.reward;
    return out;
  }
  state.last_observation = out.observation;

  out.breakdown = compute_reward(state, clamped, torques, config);
  out.reward = out.breakdown.total();
  out.boundary = sim.boundary_crossed;

  const double height = head_pose(state.body).height;
  const bool height_done = height <= state.termination_height;
  const bool timeout = state.step_count >= config.max_episode_steps;
  out.done = height_done || sim.boundary_crossed || timeout;
  state.done = out.done;
  state.episode_return += out.reward;
  return out;
}

VectorEnv::VectorEnv(MorphologyGenome genome, EnvConfig config,
                     std::vector<std::uint64_t> instance_seeds)
    : genome_(std::move(genome)), config_(config),
      layout_(observation_layout(genome_)), seeds_(std::move(instance_seeds)) {
  instances_.reserve(seeds_.size());
  for (std::uint64_t seed : seeds_) {
    instances_.push_back(reset(genome_, config_, seed));
  }
}

VectorEnv::VectorEnv(MorphologyGenome genome, EnvConfig config,
                     int num_instances, std::uint64_t seed)
    : VectorEnv(std::move(genome), config, [&] {
        std::vector<std::uint64_t> seeds(num_instances);
        for (int i = 0; i < num_instances; ++i) seeds[i] = instance_seed(seed, i);
        return seeds;
      }()) {}

std::vector<double> VectorEnv::reset_all() {
  std::vector<double> obs;
  obs.reserve(instances_.size() * layout_.size());
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    // keep each instance's exploration stream; only the episode restarts
    Rng stream = instances_[i].noise_stream;
    instances_[i] = reset(genome_, config_, seeds_[i]);
    instances_[i].noise_stream = stream;
    obs.insert(obs.end(), instances_[i].last_observation.begin(),
               instances_[i].last_observation.end());
  }
  return obs;
}

VectorStepResult VectorEnv::step(std::span<const double> actions) {
  const int m = num_instances();
  const int a = action_dim();
  VectorStepResult result;
  result.observations.resize(static_cast<std::size_t>(m) * layout_.size());
  result.rewards.resize(m);
  result.dones.resize(m);
  result.terminal_observations.resize(m);

  for (int i = 0; i < m; ++i) {
    EpisodeState& inst = instances_[i];
    StepOutput out = env_step(
        inst, actions.subspan(static_cast<std::size_t>(i) * a, a), config_);
    result.rewards[i] = out.reward;
    result.dones[i] = out.done ? 1 : 0;
    result.any_diverged = result.any_diverged || out.diverged;
    const double* obs_src = out.observation.data();
    if (out.done) {
      result.terminal_observations[i] = std::move(out.observation);
      Rng stream = inst.noise_stream;
      inst = reset(genome_, config_, seeds_[i]);
      inst.noise_stream = stream;
      obs_src = inst.last_observation.data();
    }
    std::copy(obs_src, obs_src + layout_.size(),
              result.observations.begin() +
                  static_cast<std::size_t>(i) * layout_.size());
  }
  return result;
}

ScalingCheck validate_scaling(int num_envs, int horizon) {
  const long long product =
      static_cast<long long>(num_envs) * static_cast<long long>(horizon);
  if (product == kScalingProduct) return {true, ""};
  return {false,
          "envs*horizon = " + std::to_string(product) + " differs from the "
          "reference budget " + std::to_string(kScalingProduct) +
          " (e.g. 2048x64, 8192x16); the effective RL horizon changes"};
}

}  // namespace evoloco
