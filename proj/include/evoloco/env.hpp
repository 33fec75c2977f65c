#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evoloco/physics.hpp"
#include "evoloco/rng.hpp"

namespace evoloco {

// Layout of the flat observation vector for a body with A joints and F feet.
// Planar reduction of the usual proprioceptive stack; total 7 + 3A + 2F.
struct ObservationLayout {
  int num_joints = 0;
  int num_feet = 0;

  static constexpr int kHeadHeight = 0;
  static constexpr int kHeadVelocity = 1;       // 2 entries
  static constexpr int kHeadAngularVelocity = 3;
  static constexpr int kAngleToTarget = 4;
  static constexpr int kUpProjection = 5;
  static constexpr int kHeadingProjection = 6;
  static constexpr int kFixedCount = 7;

  int joint_positions() const { return kFixedCount; }
  int joint_velocities() const { return kFixedCount + num_joints; }
  int foot_normal_forces() const { return kFixedCount + 2 * num_joints; }
  int foot_tangential_forces() const {
    return kFixedCount + 2 * num_joints + num_feet;
  }
  int previous_actions() const {
    return kFixedCount + 2 * num_joints + 2 * num_feet;
  }
  int size() const { return kFixedCount + 3 * num_joints + 2 * num_feet; }
};

struct RewardWeights {
  double progress = 1.0;  // per m/s toward the target
  double alive = 0.5;
  double upright = 0.1;
  double heading = 0.1;
  double effort = 0.005;  // per squared torque
  double action = 0.005;  // per squared action
  double dof = 0.1;       // per joint at a limit
  double death = -2.0;    // one-time penalty
};

struct RewardBreakdown {
  double progress = 0.0;
  double alive = 0.0;
  double upright = 0.0;
  double heading = 0.0;
  double effort = 0.0;
  double action = 0.0;
  double dof = 0.0;
  double death = 0.0;

  double total() const {
    return progress + alive + upright + heading + effort + action + dof +
           death;
  }
};

struct EnvConfig {
  WorldConfig world;
  RewardWeights reward;
  int max_episode_steps = 1000;
  double target_x = 10.0;  // fixed target on the ground plane
};

struct EpisodeState {
  ArticulatedBody body;
  int step_count = 0;
  double initial_head_height = 0.0;
  double termination_height = 0.0;
  Vec2 target;
  std::vector<double> previous_action;
  std::vector<double> last_observation;
  double episode_return = 0.0;
  bool done = false;
  bool diverged = false;
  Rng noise_stream{0};  // per-instance stream for policy exploration
};

struct StepOutput {
  std::vector<double> observation;
  double reward = 0.0;
  bool done = false;
  RewardBreakdown breakdown;
  bool diverged = false;
  bool boundary = false;
};

ObservationLayout observation_layout(const MorphologyGenome& genome);

EpisodeState reset(const MorphologyGenome& genome, const EnvConfig& config,
                   std::uint64_t seed);

// Applies one action (clamped to [-1, 1] per joint, scaled by the joint
// torque limits), steps the simulation and computes the reward. Calling on a
// terminated episode is a no-op with zero reward.
StepOutput env_step(EpisodeState& state, std::span<const double> action,
                    const EnvConfig& config);

// Reward for a post-step state; exposed separately so the term structure is
// testable.
RewardBreakdown compute_reward(const EpisodeState& state,
                               std::span<const double> action,
                               std::span<const double> torques,
                               const EnvConfig& config);

struct VectorStepResult {
  std::vector<double> observations;  // M x obs_dim
  std::vector<double> rewards;       // M
  std::vector<std::uint8_t> dones;   // M
  // Observation of the terminal state for instances that auto-reset this
  // step (empty for the others).
  std::vector<std::vector<double>> terminal_observations;
  bool any_diverged = false;
};

// M independent episode instances of one genome. Instances never interact
// and auto-reset on termination; outputs are ordered by instance index so a
// batched step is identical to stepping the instances one by one.
class VectorEnv {
 public:
  VectorEnv(MorphologyGenome genome, EnvConfig config,
            std::vector<std::uint64_t> instance_seeds);
  VectorEnv(MorphologyGenome genome, EnvConfig config, int num_instances,
            std::uint64_t seed);

  static std::uint64_t instance_seed(std::uint64_t master, int instance) {
    return derive_seed(master, 0x656e76ULL, static_cast<std::uint64_t>(instance));
  }

  std::vector<double> reset_all();
  VectorStepResult step(std::span<const double> actions);  // M x A, row-major

  int num_instances() const { return static_cast<int>(instances_.size()); }
  int obs_dim() const { return layout_.size(); }
  int action_dim() const { return layout_.num_joints; }
  const ObservationLayout& layout() const { return layout_; }
  Rng& instance_rng(int i) { return instances_[i].noise_stream; }
  const EpisodeState& instance(int i) const { return instances_[i]; }
  const MorphologyGenome& genome() const { return genome_; }

 private:
  MorphologyGenome genome_;
  EnvConfig config_;
  ObservationLayout layout_;
  std::vector<std::uint64_t> seeds_;
  std::vector<EpisodeState> instances_;
};

struct ScalingCheck {
  bool ok = true;
  std::string message;
};

// The reference experience budget per update is envs * horizon = 2048 * 64.
// Other combinations train on a different effective horizon and are flagged.
ScalingCheck validate_scaling(int num_envs, int horizon);

inline constexpr long long kScalingProduct = 2048LL * 64LL;

}  // namespace evoloco
