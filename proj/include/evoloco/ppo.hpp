#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evoloco/env.hpp"
#include "evoloco/nn.hpp"

namespace evoloco {

struct PPOConfig {
  double clip_epsilon = 0.2;
  double gae_gamma = 0.99;
  double gae_lambda = 0.95;
  int epochs = 4;
  int minibatches = 4;
  double learning_rate = 3.0e-4;
  bool anneal_lr = true;  // linear decay to zero over total_steps
  double value_coeff = 1.0;
  double entropy_coeff = 0.0;
  double max_grad_norm = 1.0;
  long long total_steps = 200000;
  double fitness_window_fraction = 0.1;
  std::vector<int> hidden_sizes = {64, 64};
};

struct TrainConfig {
  EnvConfig env;
  PPOConfig ppo;
  int num_envs = 64;
  int horizon = 32;
};

// Experience for one update: num_envs instances by `horizon` steps, stored
// step-major (index t * num_envs + m).
struct TrajectoryBuffer {
  int num_envs = 0;
  int horizon = 0;
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<double> observations;  // normalized, as the policy saw them
  std::vector<double> pre_squash;    // gaussian sample before tanh
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;

  TrajectoryBuffer(int envs, int steps, int obs, int act)
      : num_envs(envs), horizon(steps), obs_dim(obs), act_dim(act) {
    const std::size_t n = static_cast<std::size_t>(envs) * steps;
    observations.resize(n * obs);
    pre_squash.resize(n * act);
    log_probs.resize(n);
    values.resize(n);
    rewards.resize(n);
    dones.resize(n);
  }

  std::size_t size() const {
    return static_cast<std::size_t>(num_envs) * horizon;
  }
};

struct ActResult {
  std::vector<double> action;      // tanh-squashed, in [-1, 1]
  std::vector<double> pre_squash;  // gaussian sample
  std::vector<double> normalized_observation;  // what the networks consumed
  double log_prob = 0.0;
  double value = 0.0;
  bool finite = true;
};

// Samples from the tanh-squashed diagonal Gaussian policy. `observation` is
// the raw environment observation; normalization happens inside using the
// (frozen) running statistics.
ActResult act(const PolicyParams& params, std::span<const double> observation,
              Rng& rng);

// Log-density of a stored pre-squash sample under the current parameters,
// including the tanh change-of-variables term.
double action_log_prob(std::span<const double> mean,
                       std::span<const double> log_std,
                       std::span<const double> pre_squash);

struct GaeResult {
  std::vector<double> advantages;  // raw (unnormalized)
  std::vector<double> returns;
};

GaeResult compute_gae(const TrajectoryBuffer& buffer,
                      std::span<const double> last_values, double gamma,
                      double lambda);

// Zero-mean unit-variance normalization applied once per update.
void normalize_advantages(std::span<double> advantages);

// One minibatch of flattened sample indices into a TrajectoryBuffer plus the
// advantage/return targets for those samples.
struct MinibatchView {
  const TrajectoryBuffer* buffer = nullptr;
  std::span<const std::size_t> indices;
  std::span<const double> advantages;  // aligned with indices
  std::span<const double> returns;
};

struct LossParts {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double max_clipped_ratio_dev = 0.0;  // max |clip(r)-1| on clipped samples
  bool finite = true;
};

// Clipped-surrogate PPO loss and its analytic gradient over one minibatch.
// grads must be zero-initialized with params.flat.size() entries.
LossParts ppo_loss_and_grad(const PolicyParams& params,
                            const MinibatchView& batch,
                            const PPOConfig& config, std::span<double> grads);

struct UpdateDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double max_clipped_ratio_dev = 0.0;
  bool diverged = false;
};

// Runs the configured epochs of shuffled minibatch updates in place.
// `advantages` must already be normalized.
UpdateDiagnostics ppo_update(PolicyParams& params,
                             const TrajectoryBuffer& buffer,
                             std::span<const double> advantages,
                             std::span<const double> returns,
                             const PPOConfig& config, Adam& adam,
                             double learning_rate, Rng& shuffle_rng);

struct CurvePoint {
  int iteration = 0;
  double mean_reward = 0.0;
  long long steps = 0;  // cumulative environment steps
};

struct FitnessReport {
  double fitness = 0.0;  // mean per-step reward over the trailing window
  long long window_steps = 0;
  long long total_steps = 0;  // environment steps actually consumed
  bool diverged = false;
  std::vector<CurvePoint> curve;
};

struct TrainOutcome {
  FitnessReport report;
  PolicyParams params;
};

// Individual learning: PPO over the vectorized environment until the
// configured number of environment steps is consumed. Pure function of
// (genome, config, seed).
TrainOutcome train_agent(const MorphologyGenome& genome,
                         const TrainConfig& config, std::uint64_t seed);

// Mean per-step reward of the all-zeros policy over `window_steps` steps of
// a single environment instance; the no-learning reference point.
double zero_policy_baseline(const MorphologyGenome& genome,
                            const EnvConfig& config, long long window_steps);

// Environment steps per update round and the number of rounds needed to
// consume total_steps (the last round may be shorter).
long long effective_total_steps(const PPOConfig& config, int num_envs);

}  // namespace evoloco
