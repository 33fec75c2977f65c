#include "evoloco/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace evoloco {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// log(1 - tanh(u)^2), evaluated stably
double log_one_minus_tanh_sq(double u) {
  return 2.0 * (std::log(2.0) - u - softplus(-2.0 * u));
}

double gaussian_entropy(std::span<const double> log_std) {
  double entropy = 0.0;
  for (double ls : log_std) entropy += ls + 0.5 * (1.0 + kLog2Pi);
  return entropy;
}

double value_forward(const PolicyParams& params,
                     std::span<const double> normalized_obs) {
  double value = 0.0;
  mlp_forward(params.value_spec, params.value_params(), normalized_obs,
              {&value, 1});
  return value;
}

}  // namespace

double action_log_prob(std::span<const double> mean,
                       std::span<const double> log_std,
                       std::span<const double> pre_squash) {
  double log_prob = 0.0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const double sigma = std::exp(log_std[j]);
    const double z = (pre_squash[j] - mean[j]) / sigma;
    log_prob += -0.5 * z * z - log_std[j] - 0.5 * kLog2Pi;
    log_prob -= log_one_minus_tanh_sq(pre_squash[j]);
  }
  return log_prob;
}

ActResult act(const PolicyParams& params, std::span<const double> observation,
              Rng& rng) {
  ActResult result;
  std::vector<double> normalized(params.obs_dim);
  params.obs_normalizer.normalize(observation, normalized);

  std::vector<double> mean(params.action_dim);
  mlp_forward(params.policy_spec, params.policy_params(), normalized, mean);

  result.action.resize(params.action_dim);
  result.pre_squash.resize(params.action_dim);
  const auto log_std = params.log_std();
  for (int j = 0; j < params.action_dim; ++j) {
    const double sigma = std::exp(log_std[j]);
    result.pre_squash[j] = mean[j] + sigma * rng.normal();
    result.action[j] = std::tanh(result.pre_squash[j]);
  }
  result.log_prob = action_log_prob(mean, log_std, result.pre_squash);
  result.value = value_forward(params, normalized);

  result.finite = std::isfinite(result.log_prob) && std::isfinite(result.value);
  for (double v : mean) result.finite = result.finite && std::isfinite(v);
  result.normalized_observation = std::move(normalized);
  return result;
}

GaeResult compute_gae(const TrajectoryBuffer& buffer,
                      std::span<const double> last_values, double gamma,
                      double lambda) {
  GaeResult out;
  out.advantages.assign(buffer.size(), 0.0);
  out.returns.assign(buffer.size(), 0.0);
  const int m_count = buffer.num_envs;
  for (int m = 0; m < m_count; ++m) {
    double carry = 0.0;
    for (int t = buffer.horizon - 1; t >= 0; --t) {
      const std::size_t idx = static_cast<std::size_t>(t) * m_count + m;
      const double nonterminal = buffer.dones[idx] ? 0.0 : 1.0;
      const double next_value =
          t + 1 < buffer.horizon
              ? buffer.values[static_cast<std::size_t>(t + 1) * m_count + m]
              : last_values[m];
      const double delta = buffer.rewards[idx] +
                           gamma * next_value * nonterminal -
                           buffer.values[idx];
      carry = delta + gamma * lambda * nonterminal * carry;
      out.advantages[idx] = carry;
      out.returns[idx] = carry + buffer.values[idx];
    }
  }
  return out;
}

void normalize_advantages(std::span<double> advantages) {
  if (advantages.empty()) return;
  const double n = static_cast<double>(advantages.size());
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  var /= n;
  const double denom = std::sqrt(var) + 1.0e-8;
  for (double& a : advantages) a = (a - mean) / denom;
}

LossParts ppo_loss_and_grad(const PolicyParams& params,
                            const MinibatchView& batch,
                            const PPOConfig& config, std::span<double> grads) {
  LossParts parts;
  const TrajectoryBuffer& buffer = *batch.buffer;
  const std::size_t n = batch.indices.size();
  if (n == 0) return parts;
  const double inv_n = 1.0 / static_cast<double>(n);
  const int act_dim = buffer.act_dim;
  const auto log_std = params.log_std();
  const std::size_t log_std_offset = params.policy_spec.param_count();
  const std::size_t value_offset = log_std_offset + act_dim;

  std::span<double> policy_grads = grads.subspan(0, log_std_offset);
  std::span<double> log_std_grads = grads.subspan(log_std_offset, act_dim);
  std::span<double> value_grads = grads.subspan(value_offset);

  std::vector<double> mean(act_dim);
  std::vector<double> d_mean(act_dim);
  MlpCache policy_cache, value_cache;
  int clipped_count = 0;

  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t idx = batch.indices[k];
    const std::span<const double> obs(
        buffer.observations.data() + idx * buffer.obs_dim, buffer.obs_dim);
    const std::span<const double> u(buffer.pre_squash.data() + idx * act_dim,
                                    act_dim);
    const double advantage = batch.advantages[k];

    mlp_forward(params.policy_spec, params.policy_params(), obs, mean,
                &policy_cache);
    const double new_log_prob = action_log_prob(mean, log_std, u);
    const double log_ratio = new_log_prob - buffer.log_probs[idx];
    const double ratio = std::exp(log_ratio);
    const double clamped_ratio = std::clamp(ratio, 1.0 - config.clip_epsilon,
                                            1.0 + config.clip_epsilon);
    const double unclipped = ratio * advantage;
    const double clipped = clamped_ratio * advantage;
    parts.policy_loss += -std::min(unclipped, clipped) * inv_n;
    parts.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;
    if (std::abs(ratio - 1.0) > config.clip_epsilon) ++clipped_count;

    // gradient flows through the ratio only when the unclipped branch is
    // selected by the min
    double d_log_prob = 0.0;
    if (unclipped <= clipped) {
      d_log_prob = -advantage * ratio * inv_n;
    } else {
      parts.max_clipped_ratio_dev =
          std::max(parts.max_clipped_ratio_dev, std::abs(clamped_ratio - 1.0));
    }

    if (d_log_prob != 0.0) {
      for (int j = 0; j < act_dim; ++j) {
        const double sigma = std::exp(log_std[j]);
        const double z = (u[j] - mean[j]) / sigma;
        d_mean[j] = d_log_prob * z / sigma;
        log_std_grads[j] += d_log_prob * (z * z - 1.0);
      }
      mlp_backward(params.policy_spec, params.policy_params(), obs,
                   policy_cache, d_mean, policy_grads);
    }

    // value loss: mean squared error to the returns
    double value = 0.0;
    mlp_forward(params.value_spec, params.value_params(), obs, {&value, 1},
                &value_cache);
    const double diff = value - batch.returns[k];
    parts.value_loss += diff * diff * inv_n;
    const double d_value = config.value_coeff * 2.0 * diff * inv_n;
    mlp_backward(params.value_spec, params.value_params(), obs, value_cache,
                 {&d_value, 1}, value_grads);
  }

  parts.entropy = gaussian_entropy(log_std);
  if (config.entropy_coeff != 0.0) {
    for (int j = 0; j < act_dim; ++j) {
      log_std_grads[j] -= config.entropy_coeff;
    }
  }
  parts.clip_fraction = static_cast<double>(clipped_count) * inv_n;
  parts.total = parts.policy_loss + config.value_coeff * parts.value_loss -
                config.entropy_coeff * parts.entropy;
  parts.finite = std::isfinite(parts.total);
  return parts;
}

UpdateDiagnostics ppo_update(PolicyParams& params,
                             const TrajectoryBuffer& buffer,
                             std::span<const double> advantages,
                             std::span<const double> returns,
                             const PPOConfig& config, Adam& adam,
                             double learning_rate, Rng& shuffle_rng) {
  UpdateDiagnostics diag;
  const std::size_t n = buffer.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> grads(params.flat.size(), 0.0);
  std::vector<double> mb_adv, mb_ret;
  const int mb_count = std::max(1, std::min<int>(config.minibatches,
                                                 static_cast<int>(n)));
  int updates = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the explicit rng (std::shuffle is not portable
    // across standard libraries)
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = shuffle_rng.uniform_below(i + 1);
      std::swap(order[i], order[j]);
    }
    std::size_t cursor = 0;
    for (int mb = 0; mb < mb_count; ++mb) {
      const std::size_t size = n / mb_count + (mb < static_cast<int>(n % mb_count) ? 1 : 0);
      const std::span<const std::size_t> indices(order.data() + cursor, size);
      cursor += size;
      mb_adv.resize(size);
      mb_ret.resize(size);
      for (std::size_t k = 0; k < size; ++k) {
        mb_adv[k] = advantages[indices[k]];
        mb_ret[k] = returns[indices[k]];
      }
      std::fill(grads.begin(), grads.end(), 0.0);
      MinibatchView view{&buffer, indices, mb_adv, mb_ret};
      const LossParts parts = ppo_loss_and_grad(params, view, config, grads);
      if (!parts.finite) {
        diag.diverged = true;
        return diag;
      }
      double norm_sq = 0.0;
      for (double g : grads) norm_sq += g * g;
      const double norm = std::sqrt(norm_sq);
      if (norm > config.max_grad_norm && norm > 0.0) {
        const double scale = config.max_grad_norm / norm;
        for (double& g : grads) g *= scale;
      }
      adam.step(params.flat, grads, learning_rate);
      params.clamp_log_std();
      ++updates;
      diag.policy_loss += parts.policy_loss;
      diag.value_loss += parts.value_loss;
      diag.entropy += parts.entropy;
      diag.clip_fraction += parts.clip_fraction;
      diag.approx_kl += parts.approx_kl;
      diag.max_clipped_ratio_dev =
          std::max(diag.max_clipped_ratio_dev, parts.max_clipped_ratio_dev);
    }
  }
  if (updates > 0) {
    diag.policy_loss /= updates;
    diag.value_loss /= updates;
    diag.entropy /= updates;
    diag.clip_fraction /= updates;
    diag.approx_kl /= updates;
  }
  if (!params.finite()) diag.diverged = true;
  return diag;
}

long long effective_total_steps(const PPOConfig& config, int num_envs) {
  const long long m = num_envs;
  return (config.total_steps + m - 1) / m * m;
}

TrainOutcome train_agent(const MorphologyGenome& genome,
                         const TrainConfig& config, std::uint64_t seed) {
  const int m_count = config.num_envs;
  VectorEnv venv(genome, config.env, m_count, seed);
  const int obs_dim = venv.obs_dim();
  const int act_dim = venv.action_dim();

  Rng init_rng(derive_seed(seed, 0x696e6974ULL));
  Rng shuffle_rng(derive_seed(seed, 0x73687566ULL));
  PolicyParams params =
      PolicyParams::init(obs_dim, act_dim, config.ppo.hidden_sizes, init_rng);
  Adam adam(params.flat.size());

  const long long effective = effective_total_steps(config.ppo, m_count);
  const long long vector_steps_total = effective / m_count;
  const long long window_steps = std::clamp<long long>(
      std::llround(config.ppo.fitness_window_fraction *
                   static_cast<double>(effective)),
      1, effective);

  TrainOutcome outcome{FitnessReport{}, std::move(params)};
  PolicyParams& policy = outcome.params;
  FitnessReport& report = outcome.report;
  report.window_steps = window_steps;

  // trailing per-step rewards, chronological, capacity window_steps
  std::vector<double> window(window_steps, 0.0);
  long long window_filled = 0, window_pos = 0;
  auto push_window = [&](double reward) {
    window[window_pos] = reward;
    window_pos = (window_pos + 1) % window_steps;
    if (window_filled < window_steps) ++window_filled;
  };

  std::vector<double> raw_obs = venv.reset_all();
  for (int m = 0; m < m_count; ++m) {
    policy.obs_normalizer.update(
        {raw_obs.data() + static_cast<std::size_t>(m) * obs_dim,
         static_cast<std::size_t>(obs_dim)});
  }

  std::vector<double> actions(static_cast<std::size_t>(m_count) * act_dim);
  std::vector<double> last_values(m_count);
  std::vector<double> normalized(obs_dim);
  long long consumed = 0;  // vector steps
  int iteration = 0;
  bool diverged = false;

  while (consumed < vector_steps_total && !diverged) {
    const int horizon =
        static_cast<int>(std::min<long long>(config.horizon,
                                             vector_steps_total - consumed));
    TrajectoryBuffer buffer(m_count, horizon, obs_dim, act_dim);
    double reward_sum = 0.0;

    for (int t = 0; t < horizon && !diverged; ++t) {
      for (int m = 0; m < m_count; ++m) {
        const std::span<const double> obs(
            raw_obs.data() + static_cast<std::size_t>(m) * obs_dim,
            static_cast<std::size_t>(obs_dim));
        ActResult res = act(policy, obs, venv.instance_rng(m));
        if (!res.finite) {
          diverged = true;
          break;
        }
        const std::size_t idx = static_cast<std::size_t>(t) * m_count + m;
        std::copy(res.normalized_observation.begin(),
                  res.normalized_observation.end(),
                  buffer.observations.begin() + idx * obs_dim);
        std::copy(res.pre_squash.begin(), res.pre_squash.end(),
                  buffer.pre_squash.begin() + idx * act_dim);
        buffer.log_probs[idx] = res.log_prob;
        buffer.values[idx] = res.value;
        std::copy(res.action.begin(), res.action.end(),
                  actions.begin() + static_cast<std::size_t>(m) * act_dim);
      }
      if (diverged) break;

      VectorStepResult sr = venv.step(actions);
      for (int m = 0; m < m_count; ++m) {
        const std::size_t idx = static_cast<std::size_t>(t) * m_count + m;
        buffer.rewards[idx] = sr.rewards[m];
        buffer.dones[idx] = sr.dones[m];
        reward_sum += sr.rewards[m];
        push_window(sr.rewards[m]);
        policy.obs_normalizer.update(
            {sr.observations.data() + static_cast<std::size_t>(m) * obs_dim,
             static_cast<std::size_t>(obs_dim)});
      }
      raw_obs = std::move(sr.observations);
    }
    if (diverged) break;

    for (int m = 0; m < m_count; ++m) {
      const std::span<const double> obs(
          raw_obs.data() + static_cast<std::size_t>(m) * obs_dim,
          static_cast<std::size_t>(obs_dim));
      policy.obs_normalizer.normalize(obs, normalized);
      last_values[m] = value_forward(policy, normalized);
    }

    GaeResult gae = compute_gae(buffer, last_values, config.ppo.gae_gamma,
                                config.ppo.gae_lambda);
    normalize_advantages(gae.advantages);

    double lr = config.ppo.learning_rate;
    if (config.ppo.anneal_lr) {
      lr *= 1.0 - static_cast<double>(consumed) /
                      static_cast<double>(vector_steps_total);
    }
    const UpdateDiagnostics diag =
        ppo_update(policy, buffer, gae.advantages, gae.returns, config.ppo,
                   adam, lr, shuffle_rng);
    if (diag.diverged) {
      diverged = true;
      break;
    }

    consumed += horizon;
    ++iteration;
    report.curve.push_back(
        {iteration, reward_sum / static_cast<double>(buffer.size()),
         consumed * m_count});
  }

  report.diverged = diverged;
  report.total_steps = consumed * m_count;
  if (diverged || window_filled == 0) {
    report.fitness = -std::numeric_limits<double>::infinity();
    report.diverged = true;
  } else {
    double sum = 0.0;
    for (long long i = 0; i < window_filled; ++i) sum += window[i];
    report.fitness = sum / static_cast<double>(window_filled);
  }
  return outcome;
}

double zero_policy_baseline(const MorphologyGenome& genome,
                            const EnvConfig& config, long long window_steps) {
  VectorEnv venv(genome, config, 1, 0);
  const std::vector<double> actions(venv.action_dim(), 0.0);
  venv.reset_all();
  double sum = 0.0;
  for (long long t = 0; t < window_steps; ++t) {
    const VectorStepResult sr = venv.step(actions);
    sum += sr.rewards[0];
  }
  return window_steps > 0 ? sum / static_cast<double>(window_steps) : 0.0;
}

}  // namespace evoloco
