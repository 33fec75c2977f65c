#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evoloco/rng.hpp"

namespace evoloco {

// Fully-connected network description: tanh hidden layers, linear output.
// Parameters live in an external flat array, laid out per layer as a
// row-major weight matrix followed by the bias vector.
struct MlpSpec {
  std::vector<int> sizes;  // [input, hidden..., output]

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  int layer_count() const { return static_cast<int>(sizes.size()) - 1; }
  int param_count() const;
};

struct MlpCache {
  std::vector<std::vector<double>> post;  // post[l] = activated layer output
};

void mlp_forward(const MlpSpec& spec, std::span<const double> params,
                 std::span<const double> input, std::span<double> output,
                 MlpCache* cache = nullptr);

// Accumulates dL/dparams into grads given dL/doutput; input and cache must
// come from the matching forward pass.
void mlp_backward(const MlpSpec& spec, std::span<const double> params,
                  std::span<const double> input, const MlpCache& cache,
                  std::span<const double> d_output, std::span<double> grads);

class Adam {
 public:
  explicit Adam(std::size_t param_count, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1.0e-8);

  void step(std::span<double> params, std::span<const double> grads,
            double learning_rate);

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  double beta1_, beta2_, epsilon_;
  long long t_ = 0;
};

// Per-dimension running mean/variance (Welford). Used to normalize
// observations during training; read-only at action time.
struct RunningNormalizer {
  std::vector<double> mean;
  std::vector<double> m2;
  double count = 0.0;

  explicit RunningNormalizer(std::size_t dim = 0)
      : mean(dim, 0.0), m2(dim, 0.0) {}

  void update(std::span<const double> sample);
  void normalize(std::span<const double> sample, std::span<double> out) const;
  double variance(std::size_t i) const {
    return count > 0.0 ? m2[i] / count : 1.0;
  }
};

// Policy mean network, state-independent log-std vector, and value network,
// all stored in one flat parameter array:
//   [policy mlp | log_std (action_dim) | value mlp]
struct PolicyParams {
  int obs_dim = 0;
  int action_dim = 0;
  MlpSpec policy_spec;
  MlpSpec value_spec;
  std::vector<double> flat;
  RunningNormalizer obs_normalizer;

  static constexpr double kLogStdInit = -0.5;
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;

  static PolicyParams init(int obs_dim, int action_dim,
                           const std::vector<int>& hidden, Rng& rng);

  std::span<double> policy_params() {
    return {flat.data(), static_cast<std::size_t>(policy_spec.param_count())};
  }
  std::span<const double> policy_params() const {
    return {flat.data(), static_cast<std::size_t>(policy_spec.param_count())};
  }
  std::span<double> log_std() {
    return {flat.data() + policy_spec.param_count(),
            static_cast<std::size_t>(action_dim)};
  }
  std::span<const double> log_std() const {
    return {flat.data() + policy_spec.param_count(),
            static_cast<std::size_t>(action_dim)};
  }
  std::span<double> value_params() {
    return {flat.data() + policy_spec.param_count() + action_dim,
            static_cast<std::size_t>(value_spec.param_count())};
  }
  std::span<const double> value_params() const {
    return {flat.data() + policy_spec.param_count() + action_dim,
            static_cast<std::size_t>(value_spec.param_count())};
  }

  void clamp_log_std();
  bool finite() const;

  // Binary format: magic, version, dims, layer sizes, then all parameters
  // and normalizer state as little-endian float64.
  void save(const std::string& path) const;
  static PolicyParams load(const std::string& path);
};

}  // namespace evoloco
