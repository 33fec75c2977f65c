#include "evoloco/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace evoloco {

namespace {

constexpr char kPolicyMagic[8] = {'E', 'V', 'O', 'P', 'O', 'L', '1', '\0'};
constexpr std::uint32_t kPolicyVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

void write_f64(std::ofstream& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_f64(std::ifstream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  double value;
  std::memcpy(&value, &bits, sizeof(value));
  return value;
}

}  // namespace

int MlpSpec::param_count() const {
  int count = 0;
  for (int l = 0; l + 1 < static_cast<int>(sizes.size()); ++l) {
    count += sizes[l] * sizes[l + 1] + sizes[l + 1];
  }
  return count;
}

void mlp_forward(const MlpSpec& spec, std::span<const double> params,
                 std::span<const double> input, std::span<double> output,
                 MlpCache* cache) {
  if (cache) cache->post.assign(spec.layer_count(), {});
  std::vector<double> current(input.begin(), input.end());
  std::size_t offset = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int in_dim = spec.sizes[l];
    const int out_dim = spec.sizes[l + 1];
    const double* weights = params.data() + offset;
    const double* bias = weights + in_dim * out_dim;
    std::vector<double> next(out_dim);
    for (int o = 0; o < out_dim; ++o) {
      double sum = bias[o];
      const double* row = weights + o * in_dim;
      for (int i = 0; i < in_dim; ++i) sum += row[i] * current[i];
      next[o] = (l + 1 < spec.layer_count()) ? std::tanh(sum) : sum;
    }
    if (cache) cache->post[l] = next;
    current = std::move(next);
    offset += in_dim * out_dim + out_dim;
  }
  std::copy(current.begin(), current.end(), output.begin());
}

void mlp_backward(const MlpSpec& spec, std::span<const double> params,
                  std::span<const double> input, const MlpCache& cache,
                  std::span<const double> d_output, std::span<double> grads) {
  std::vector<double> delta(d_output.begin(), d_output.end());
  // walk layers backwards; recompute parameter offsets per layer
  std::vector<std::size_t> offsets(spec.layer_count());
  std::size_t offset = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    offsets[l] = offset;
    offset += spec.sizes[l] * spec.sizes[l + 1] + spec.sizes[l + 1];
  }
  for (int l = spec.layer_count() - 1; l >= 0; --l) {
    const int in_dim = spec.sizes[l];
    const int out_dim = spec.sizes[l + 1];
    const double* weights = params.data() + offsets[l];
    double* w_grad = grads.data() + offsets[l];
    double* b_grad = w_grad + in_dim * out_dim;
    const std::vector<double> layer_input_storage =
        l == 0 ? std::vector<double>(input.begin(), input.end())
               : cache.post[l - 1];
    // tanh derivative for hidden layers (output layer is linear)
    if (l + 1 < spec.layer_count()) {
      for (int o = 0; o < out_dim; ++o) {
        const double y = cache.post[l][o];
        delta[o] *= 1.0 - y * y;
      }
    }
    std::vector<double> d_input(in_dim, 0.0);
    for (int o = 0; o < out_dim; ++o) {
      const double d = delta[o];
      b_grad[o] += d;
      double* w_row = w_grad + o * in_dim;
      const double* row = weights + o * in_dim;
      for (int i = 0; i < in_dim; ++i) {
        w_row[i] += d * layer_input_storage[i];
        d_input[i] += d * row[i];
      }
    }
    delta = std::move(d_input);
  }
}

Adam::Adam(std::size_t param_count, double beta1, double beta2, double epsilon)
    : m_(param_count, 0.0), v_(param_count, 0.0), beta1_(beta1), beta2_(beta2),
      epsilon_(epsilon) {}

void Adam::step(std::span<double> params, std::span<const double> grads,
                double learning_rate) {
  ++t_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    const double m_hat = m_[i] / bias1;
    const double v_hat = v_[i] / bias2;
    params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + epsilon_);
  }
}

void RunningNormalizer::update(std::span<const double> sample) {
  count += 1.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double delta = sample[i] - mean[i];
    mean[i] += delta / count;
    m2[i] += delta * (sample[i] - mean[i]);
  }
}

void RunningNormalizer::normalize(std::span<const double> sample,
                                  std::span<double> out) const {
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double scale = std::sqrt(variance(i) + 1.0e-8);
    out[i] = std::clamp((sample[i] - mean[i]) / scale, -10.0, 10.0);
  }
}

PolicyParams PolicyParams::init(int obs_dim, int action_dim,
                                const std::vector<int>& hidden, Rng& rng) {
  PolicyParams params;
  params.obs_dim = obs_dim;
  params.action_dim = action_dim;
  params.policy_spec.sizes.push_back(obs_dim);
  params.value_spec.sizes.push_back(obs_dim);
  for (int h : hidden) {
    params.policy_spec.sizes.push_back(h);
    params.value_spec.sizes.push_back(h);
  }
  params.policy_spec.sizes.push_back(action_dim);
  params.value_spec.sizes.push_back(1);
  params.flat.assign(params.policy_spec.param_count() + action_dim +
                         params.value_spec.param_count(),
                     0.0);
  params.obs_normalizer = RunningNormalizer(obs_dim);

  auto fill = [&rng](const MlpSpec& spec, std::span<double> target,
                     double last_layer_scale) {
    std::size_t offset = 0;
    for (int l = 0; l < spec.layer_count(); ++l) {
      const int in_dim = spec.sizes[l];
      const int out_dim = spec.sizes[l + 1];
      const double scale = (l + 1 == spec.layer_count() ? last_layer_scale : 1.0) /
                           std::sqrt(static_cast<double>(in_dim));
      for (int k = 0; k < in_dim * out_dim; ++k) {
        target[offset + k] = scale * rng.normal();
      }
      offset += in_dim * out_dim + out_dim;  // biases stay zero
    }
  };
  fill(params.policy_spec, params.policy_params(), 0.01);
  for (double& v : params.log_std()) v = kLogStdInit;
  fill(params.value_spec, params.value_params(), 1.0);
  return params;
}

void PolicyParams::clamp_log_std() {
  for (double& v : log_std()) v = std::clamp(v, kLogStdMin, kLogStdMax);
}

bool PolicyParams::finite() const {
  for (double v : flat) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void PolicyParams::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kPolicyMagic, sizeof(kPolicyMagic));
  write_u32(out, kPolicyVersion);
  write_u32(out, static_cast<std::uint32_t>(obs_dim));
  write_u32(out, static_cast<std::uint32_t>(action_dim));
  const auto& sizes = policy_spec.sizes;
  // hidden layer sizes (shared by both networks)
  write_u32(out, static_cast<std::uint32_t>(sizes.size() - 2));
  for (std::size_t i = 1; i + 1 < sizes.size(); ++i) {
    write_u32(out, static_cast<std::uint32_t>(sizes[i]));
  }
  for (double v : flat) write_f64(out, v);
  for (double v : obs_normalizer.mean) write_f64(out, v);
  for (double v : obs_normalizer.m2) write_f64(out, v);
  write_f64(out, obs_normalizer.count);
  if (!out) throw std::runtime_error("failed writing " + path);
}

PolicyParams PolicyParams::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kPolicyMagic, sizeof(magic)) != 0) {
    throw std::runtime_error(path + ": not a policy file");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kPolicyVersion) {
    throw std::runtime_error(path + ": unsupported policy version");
  }
  const int obs_dim = static_cast<int>(read_u32(in));
  const int action_dim = static_cast<int>(read_u32(in));
  const int hidden_count = static_cast<int>(read_u32(in));
  std::vector<int> hidden(hidden_count);
  for (int& h : hidden) h = static_cast<int>(read_u32(in));
  Rng dummy(0);
  PolicyParams params = PolicyParams::init(obs_dim, action_dim, hidden, dummy);
  for (double& v : params.flat) v = read_f64(in);
  for (double& v : params.obs_normalizer.mean) v = read_f64(in);
  for (double& v : params.obs_normalizer.m2) v = read_f64(in);
  params.obs_normalizer.count = read_f64(in);
  if (!in) throw std::runtime_error(path + ": truncated policy file");
  return params;
}

}  // namespace evoloco
