#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disentangle/checkpoint.hpp"
#include "disentangle/nn.hpp"

namespace disentangle {

struct AdamOptions {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameters:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, AdamOptions options);

  /// Reads every parameter's grad; ContractError naming the first parameter
  /// without one (no parameter is modified in that case).
  void step();

  std::uint64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

  void save_state(Checkpoint& ckpt, const std::string& prefix) const;
  void load_state(const Checkpoint& ckpt, const std::string& prefix);

 private:
  std::vector<NamedTensor> params_;
  AdamOptions options_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct MomentumOptions {
  double learning_rate = 1e-5;
  double momentum = 0.9;
};

/// Classical (non-Nesterov) momentum: v <- mu v + g,  p <- p - lr v.
class MomentumSgd {
 public:
  MomentumSgd(std::vector<NamedTensor> params, MomentumOptions options);

  void step();

  std::uint64_t steps() const { return t_; }
  const MomentumOptions& options() const { return options_; }
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

  void save_state(Checkpoint& ckpt, const std::string& prefix) const;
  void load_state(const Checkpoint& ckpt, const std::string& prefix);

 private:
  std::vector<NamedTensor> params_;
  MomentumOptions options_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace disentangle
