#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "disentangle/tensor.hpp"

namespace disentangle {

struct BlockSpec {
  std::size_t channels = 0;
  std::size_t stride = 1;

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

/// Six blocks, [16,16,32,32,64,128] channels, stride 2 at blocks 1,3,5,6.
std::vector<BlockSpec> default_channel_plan();

struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t image_size = 64;
  std::vector<BlockSpec> blocks = default_channel_plan();
  std::vector<std::size_t> head_hidden = {256};
  std::size_t classes_a = 2;
  std::size_t classes_b = 2;

  std::size_t cumulative_stride() const;
  std::size_t latent_width() const;
  /// Throws ConfigError on empty plans, zero widths or strides outside {1,2}.
  void validate() const;
};

/// A parameter tensor with its name inside its group. Biases are not weights
/// and are excluded from the L2 penalty.
struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool is_weight = true;
};

struct ParamGroup {
  std::string name;
  std::vector<NamedTensor> params;
};

/// Pre-activation residual block:
///   h = relu(x)
///   y = shortcut(h) + conv2(relu(conv1(h)))
/// shortcut is identity unless the stride or channel count changes, in which
/// case it is a stride-matched 1x1 convolution.
class ResidualBlock {
 public:
  ResidualBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride);

  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;

  std::size_t stride() const { return stride_; }
  bool has_projection() const { return projection_weight_.has_value(); }

  Tensor conv1_weight, conv1_bias, conv2_weight, conv2_bias;

 private:
  std::size_t stride_;
  std::optional<Tensor> projection_weight_, projection_bias_;
};

class Encoder {
 public:
  Encoder(std::size_t in_channels, const std::vector<BlockSpec>& plan);

  /// x[B,C,H,W] -> Z[B, C_latent] (global average pooled). H and W must be
  /// divisible by the cumulative stride of the plan.
  Tensor encode(Tape& tape, const Tensor& x) const;

  std::vector<NamedTensor> parameters() const;
  std::size_t output_width() const { return output_width_; }
  std::size_t cumulative_stride() const;
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }
  std::vector<ResidualBlock>& blocks() { return blocks_; }

 private:
  std::size_t in_channels_;
  std::size_t output_width_;
  std::vector<ResidualBlock> blocks_;
};

struct HeadOutput {
  Tensor logits;
  /// Activation of the last hidden layer (the input itself when there is none).
  Tensor penultimate;
};

/// Stack of dense layers with ReLU between them.
class ClassifierHead {
 public:
  ClassifierHead(std::size_t input_width, const std::vector<std::size_t>& hidden, std::size_t classes);

  HeadOutput classify(Tape& tape, const Tensor& z) const;
  std::vector<NamedTensor> parameters() const;

  std::size_t input_width() const { return input_width_; }
  std::size_t classes() const { return classes_; }

  struct Layer {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]
  };
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::size_t input_width_;
  std::size_t classes_;
  std::vector<Layer> layers_;
};

struct ForwardResult {
  Tensor z_a, z_b;
  HeadOutput y_a;      // cls_A(Z_A)
  HeadOutput y_b;      // cls_B(Z_B)
  HeadOutput y_a_adv;  // adv_A(Z_B): task-A prediction from the task-B features
  HeadOutput y_b_adv;  // adv_B(Z_A): task-B prediction from the task-A features
};

inline constexpr const char* kThetaA = "theta_A";
inline constexpr const char* kThetaB = "theta_B";
inline constexpr const char* kPhiA = "phi_A";
inline constexpr const char* kPhiB = "phi_B";
inline constexpr const char* kPsiA = "psi_A";
inline constexpr const char* kPsiB = "psi_B";

/// Two encoders, their classifiers, and the cross-wired adversarial heads.
class DisentangleModel {
 public:
  explicit DisentangleModel(ModelConfig config);

  /// Each encoder runs once; the adversaries reuse the same Z tensors.
  ForwardResult forward_all(Tape& tape, const Tensor& x) const;

  /// He-normal weights (std = sqrt(2 / fan_in)), zero biases. Each tensor
  /// draws from its own stream derived from (seed, group, name).
  void init_params(std::uint64_t seed);

  /// Groups in the fixed order theta_A, theta_B, phi_A, phi_B, psi_A, psi_B.
  std::vector<ParamGroup> parameter_groups() const;
  /// Tensors of theta_A, theta_B, phi_A, phi_B.
  std::vector<NamedTensor> main_parameters() const;
  /// Tensors of psi_A, psi_B.
  std::vector<NamedTensor> adversary_parameters() const;

  const ModelConfig& config() const { return config_; }

  Encoder enc_a, enc_b;
  ClassifierHead cls_a, cls_b, adv_a, adv_b;

 private:
  ModelConfig config_;
};

/// Weights only (no biases) out of a parameter list.
std::vector<Tensor> weights_of(const std::vector<NamedTensor>& params);
std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& params);

/// Deep copy of every parameter value, in parameter_groups() order.
std::vector<std::vector<double>> snapshot_values(const std::vector<NamedTensor>& params);

}  // namespace disentangle
