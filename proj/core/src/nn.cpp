#include "disentangle/nn.hpp"

#include <cmath>
#include <random>

#include "disentangle/error.hpp"
#include "disentangle/hash.hpp"
#include "disentangle/ops.hpp"

namespace disentangle {

std::vector<BlockSpec> default_channel_plan() {
  return {{16, 2}, {16, 1}, {32, 2}, {32, 1}, {64, 2}, {128, 2}};
}

std::size_t ModelConfig::cumulative_stride() const {
  std::size_t s = 1;
  for (const auto& b : blocks) s *= b.stride;
  return s;
}

std::size_t ModelConfig::latent_width() const { return blocks.empty() ? in_channels : blocks.back().channels; }

void ModelConfig::validate() const {
  if (in_channels == 0) throw ConfigError("model: in_channels must be positive");
  if (blocks.empty()) throw ConfigError("model.blocks: the encoder needs at least one residual block");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].channels == 0) throw ConfigError("model.blocks: block " + std::to_string(i) + " has zero channels");
    if (blocks[i].stride != 1 && blocks[i].stride != 2) {
      throw ConfigError("model.blocks: block " + std::to_string(i) + " stride must be 1 or 2");
    }
  }
  for (std::size_t w : head_hidden) {
    if (w == 0) throw ConfigError("model.head_hidden: hidden widths must be positive");
  }
  if (classes_a < 2 || classes_b < 2) throw ConfigError("model: each task needs at least two classes");
  if (image_size == 0 || image_size % cumulative_stride() != 0) {
    throw ConfigError("model: image size " + std::to_string(image_size) + " must be divisible by the cumulative stride " +
                      std::to_string(cumulative_stride()));
  }
}

ResidualBlock::ResidualBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride)
    : conv1_weight(Tensor::zeros({out_channels, in_channels, 3, 3}, true)),
      conv1_bias(Tensor::zeros({out_channels}, true)),
      conv2_weight(Tensor::zeros({out_channels, out_channels, 3, 3}, true)),
      conv2_bias(Tensor::zeros({out_channels}, true)),
      stride_(stride) {
  if (stride != 1 || in_channels != out_channels) {
    projection_weight_ = Tensor::zeros({out_channels, in_channels, 1, 1}, true);
    projection_bias_ = Tensor::zeros({out_channels}, true);
  }
}

Tensor ResidualBlock::forward(Tape& tape, const Tensor& x) const {
  using ops::Padding;
  const Tensor h = ops::relu(tape, x);
  Tensor r = ops::channel_bias(tape, ops::conv2d(tape, h, conv1_weight, stride_, Padding::kSame), conv1_bias);
  r = ops::relu(tape, r);
  r = ops::channel_bias(tape, ops::conv2d(tape, r, conv2_weight, 1, Padding::kSame), conv2_bias);
  Tensor shortcut = h;
  if (projection_weight_) {
    shortcut = ops::channel_bias(tape, ops::conv2d(tape, h, *projection_weight_, stride_, Padding::kSame),
                                 *projection_bias_);
  }
  return ops::add(tape, shortcut, r);
}

void ResidualBlock::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "conv1.weight", conv1_weight, true});
  out.push_back({prefix + "conv1.bias", conv1_bias, false});
  out.push_back({prefix + "conv2.weight", conv2_weight, true});
  out.push_back({prefix + "conv2.bias", conv2_bias, false});
  if (projection_weight_) {
    out.push_back({prefix + "proj.weight", *projection_weight_, true});
    out.push_back({prefix + "proj.bias", *projection_bias_, false});
  }
}

Encoder::Encoder(std::size_t in_channels, const std::vector<BlockSpec>& plan)
    : in_channels_(in_channels), output_width_(plan.empty() ? in_channels : plan.back().channels) {
  std::size_t channels = in_channels;
  for (const auto& spec : plan) {
    blocks_.emplace_back(channels, spec.channels, spec.stride);
    channels = spec.channels;
  }
}

std::size_t Encoder::cumulative_stride() const {
  std::size_t s = 1;
  for (const auto& b : blocks_) s *= b.stride();
  return s;
}

Tensor Encoder::encode(Tape& tape, const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != in_channels_) {
    throw DimensionError("encode: expected input [B," + std::to_string(in_channels_) + ",H,W], got " +
                         shape_string(x.shape()));
  }
  const std::size_t s = cumulative_stride();
  if (x.dim(2) % s != 0 || x.dim(3) % s != 0) {
    throw ConfigError("encode: spatial dims " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                      " must be divisible by the cumulative stride " + std::to_string(s));
  }
  Tensor h = x;
  for (const auto& block : blocks_) h = block.forward(tape, h);
  return ops::global_avg_pool(tape, h);
}

std::vector<NamedTensor> Encoder::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect("block" + std::to_string(i) + ".", out);
  return out;
}

ClassifierHead::ClassifierHead(std::size_t input_width, const std::vector<std::size_t>& hidden, std::size_t classes)
    : input_width_(input_width), classes_(classes) {
  std::size_t in = input_width;
  for (std::size_t width : hidden) {
    layers_.push_back({Tensor::zeros({in, width}, true), Tensor::zeros({width}, true)});
    in = width;
  }
  layers_.push_back({Tensor::zeros({in, classes}, true), Tensor::zeros({classes}, true)});
}

HeadOutput ClassifierHead::classify(Tape& tape, const Tensor& z) const {
  if (z.rank() != 2 || z.dim(1) != input_width_) {
    throw DimensionError("classify: head expects [B," + std::to_string(input_width_) + "], got " +
                         shape_string(z.shape()));
  }
  Tensor h = z;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    h = ops::relu(tape, ops::dense(tape, h, layers_[i].weight, layers_[i].bias));
  }
  Tensor logits = ops::dense(tape, h, layers_.back().weight, layers_.back().bias);
  return {logits, h};
}

std::vector<NamedTensor> ClassifierHead::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "dense" + std::to_string(i) + ".";
    out.push_back({p + "weight", layers_[i].weight, true});
    out.push_back({p + "bias", layers_[i].bias, false});
  }
  return out;
}

namespace {
const ModelConfig& checked(const ModelConfig& config) {
  config.validate();
  return config;
}
}  // namespace

DisentangleModel::DisentangleModel(ModelConfig config)
    : enc_a(checked(config).in_channels, config.blocks),
      enc_b(config.in_channels, config.blocks),
      cls_a(config.latent_width(), config.head_hidden, config.classes_a),
      cls_b(config.latent_width(), config.head_hidden, config.classes_b),
      adv_a(config.latent_width(), config.head_hidden, config.classes_a),
      adv_b(config.latent_width(), config.head_hidden, config.classes_b),
      config_(std::move(config)) {}

ForwardResult DisentangleModel::forward_all(Tape& tape, const Tensor& x) const {
  ForwardResult r;
  r.z_a = enc_a.encode(tape, x);
  r.z_b = enc_b.encode(tape, x);
  r.y_a = cls_a.classify(tape, r.z_a);
  r.y_b = cls_b.classify(tape, r.z_b);
  r.y_a_adv = adv_a.classify(tape, r.z_b);
  r.y_b_adv = adv_b.classify(tape, r.z_a);
  return r;
}

std::vector<ParamGroup> DisentangleModel::parameter_groups() const {
  return {
      {kThetaA, enc_a.parameters()}, {kThetaB, enc_b.parameters()}, {kPhiA, cls_a.parameters()},
      {kPhiB, cls_b.parameters()},   {kPsiA, adv_a.parameters()},   {kPsiB, adv_b.parameters()},
  };
}

namespace {
std::vector<NamedTensor> flatten(const std::vector<ParamGroup>& groups, std::size_t first, std::size_t last) {
  std::vector<NamedTensor> out;
  for (std::size_t g = first; g < last; ++g) {
    for (const auto& p : groups[g].params) out.push_back({groups[g].name + "/" + p.name, p.tensor, p.is_weight});
  }
  return out;
}
}  // namespace

std::vector<NamedTensor> DisentangleModel::main_parameters() const { return flatten(parameter_groups(), 0, 4); }

std::vector<NamedTensor> DisentangleModel::adversary_parameters() const { return flatten(parameter_groups(), 4, 6); }

void DisentangleModel::init_params(std::uint64_t seed) {
  for (auto& group : parameter_groups()) {
    for (auto& p : group.params) {
      auto values = p.tensor.mutable_values();
      if (!p.is_weight) {
        std::fill(values.begin(), values.end(), 0.0);
        continue;
      }
      const Shape& s = p.tensor.shape();
      // conv kernels are [F,C,kh,kw], dense weights are [in,out]
      const std::size_t fan_in = s.size() == 4 ? s[1] * s[2] * s[3] : s[0];
      std::mt19937_64 rng(derive_seed(seed, {fnv1a64(group.name), fnv1a64(p.name)}));
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (double& v : values) v = normal(rng);
    }
  }
}

std::vector<Tensor> weights_of(const std::vector<NamedTensor>& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) {
    if (p.is_weight) out.push_back(p.tensor);
  }
  return out;
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

std::vector<std::vector<double>> snapshot_values(const std::vector<NamedTensor>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

}  // namespace disentangle
