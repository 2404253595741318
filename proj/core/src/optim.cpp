#include "disentangle/optim.hpp"

#include <cmath>

#include "disentangle/error.hpp"

namespace disentangle {
namespace {

void require_grads(const std::vector<NamedTensor>& params, const char* who) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw ContractError(std::string(who) + ": parameter '" + p.name + "' has no gradient");
  }
}

std::vector<std::vector<double>> zeros_like(const std::vector<NamedTensor>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor.numel(), 0.0);
  return out;
}

void load_buffers(const Checkpoint& ckpt, const std::string& key, const std::vector<NamedTensor>& params,
                  std::vector<std::vector<double>>& buffers) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = ckpt.at(key + "/" + params[i].name);
    if (e.values.size() != buffers[i].size()) {
      throw DimensionError("optimizer state " + key + "/" + params[i].name + " does not match its parameter");
    }
    buffers[i] = e.values;
  }
}

void save_buffers(Checkpoint& ckpt, const std::string& key, const std::vector<NamedTensor>& params,
                  const std::vector<std::vector<double>>& buffers) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.put(key + "/" + params[i].name, params[i].tensor.shape(), buffers[i]);
  }
}

}  // namespace

Adam::Adam(std::vector<NamedTensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options), m_(zeros_like(params_)), v_(zeros_like(params_)) {}

void Adam::step() {
  require_grads(params_, "adam");
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].tensor.mutable_values();
    const auto g = params_[i].tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * (g[j] * g[j]);
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] = p[j] - options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

void Adam::save_state(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.put_scalar(prefix + "/t", static_cast<double>(t_));
  save_buffers(ckpt, prefix + "/m", params_, m_);
  save_buffers(ckpt, prefix + "/v", params_, v_);
}

void Adam::load_state(const Checkpoint& ckpt, const std::string& prefix) {
  t_ = static_cast<std::uint64_t>(ckpt.at(prefix + "/t").values.at(0));
  load_buffers(ckpt, prefix + "/m", params_, m_);
  load_buffers(ckpt, prefix + "/v", params_, v_);
}

MomentumSgd::MomentumSgd(std::vector<NamedTensor> params, MomentumOptions options)
    : params_(std::move(params)), options_(options), velocity_(zeros_like(params_)) {}

void MomentumSgd::step() {
  require_grads(params_, "momentum sgd");
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].tensor.mutable_values();
    const auto g = params_[i].tensor.grad();
    auto& vel = velocity_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      vel[j] = options_.momentum * vel[j] + g[j];
      p[j] = p[j] - options_.learning_rate * vel[j];
    }
  }
}

void MomentumSgd::save_state(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.put_scalar(prefix + "/t", static_cast<double>(t_));
  save_buffers(ckpt, prefix + "/velocity", params_, velocity_);
}

void MomentumSgd::load_state(const Checkpoint& ckpt, const std::string& prefix) {
  t_ = static_cast<std::uint64_t>(ckpt.at(prefix + "/t").values.at(0));
  load_buffers(ckpt, prefix + "/velocity", params_, velocity_);
}

}  // namespace disentangle
