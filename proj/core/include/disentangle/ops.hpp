#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "disentangle/tensor.hpp"

namespace disentangle::ops {

enum class Padding { kSame, kValid };

/// out[b,o] = sum_i x[b,i] * w[i,o] + bias[o]
Tensor dense(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);

/// Cross-correlation of x[B,C,H,W] with k[F,C,kh,kw], zero padded.
///
/// "same" padding targets ceil(H/stride) outputs and splits the padding
/// symmetrically, the odd pixel going to the bottom/right.
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& k, std::size_t stride, Padding padding);

/// Adds bias[c] to every spatial cell of channel c of x[B,C,H,W].
Tensor channel_bias(Tape& tape, const Tensor& x, const Tensor& bias);

Tensor relu(Tape& tape, const Tensor& x);

/// Mean over H,W: x[B,C,H,W] -> [B,C].
Tensor global_avg_pool(Tape& tape, const Tensor& x);

/// Mean over the batch of -log softmax(logits)[label]. Returns shape [1].
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels);

/// scale * sum of squares over all given tensors. Returns shape [1].
Tensor l2_penalty(Tape& tape, std::span<const Tensor> weights, double scale);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor sum(Tape& tape, const Tensor& a);

/// Row-wise softmax of logits[B,K] with max subtraction (untracked).
std::vector<double> softmax_rows(const Tensor& logits);

/// Per-row argmax of logits[B,K]; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);

/// Output spatial extent and leading pad for one axis.
struct ConvGeometry {
  std::size_t out = 0;
  std::size_t pad_before = 0;
  std::size_t pad_total = 0;
};
ConvGeometry conv_geometry(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);

}  // namespace disentangle::ops
