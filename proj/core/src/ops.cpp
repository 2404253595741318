#include "disentangle/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "disentangle/error.hpp"

namespace disentangle::ops {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* name) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + name + " must have rank " + std::to_string(rank) +
                         ", got shape " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

Tensor finish(Shape shape, Buffer values, bool tracked, const char* op) {
  ensure_finite(values, op);
  return Tape::make_output(std::move(shape), std::move(values), tracked);
}

struct ConvPlan {
  std::size_t batch, channels, height, width;
  std::size_t filters, kh, kw, stride;
  ConvGeometry gy, gx;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t cells() const { return gy.out * gx.out; }
};

// Output columns [lo, hi) whose input column ox*stride + kx - pad lies
// inside [0, width).
struct ColumnRange {
  std::size_t lo, hi;
};

ColumnRange valid_columns(std::size_t kx, std::size_t pad, std::size_t stride, std::size_t width, std::size_t out) {
  const std::size_t lo = kx >= pad ? 0 : (pad - kx + stride - 1) / stride;
  const long last = static_cast<long>(width) - 1 + static_cast<long>(pad) - static_cast<long>(kx);
  const std::size_t hi = last < 0 ? 0 : std::min(out, static_cast<std::size_t>(last) / stride + 1);
  return {std::min(lo, hi), hi};
}

// col is row-major [C*kh*kw, Ho*Wo].
void im2col(const ConvPlan& p, const double* image, double* col) {
  const std::size_t cells = p.cells(), wo = p.gx.out;
  for (std::size_t c = 0; c < p.channels; ++c) {
    const double* plane = image + c * p.height * p.width;
    for (std::size_t ky = 0; ky < p.kh; ++ky) {
      for (std::size_t kx = 0; kx < p.kw; ++kx) {
        double* row = col + ((c * p.kh + ky) * p.kw + kx) * cells;
        const ColumnRange r = valid_columns(kx, p.gx.pad_before, p.stride, p.width, wo);
        for (std::size_t oy = 0; oy < p.gy.out; ++oy) {
          const long iy = static_cast<long>(oy * p.stride + ky) - static_cast<long>(p.gy.pad_before);
          double* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<long>(p.height)) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          std::fill(dst, dst + r.lo, 0.0);
          std::fill(dst + r.hi, dst + wo, 0.0);
          const double* src = plane + static_cast<std::size_t>(iy) * p.width + kx - p.gx.pad_before;
          if (p.stride == 1) {
            std::copy(src + r.lo, src + r.hi, dst + r.lo);
          } else {
            for (std::size_t ox = r.lo; ox < r.hi; ++ox) dst[ox] = src[ox * p.stride];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvPlan& p, const double* col, double* image) {
  const std::size_t cells = p.cells(), wo = p.gx.out;
  for (std::size_t c = 0; c < p.channels; ++c) {
    double* plane = image + c * p.height * p.width;
    for (std::size_t ky = 0; ky < p.kh; ++ky) {
      for (std::size_t kx = 0; kx < p.kw; ++kx) {
        const double* row = col + ((c * p.kh + ky) * p.kw + kx) * cells;
        const ColumnRange r = valid_columns(kx, p.gx.pad_before, p.stride, p.width, wo);
        for (std::size_t oy = 0; oy < p.gy.out; ++oy) {
          const long iy = static_cast<long>(oy * p.stride + ky) - static_cast<long>(p.gy.pad_before);
          if (iy < 0 || iy >= static_cast<long>(p.height)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * p.width + kx - p.gx.pad_before;
          const double* src = row + oy * wo;
          for (std::size_t ox = r.lo; ox < r.hi; ++ox) dst[ox * p.stride] += src[ox];
        }
      }
    }
  }
}

}  // namespace

ConvGeometry conv_geometry(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  ConvGeometry g;
  if (padding == Padding::kValid) {
    if (kernel > in) {
      throw DimensionError("conv2d: kernel extent " + std::to_string(kernel) + " exceeds input extent " +
                           std::to_string(in) + " with valid padding");
    }
    g.out = (in - kernel) / stride + 1;
    return g;
  }
  g.out = (in + stride - 1) / stride;
  const std::size_t needed = (g.out - 1) * stride + kernel;
  g.pad_total = needed > in ? needed - in : 0;
  g.pad_before = g.pad_total / 2;
  return g;
}

Tensor dense(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "dense", "x");
  require_rank(w, 2, "dense", "w");
  require_rank(bias, 1, "dense", "bias");
  const std::size_t batch = x.dim(0), in = x.dim(1), out = w.dim(1);
  if (w.dim(0) != in || bias.dim(0) != out) {
    throw DimensionError("dense: incompatible shapes x" + shape_string(x.shape()) + " w" +
                         shape_string(w.shape()) + " b" + shape_string(bias.shape()));
  }
  Buffer values(batch * out);
  {
    ConstMap xm(x.values().data(), batch, in);
    ConstMap wm(w.values().data(), in, out);
    Eigen::Map<const Eigen::RowVectorXd> bm(bias.values().data(), out);
    MutMap om(values.data(), batch, out);
    om.noalias() = xm * wm;
    om.rowwise() += bm;
  }
  const bool tracked = tape.tracks({&x, &w, &bias});
  Tensor result = finish({batch, out}, std::move(values), tracked, "dense");
  if (tracked) {
    tape.record("dense", {x, w, bias}, result, [x = x, w = w, bias = bias, batch, in, out](std::span<const double> g) mutable {
      ConstMap gm(g.data(), batch, out);
      if (x.requires_grad()) {
        MutMap dx(x.mutable_grad().data(), batch, in);
        dx.noalias() += gm * ConstMap(w.values().data(), in, out).transpose();
      }
      if (w.requires_grad()) {
        MutMap dw(w.mutable_grad().data(), in, out);
        dw.noalias() += ConstMap(x.values().data(), batch, in).transpose() * gm;
      }
      if (bias.requires_grad()) {
        Eigen::Map<Eigen::RowVectorXd> db(bias.mutable_grad().data(), out);
        db += gm.colwise().sum();
      }
    });
  }
  return result;
}

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& k, std::size_t stride, Padding padding) {
  require_rank(x, 4, "conv2d", "x");
  require_rank(k, 4, "conv2d", "kernel");
  if (k.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: input channels of x" + shape_string(x.shape()) + " and kernel" +
                         shape_string(k.shape()) + " differ");
  }
  ConvPlan p{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3), stride, {}, {}};
  p.gy = conv_geometry(p.height, p.kh, stride, padding);
  p.gx = conv_geometry(p.width, p.kw, stride, padding);

  const std::size_t patch = p.patch(), cells = p.cells();
  Buffer values(p.batch * p.filters * cells);
  Buffer col(patch * cells);
  ConstMap km(k.values().data(), p.filters, patch);
  for (std::size_t b = 0; b < p.batch; ++b) {
    im2col(p, x.values().data() + b * p.channels * p.height * p.width, col.data());
    MutMap om(values.data() + b * p.filters * cells, p.filters, cells);
    om.noalias() = km * ConstMap(col.data(), patch, cells);
  }

  const bool tracked = tape.tracks({&x, &k});
  Tensor result = finish({p.batch, p.filters, p.gy.out, p.gx.out}, std::move(values), tracked, "conv2d");
  if (tracked) {
    tape.record("conv2d", {x, k}, result, [x = x, k = k, p](std::span<const double> g) mutable {
      const std::size_t patch = p.patch(), cells = p.cells();
      const std::size_t image = p.channels * p.height * p.width;
      Buffer col(patch * cells);
      Buffer dcol(x.requires_grad() ? patch * cells : 0);
      ConstMap km(k.values().data(), p.filters, patch);
      for (std::size_t b = 0; b < p.batch; ++b) {
        ConstMap gm(g.data() + b * p.filters * cells, p.filters, cells);
        if (k.requires_grad()) {
          im2col(p, x.values().data() + b * image, col.data());
          MutMap dk(k.mutable_grad().data(), p.filters, patch);
          dk.noalias() += gm * ConstMap(col.data(), patch, cells).transpose();
        }
        if (x.requires_grad()) {
          MutMap dc(dcol.data(), patch, cells);
          dc.noalias() = km.transpose() * gm;
          col2im_add(p, dcol.data(), x.mutable_grad().data() + b * image);
        }
      }
    });
  }
  return result;
}

Tensor channel_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_rank(x, 4, "channel_bias", "x");
  require_rank(bias, 1, "channel_bias", "bias");
  const std::size_t batch = x.dim(0), channels = x.dim(1), cells = x.dim(2) * x.dim(3);
  if (bias.dim(0) != channels) {
    throw DimensionError("channel_bias: bias" + shape_string(bias.shape()) + " does not match channels of x" +
                         shape_string(x.shape()));
  }
  Buffer values(x.values().begin(), x.values().end());
  const auto b = bias.values();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* v = values.data() + (n * channels + c) * cells;
      for (std::size_t i = 0; i < cells; ++i) v[i] += b[c];
    }
  }
  const bool tracked = tape.tracks({&x, &bias});
  Tensor result = finish(x.shape(), std::move(values), tracked, "channel_bias");
  if (tracked) {
    tape.record("channel_bias", {x, bias}, result, [x = x, bias = bias, batch, channels, cells](std::span<const double> g) mutable {
      if (x.requires_grad()) {
        auto dx = x.mutable_grad();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto db = bias.mutable_grad();
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t c = 0; c < channels; ++c) {
            const double* gc = g.data() + (n * channels + c) * cells;
            double acc = 0.0;
            for (std::size_t i = 0; i < cells; ++i) acc += gc[i];
            db[c] += acc;
          }
        }
      }
    });
  }
  return result;
}

Tensor relu(Tape& tape, const Tensor& x) {
  Buffer values(x.values().begin(), x.values().end());
  for (double& v : values) v = v > 0.0 ? v : 0.0;
  const bool tracked = tape.tracks({&x});
  Tensor result = finish(x.shape(), std::move(values), tracked, "relu");
  if (tracked) {
    tape.record("relu", {x}, result, [x = x](std::span<const double> g) mutable {
      auto dx = x.mutable_grad();
      const auto v = x.values();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (v[i] > 0.0) dx[i] += g[i];
      }
    });
  }
  return result;
}

Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  require_rank(x, 4, "global_avg_pool", "x");
  const std::size_t batch = x.dim(0), channels = x.dim(1), cells = x.dim(2) * x.dim(3);
  Buffer values(batch * channels);
  const auto v = x.values();
  for (std::size_t i = 0; i < batch * channels; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cells; ++j) acc += v[i * cells + j];
    values[i] = acc / static_cast<double>(cells);
  }
  const bool tracked = tape.tracks({&x});
  Tensor result = finish({batch, channels}, std::move(values), tracked, "global_avg_pool");
  if (tracked) {
    tape.record("global_avg_pool", {x}, result, [x = x, cells](std::span<const double> g) mutable {
      auto dx = x.mutable_grad();
      const double inv = 1.0 / static_cast<double>(cells);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double share = g[i] * inv;
        for (std::size_t j = 0; j < cells; ++j) dx[i * cells + j] += share;
      }
    });
  }
  return result;
}

std::vector<double> softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax", "logits");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  const auto v = logits.values();
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * cols;
    const double m = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (out[r * cols + c] = std::exp(row[c] - m));
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= total;
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "argmax", "logits");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  const auto v = logits.values();
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * cols;
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits" +
                         shape_string(logits.shape()));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= cols) {
      throw LabelError("softmax_cross_entropy: label " + std::to_string(labels[r]) + " at batch index " +
                       std::to_string(r) + " outside [0," + std::to_string(cols) + ")");
    }
  }
  const auto v = logits.values();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * cols;
    const std::size_t top = static_cast<std::size_t>(std::max_element(row, row + cols) - row);
    // log-sum-exp relative to the max, excluding the max's own exp(0)=1 so
    // that log1p keeps precision for confident rows.
    double rest = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (c != top) rest += std::exp(row[c] - row[top]);
    }
    total += std::log1p(rest) + (row[top] - row[labels[r]]);
  }
  const bool tracked = tape.tracks({&logits});
  Tensor result = finish({1}, {total / static_cast<double>(rows)}, tracked, "softmax_cross_entropy");
  if (tracked) {
    std::vector<int> owned(labels.begin(), labels.end());
    tape.record("softmax_cross_entropy", {logits}, result,
                [logits = logits, owned = std::move(owned), rows, cols](std::span<const double> g) mutable {
                  const std::vector<double> p = softmax_rows(logits);
                  auto dl = logits.mutable_grad();
                  const double s = g[0] / static_cast<double>(rows);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                      const double onehot = static_cast<int>(c) == owned[r] ? 1.0 : 0.0;
                      dl[r * cols + c] += s * (p[r * cols + c] - onehot);
                    }
                  }
                });
  }
  return result;
}

Tensor l2_penalty(Tape& tape, std::span<const Tensor> weights, double scale) {
  if (!(scale >= 0.0)) throw ContractError("l2_penalty: scale must be >= 0");
  double total = 0.0;
  bool tracked = false;
  for (const Tensor& w : weights) {
    for (double v : w.values()) total += v * v;
    tracked = tracked || tape.tracks({&w});
  }
  Tensor result = finish({1}, {scale * total}, tracked, "l2_penalty");
  if (tracked) {
    std::vector<Tensor> inputs(weights.begin(), weights.end());
    tape.record("l2_penalty", inputs, result, [inputs, scale](std::span<const double> g) mutable {
      const double factor = 2.0 * scale * g[0];
      for (Tensor& w : inputs) {
        if (!w.requires_grad()) continue;
        auto dw = w.mutable_grad();
        const auto v = w.values();
        for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += factor * v[i];
      }
    });
  }
  return result;
}

namespace {

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary(Tape& tape, const char* op, const Tensor& a, const Tensor& b, Fwd fwd, BwdA da, BwdB db) {
  require_same_shape(a, b, op);
  const auto av = a.values(), bv = b.values();
  Buffer values(av.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = fwd(av[i], bv[i]);
  const bool tracked = tape.tracks({&a, &b});
  Tensor result = finish(a.shape(), std::move(values), tracked, op);
  if (tracked) {
    tape.record(op, {a, b}, result, [a = a, b = b, da, db](std::span<const double> g) mutable {
      const auto av = a.values(), bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += da(g[i], av[i], bv[i]);
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += db(g[i], av[i], bv[i]);
      }
    });
  }
  return result;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(
      tape, "add", a, b, [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(
      tape, "sub", a, b, [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(
      tape, "mul", a, b, [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Buffer values(a.values().begin(), a.values().end());
  for (double& v : values) v *= factor;
  const bool tracked = tape.tracks({&a});
  Tensor result = finish(a.shape(), std::move(values), tracked, "scale");
  if (tracked) {
    tape.record("scale", {a}, result, [a = a, factor](std::span<const double> g) mutable {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    });
  }
  return result;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  const bool tracked = tape.tracks({&a});
  Tensor result = finish({1}, {total}, tracked, "sum");
  if (tracked) {
    tape.record("sum", {a}, result, [a = a](std::span<const double> g) mutable {
      auto ga = a.mutable_grad();
      for (double& v : ga) v += g[0];
    });
  }
  return result;
}

}  // namespace disentangle::ops
