// Copyright 2026 The delores Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "delores/rng.hpp"
#include "delores/tensor.hpp"

// Layer operations with reverse-mode rules. Every op takes an optional tape;
// when the tape is null or no input requires grad, nothing is recorded.
// Kernels run single-threaded, so identical inputs give bit-identical results.

namespace delores {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
bool recording(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  return tape != nullptr && any_requires_grad<T>(inputs);
}

// 3x3, stride 1, padding 1 patch matrix: rows (ci, ky, kx), columns (y, x).
template <typename T>
void im2col3x3(const T* img, std::size_t channels, std::size_t h, std::size_t w, T* cols) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* row = cols + ((c * 3 + ky) * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
          T* dst = row + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = img + (c * h + static_cast<std::size_t>(sy)) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + static_cast<long>(kx) - 1;
            dst[x] = (sx < 0 || sx >= static_cast<long>(w)) ? T(0) : src[sx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3_add(const T* cols, std::size_t channels, std::size_t h, std::size_t w, T* img) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* row = cols + ((c * 3 + ky) * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          T* dst = img + (c * h + static_cast<std::size_t>(sy)) * w;
          const T* src = row + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + static_cast<long>(kx) - 1;
            if (sx >= 0 && sx < static_cast<long>(w)) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 3x3 convolution (cross-correlation), stride 1, zero padding 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Tape<T>* tape = nullptr) {
  if (input.rank() != 4) throw ShapeError("conv2d: input must be [B,Cin,H,W], got " + to_string(input.shape()));
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (weight.rank() != 4 || weight.dim(1) != cin || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw ShapeError("conv2d: weight must be [Cout," + std::to_string(cin) + ",3,3], got " +
                     to_string(weight.shape()));
  }
  const std::size_t cout = weight.dim(0);
  detail::expect_shape(bias.shape(), {cout}, "conv2d bias");

  const std::size_t hw = h * w, k = cin * 9;
  Tensor<T> out({batch, cout, h, w});
  AlignedVector<T> cols(k * hw);
  detail::ConstMapMat<T> wmat(weight.data().data(), cout, k);
  for (std::size_t b = 0; b < batch; ++b) {
    detail::im2col3x3(input.data().data() + b * cin * hw, cin, h, w, cols.data());
    detail::MapMat<T> y(out.data().data() + b * cout * hw, cout, hw);
    y.noalias() = wmat * detail::ConstMapMat<T>(cols.data(), k, hw);
    for (std::size_t c = 0; c < cout; ++c) y.row(c).array() += bias[c];
  }
  detail::check_finite(out, "conv2d");

  if (detail::recording(tape, {&input, &weight, &bias})) {
    out.set_requires_grad(true);
    tape->record([input, weight, bias, out, batch, cin, cout, h, w]() mutable {
      const std::size_t hw_ = h * w, k_ = cin * 9;
      AlignedVector<T> cols_(k_ * hw_);
      AlignedVector<T> dcols(k_ * hw_);
      detail::ConstMapMat<T> wm(weight.data().data(), cout, k_);
      for (std::size_t b = 0; b < batch; ++b) {
        detail::ConstMapMat<T> dy(out.grad().data() + b * cout * hw_, cout, hw_);
        if (weight.requires_grad()) {
          detail::im2col3x3(input.data().data() + b * cin * hw_, cin, h, w, cols_.data());
          detail::MapMat<T>(weight.grad().data(), cout, k_).noalias() +=
              dy * detail::ConstMapMat<T>(cols_.data(), k_, hw_).transpose();
        }
        if (bias.requires_grad()) {
          for (std::size_t c = 0; c < cout; ++c) bias.grad()[c] += dy.row(c).sum();
        }
        if (input.requires_grad()) {
          detail::MapMat<T>(dcols.data(), k_, hw_).noalias() = wm.transpose() * dy;
          detail::col2im3x3_add(dcols.data(), cin, h, w, input.grad().data() + b * cin * hw_);
        }
      }
    });
  }
  return out;
}

/// 2x2 max pooling with stride 2. Ties route the gradient to the first
/// element in row-major window order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, Tape<T>* tape = nullptr) {
  if (input.rank() != 4) throw ShapeError("maxpool2d: input must be [B,C,H,W], got " + to_string(input.shape()));
  const std::size_t planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2d: spatial dims must be even, got " + to_string(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor<T> out({input.dim(0), input.dim(1), oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  const T* in = input.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (p * h + 2 * y) * w + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (p * h + 2 * y + dy) * w + 2 * x + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + y) * ow + x;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
  if (detail::recording(tape, {&input})) {
    out.set_requires_grad(true);
    tape->record([input, out, argmax = std::move(argmax)]() mutable {
      auto gi = input.grad();
      auto go = out.grad();
      for (std::size_t o = 0; o < go.size(); ++o) gi[argmax[o]] += go[o];
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input, Tape<T>* tape = nullptr) {
  Tensor<T> out(input.shape());
  auto in = input.data();
  auto o = out.data();
  // Written so that NaN propagates instead of clamping to zero.
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = !(in[i] <= T(0)) ? in[i] : T(0);
  detail::check_finite(out, "relu");
  if (detail::recording(tape, {&input})) {
    out.set_requires_grad(true);
    tape->record([input, out]() mutable {
      auto x = input.data();
      auto go = out.grad();
      auto gi = input.grad();
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > T(0)) gi[i] += go[i];
      }
    });
  }
  return out;
}

/// Affine map over the last dimension; leading dimensions are batch-like.
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Tape<T>* tape = nullptr) {
  if (input.rank() < 1 || weight.rank() != 2) throw ShapeError("linear: bad ranks");
  const std::size_t din = input.shape().back();
  if (weight.dim(1) != din) {
    throw ShapeError("linear: input has " + std::to_string(din) + " features but weight is " +
                     to_string(weight.shape()));
  }
  const std::size_t dout = weight.dim(0);
  detail::expect_shape(bias.shape(), {dout}, "linear bias");
  const std::size_t rows = input.numel() / din;
  Shape out_shape = input.shape();
  out_shape.back() = dout;
  Tensor<T> out(out_shape);
  detail::ConstMapMat<T> x(input.data().data(), rows, din);
  detail::ConstMapMat<T> wm(weight.data().data(), dout, din);
  detail::MapMat<T> y(out.data().data(), rows, dout);
  y.noalias() = x * wm.transpose();
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data().data(), dout);
  detail::check_finite(out, "linear");

  if (detail::recording(tape, {&input, &weight, &bias})) {
    out.set_requires_grad(true);
    tape->record([input, weight, bias, out, rows, din, dout]() mutable {
      detail::ConstMapMat<T> dy(out.grad().data(), rows, dout);
      if (weight.requires_grad()) {
        detail::MapMat<T>(weight.grad().data(), dout, din).noalias() +=
            dy.transpose() * detail::ConstMapMat<T>(input.data().data(), rows, din);
      }
      if (bias.requires_grad()) {
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.grad().data(), dout) += dy.colwise().sum();
      }
      if (input.requires_grad()) {
        detail::MapMat<T>(input.grad().data(), rows, din).noalias() +=
            dy * detail::ConstMapMat<T>(weight.data().data(), dout, din);
      }
    });
  }
  return out;
}

/// Inverted dropout: survivors are scaled by 1/(1-rate) in training mode.
template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double rate, bool training, Rng& rng,
                  Tape<T>* tape = nullptr) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return input;
  const T keep_scale = T(1.0 / (1.0 - rate));
  std::vector<T> mask(input.numel());
  for (auto& m : mask) m = rng.bernoulli(rate) ? T(0) : keep_scale;
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = input[i] * mask[i];
  if (detail::recording(tape, {&input})) {
    out.set_requires_grad(true);
    tape->record([input, out, mask = std::move(mask)]() mutable {
      auto gi = input.grad();
      auto go = out.grad();
      for (std::size_t i = 0; i < mask.size(); ++i) gi[i] += go[i] * mask[i];
    });
  }
  return out;
}

/// Batch normalization state. Running variance uses the unbiased estimate;
/// normalization in training mode uses the biased batch variance.
template <typename T>
struct BatchNorm {
  Tensor<T> scale;  // empty when !affine
  Tensor<T> shift;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  static BatchNorm make(std::size_t features, bool affine) {
    BatchNorm bn;
    if (affine) {
      bn.scale = Tensor<T>({features}, T(1), true);
      bn.shift = Tensor<T>({features}, T(0), true);
    }
    bn.running_mean = Tensor<T>({features}, T(0));
    bn.running_var = Tensor<T>({features}, T(1));
    return bn;
  }

  bool affine() const { return scale.defined(); }
  std::size_t features() const { return running_mean.numel(); }
};

/// Normalizes [B,C,H,W] per channel over (B,H,W), or [B,D] per feature over B.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, BatchNorm<T>& bn, bool training, Tape<T>* tape = nullptr) {
  if (input.rank() != 2 && input.rank() != 4) {
    throw ShapeError("batchnorm: expected [B,D] or [B,C,H,W], got " + to_string(input.shape()));
  }
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t spatial = input.rank() == 4 ? input.dim(2) * input.dim(3) : 1;
  if (channels != bn.features()) {
    throw ShapeError("batchnorm: input has " + std::to_string(channels) + " channels, layer has " +
                     std::to_string(bn.features()));
  }
  if (training && batch < 2) throw NumericalError("batchnorm: training mode needs batch size >= 2");

  const std::size_t count = batch * spatial;
  std::vector<T> mean(channels), inv_std(channels);
  Tensor<T> out(input.shape());
  std::vector<T> xhat(training ? input.numel() : 0);
  const T* x = input.data().data();

  auto at = [&](std::size_t b, std::size_t c) { return (b * channels + c) * spatial; };
  if (training) {
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < spatial; ++i) s += x[at(b, c) + i];
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < spatial; ++i) {
          const double d = x[at(b, c) + i] - m;
          v += d * d;
        }
      const double var = v / static_cast<double>(count);
      mean[c] = T(m);
      inv_std[c] = T(1.0 / std::sqrt(var + bn.eps));
      const double unbiased = v / static_cast<double>(count - 1);
      bn.running_mean[c] = T((1.0 - bn.momentum) * bn.running_mean[c] + bn.momentum * m);
      bn.running_var[c] = T((1.0 - bn.momentum) * bn.running_var[c] + bn.momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = bn.running_mean[c];
      inv_std[c] = T(1.0 / std::sqrt(static_cast<double>(bn.running_var[c]) + bn.eps));
    }
  }
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const T g = bn.affine() ? bn.scale[c] : T(1);
      const T beta = bn.affine() ? bn.shift[c] : T(0);
      for (std::size_t i = 0; i < spatial; ++i) {
        const std::size_t idx = at(b, c) + i;
        const T n = (x[idx] - mean[c]) * inv_std[c];
        if (training) xhat[idx] = n;
        out[idx] = g * n + beta;
      }
    }
  }
  detail::check_finite(out, "batchnorm");

  const Tensor<T> scale = bn.scale, shift = bn.shift;
  if (detail::recording(tape, {&input, &scale, &shift})) {
    out.set_requires_grad(true);
    tape->record([=, xhat = std::move(xhat), inv_std = std::move(inv_std)]() mutable {
      auto at_ = [&](std::size_t b, std::size_t c) { return (b * channels + c) * spatial; };
      auto go = out.grad();
      const bool affine = scale.defined();
      for (std::size_t c = 0; c < channels; ++c) {
        const T g = affine ? scale[c] : T(1);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < spatial; ++i) {
            const std::size_t idx = at_(b, c) + i;
            const double xh = training ? static_cast<double>(xhat[idx])
                                       : (static_cast<double>(input[idx]) - mean[c]) * inv_std[c];
            sum_dy += go[idx];
            sum_dy_xhat += go[idx] * xh;
          }
        if (affine && scale.requires_grad()) scale.grad()[c] += T(sum_dy_xhat);
        if (affine && shift.requires_grad()) shift.grad()[c] += T(sum_dy);
        if (!input.requires_grad()) continue;
        auto gi = input.grad();
        const double n = static_cast<double>(count);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < spatial; ++i) {
            const std::size_t idx = at_(b, c) + i;
            if (training) {
              const double dxhat = static_cast<double>(go[idx]) * g;
              const double mdxhat = sum_dy * g / n;
              const double mdxhat_xhat = sum_dy_xhat * g / n;
              gi[idx] += T(inv_std[c] * (dxhat - mdxhat - xhat[idx] * mdxhat_xhat));
            } else {
              gi[idx] += go[idx] * g * inv_std[c];
            }
          }
      }
    });
  }
  return out;
}

/// Moves time to axis 1: [B,C,F,T] -> [B,T,C*F], feature index c*F + f.
template <typename T>
Tensor<T> time_major_flatten(const Tensor<T>& input, Tape<T>* tape = nullptr) {
  if (input.rank() != 4) throw ShapeError("time_major_flatten: expected [B,C,F,T], got " + to_string(input.shape()));
  const std::size_t batch = input.dim(0), ch = input.dim(1), freq = input.dim(2), time = input.dim(3);
  Tensor<T> out({batch, time, ch * freq});
  auto src_index = [=](std::size_t b, std::size_t t, std::size_t feat) {
    const std::size_t c = feat / freq, f = feat % freq;
    return ((b * ch + c) * freq + f) * time + t;
  };
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < time; ++t)
      for (std::size_t feat = 0; feat < ch * freq; ++feat)
        out[(b * time + t) * ch * freq + feat] = input[src_index(b, t, feat)];
  if (detail::recording(tape, {&input})) {
    out.set_requires_grad(true);
    tape->record([=]() mutable {
      auto gi = input.grad();
      auto go = out.grad();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < time; ++t)
          for (std::size_t feat = 0; feat < ch * freq; ++feat)
            gi[src_index(b, t, feat)] += go[(b * time + t) * ch * freq + feat];
    });
  }
  return out;
}

/// [B,T,D] -> [B,D]: elementwise max over time plus mean over time.
template <typename T>
Tensor<T> temporal_pool(const Tensor<T>& input, Tape<T>* tape = nullptr) {
  if (input.rank() != 3) throw ShapeError("temporal_pool: expected [B,T,D], got " + to_string(input.shape()));
  const std::size_t batch = input.dim(0), time = input.dim(1), dim = input.dim(2);
  Tensor<T> out({batch, dim});
  std::vector<std::size_t> argmax(batch * dim);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t d = 0; d < dim; ++d) {
      std::size_t best = b * time * dim + d;
      double sum = 0.0;
      for (std::size_t t = 0; t < time; ++t) {
        const std::size_t idx = (b * time + t) * dim + d;
        if (input[idx] > input[best]) best = idx;
        sum += input[idx];
      }
      argmax[b * dim + d] = best;
      out[b * dim + d] = input[best] + T(sum / static_cast<double>(time));
    }
  }
  detail::check_finite(out, "temporal_pool");
  if (detail::recording(tape, {&input})) {
    out.set_requires_grad(true);
    tape->record([=, argmax = std::move(argmax)]() mutable {
      auto gi = input.grad();
      auto go = out.grad();
      const T inv_t = T(1.0 / static_cast<double>(time));
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t d = 0; d < dim; ++d) {
          const T g = go[b * dim + d];
          gi[argmax[b * dim + d]] += g;
          for (std::size_t t = 0; t < time; ++t) gi[(b * time + t) * dim + d] += g * inv_t;
        }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input, Tape<T>* tape = nullptr) {
  double s = 0.0;
  for (const T v : input.data()) s += v;
  Tensor<T> out({1}, T(s));
  detail::check_finite(out, "sum");
  if (detail::recording(tape, {&input})) {
    out.set_requires_grad(true);
    tape->record([input, out]() mutable {
      const T g = out.grad()[0];
      for (auto& gi : input.grad()) gi += g;
    });
  }
  return out;
}

/// Elementwise product of equally shaped tensors.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  detail::expect_shape(b.shape(), a.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  detail::check_finite(out, "mul");
  if (detail::recording(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * a[i];
      }
    });
  }
  return out;
}

/// Mean softmax cross-entropy of logits [B,K] against integer labels.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                                Tape<T>* tape = nullptr) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be [B,K]");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) throw ShapeError("softmax_cross_entropy: label count differs from batch");
  std::vector<T> probs(logits.numel());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) + " out of range");
    }
    const T* row = logits.data().data() + b * classes;
    const T mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) z += std::exp(static_cast<double>(row[k] - mx));
    for (std::size_t k = 0; k < classes; ++k)
      probs[b * classes + k] = T(std::exp(static_cast<double>(row[k] - mx)) / z);
    loss += -(static_cast<double>(row[y] - mx) - std::log(z));
  }
  Tensor<T> out({1}, T(loss / static_cast<double>(batch)));
  detail::check_finite(out, "softmax_cross_entropy");
  if (detail::recording(tape, {&logits})) {
    out.set_requires_grad(true);
    tape->record([=, probs = std::move(probs)]() mutable {
      const T g = out.grad()[0] / T(batch);
      auto gi = logits.grad();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t k = 0; k < classes; ++k) {
          const T onehot = static_cast<int>(k) == labels[b] ? T(1) : T(0);
          gi[b * classes + k] += g * (probs[b * classes + k] - onehot);
        }
    });
  }
  return out;
}

}  // namespace delores
