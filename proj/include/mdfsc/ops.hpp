#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstring>
#include <vector>

#include "mdfsc/tensor.hpp"

// Forward/backward kernels for the fixed feed-forward network. All convs are
// 3x3, stride 1, padding 1. Backward passes accumulate into ParamTensor.grad.
// Convolutions lower to im2col plus a dense matrix product: the buffer holds
// one column per (in_c, ky, kx) tap so every pixel row is contiguous.

namespace mdfsc {

namespace detail_ops {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using MatXRow =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// column (ic*9 + 3*ky + kx) of C is the input plane ic shifted by
// (ky-1, kx-1) with zero padding; C is (h*w) x (in_c*9), column-major
template <typename T>
void im2col3x3(const T* sample, int in_c, int h, int w, MatX<T>& C) {
  const int hw = h * w;
  C.setZero(hw, in_c * 9);
  for (int ic = 0; ic < in_c; ++ic) {
    const T* ip = sample + static_cast<std::size_t>(ic) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = ky - 1;
      for (int kx = 0; kx < 3; ++kx) {
        const int dx = kx - 1;
        T* col = C.data() + static_cast<std::size_t>(ic * 9 + ky * 3 + kx) * hw;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y)
          std::memcpy(col + y * w + x0, ip + (y + dy) * w + x0 + dx,
                      static_cast<std::size_t>(x1 - x0) * sizeof(T));
      }
    }
  }
}

// scatter-add of the im2col layout back onto an image plane
template <typename T>
void col2im3x3(const MatX<T>& C, int in_c, int h, int w, T* sample) {
  const int hw = h * w;
  for (int ic = 0; ic < in_c; ++ic) {
    T* ip = sample + static_cast<std::size_t>(ic) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = ky - 1;
      for (int kx = 0; kx < 3; ++kx) {
        const int dx = kx - 1;
        const T* col =
            C.data() + static_cast<std::size_t>(ic * 9 + ky * 3 + kx) * hw;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          T* irow = ip + (y + dy) * w + dx;
          const T* crow = col + y * w;
          for (int x = x0; x < x1; ++x) irow[x] += crow[x];
        }
      }
    }
  }
}

}  // namespace detail_ops

template <typename T>
Tensor4T<T> conv2d(const Tensor4T<T>& in, const Tensor4T<T>& weight,
                   const Tensor4T<T>& bias) {
  require(weight.h == 3 && weight.w == 3, "conv2d: kernel must be 3x3");
  require(in.c == weight.c,
          "conv2d: input channels " + std::to_string(in.c) +
              " != weight in_c " + std::to_string(weight.c));
  require(bias.n == weight.n && bias.c == 1 && bias.h == 1 && bias.w == 1,
          "conv2d: bias dims must be (out_c,1,1,1)");
  require(in.h >= 1 && in.w >= 1, "conv2d: empty spatial dims");

  using namespace detail_ops;
  const int out_c = weight.n, h = in.h, w = in.w, hw = h * w;
  const int K = in.c * 9;
  Tensor4T<T> out(in.n, out_c, h, w);
  Eigen::Map<const MatXRow<T>> W(weight.data.data(), out_c, K);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> B(bias.data.data(),
                                                          out_c);
  MatX<T> C;
  for (int b = 0; b < in.n; ++b) {
    im2col3x3(in.plane(b, 0), in.c, h, w, C);
    // output planes are contiguous, so the sample maps as (h*w) x out_c
    Eigen::Map<MatX<T>> O(out.plane(b, 0), hw, out_c);
    O.noalias() = C * W.transpose();
    O.rowwise() += B;
  }
  return out;
}

// Accumulates weight/bias gradients; returns gradient w.r.t. input.
template <typename T>
Tensor4T<T> conv2d_backward(const Tensor4T<T>& in, ParamTensorT<T>& weight,
                            ParamTensorT<T>& bias, const Tensor4T<T>& gout) {
  const Tensor4T<T>& wv = weight.value;
  require(gout.n == in.n && gout.c == wv.n && gout.h == in.h && gout.w == in.w,
          "conv2d_backward: grad dims mismatch");

  using namespace detail_ops;
  const int out_c = wv.n, h = in.h, w = in.w, hw = h * w;
  const int K = in.c * 9;
  Tensor4T<T> gin(in.n, in.c, h, w);
  Eigen::Map<const MatXRow<T>> W(wv.data.data(), out_c, K);
  Eigen::Map<MatXRow<T>> Wg(weight.grad.data.data(), out_c, K);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> Bg(bias.grad.data.data(),
                                                     out_c);
  MatX<T> C, Cg;
  for (int b = 0; b < in.n; ++b) {
    im2col3x3(in.plane(b, 0), in.c, h, w, C);
    Eigen::Map<const MatX<T>> G(gout.plane(b, 0), hw, out_c);
    // bias grad via a plain sequential loop: Eigen's vectorized column
    // reduction groups terms starting from the first runtime-aligned
    // element, so its rounding depends on the heap address of gout and
    // run-to-run bit-reproducibility would be lost
    for (int oc = 0; oc < out_c; ++oc) {
      T acc = T(0);
      const T* gp = gout.plane(b, 0) + static_cast<std::size_t>(oc) * hw;
      for (int i = 0; i < hw; ++i) acc += gp[i];
      Bg(oc) += acc;
    }
    Wg.noalias() += G.transpose() * C;
    Cg.noalias() = G * W;
    col2im3x3(Cg, in.c, h, w, gin.plane(b, 0));
  }
  return gin;
}

// Flat positions of each 2x2-window argmax, for backward routing.
using ArgmaxIndices = std::vector<std::uint32_t>;

template <typename T>
std::pair<Tensor4T<T>, ArgmaxIndices> maxpool2(const Tensor4T<T>& in) {
  require(in.h % 2 == 0 && in.w % 2 == 0,
          "maxpool2: odd spatial dims " + in.dims_str());
  const int oh = in.h / 2, ow = in.w / 2;
  Tensor4T<T> out(in.n, in.c, oh, ow);
  ArgmaxIndices idx(out.size());
  std::size_t o = 0;
  for (int b = 0; b < in.n; ++b) {
    for (int ch = 0; ch < in.c; ++ch) {
      const T* ip = in.plane(b, ch);
      const std::uint32_t base =
          static_cast<std::uint32_t>((static_cast<std::size_t>(b) * in.c + ch) *
                                     in.h * in.w);
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          // ties: first position in row-major scan wins
          std::uint32_t best = base + (2 * y) * in.w + 2 * x;
          T bv = ip[(2 * y) * in.w + 2 * x];
          const int cand[3] = {(2 * y) * in.w + 2 * x + 1,
                               (2 * y + 1) * in.w + 2 * x,
                               (2 * y + 1) * in.w + 2 * x + 1};
          for (int k = 0; k < 3; ++k) {
            if (ip[cand[k]] > bv) {
              bv = ip[cand[k]];
              best = base + cand[k];
            }
          }
          out.data[o] = bv;
          idx[o] = best;
          ++o;
        }
      }
    }
  }
  return {std::move(out), std::move(idx)};
}

template <typename T>
Tensor4T<T> maxpool2_backward(const ArgmaxIndices& idx,
                              const Tensor4T<T>& gout, int in_h, int in_w) {
  Tensor4T<T> gin(gout.n, gout.c, in_h, in_w);
  for (std::size_t i = 0; i < gout.size(); ++i) gin.data[idx[i]] += gout.data[i];
  return gin;
}

template <typename T>
Tensor4T<T> relu(const Tensor4T<T>& in) {
  Tensor4T<T> out = in;
  for (T& v : out.data) v = v > T(0) ? v : T(0);
  return out;
}

// Subgradient 0 at exactly 0.
template <typename T>
Tensor4T<T> relu_backward(const Tensor4T<T>& in, const Tensor4T<T>& gout) {
  require(in.same_dims(gout), "relu_backward: dims mismatch");
  Tensor4T<T> gin(in.n, in.c, in.h, in.w);
  for (std::size_t i = 0; i < in.size(); ++i)
    gin.data[i] = in.data[i] > T(0) ? gout.data[i] : T(0);
  return gin;
}

// input (n, d_in, 1, 1), weight (d_out, d_in, 1, 1) -> (n, d_out, 1, 1)
template <typename T>
Tensor4T<T> linear(const Tensor4T<T>& in, const Tensor4T<T>& weight,
                   const Tensor4T<T>& bias) {
  require(in.h == 1 && in.w == 1, "linear: input must be rank-2 (n,d,1,1)");
  require(in.c == weight.c, "linear: input width " + std::to_string(in.c) +
                                " != weight d_in " + std::to_string(weight.c));
  const int d_out = weight.n, d_in = weight.c;
  Tensor4T<T> out(in.n, d_out, 1, 1);
  for (int b = 0; b < in.n; ++b) {
    const T* ip = in.data.data() + static_cast<std::size_t>(b) * d_in;
    T* op = out.data.data() + static_cast<std::size_t>(b) * d_out;
    for (int o = 0; o < d_out; ++o) {
      const T* wp = weight.data.data() + static_cast<std::size_t>(o) * d_in;
      T acc = bias.data[o];
      for (int i = 0; i < d_in; ++i) acc += wp[i] * ip[i];
      op[o] = acc;
    }
  }
  return out;
}

template <typename T>
Tensor4T<T> linear_backward(const Tensor4T<T>& in, ParamTensorT<T>& weight,
                            ParamTensorT<T>& bias, const Tensor4T<T>& gout) {
  const int d_out = weight.value.n, d_in = weight.value.c;
  require(gout.n == in.n && gout.c == d_out, "linear_backward: dims mismatch");
  Tensor4T<T> gin(in.n, d_in, 1, 1);
  for (int b = 0; b < in.n; ++b) {
    const T* ip = in.data.data() + static_cast<std::size_t>(b) * d_in;
    const T* gp = gout.data.data() + static_cast<std::size_t>(b) * d_out;
    T* gip = gin.data.data() + static_cast<std::size_t>(b) * d_in;
    for (int o = 0; o < d_out; ++o) {
      const T g = gp[o];
      bias.grad.data[o] += g;
      const T* wp = weight.value.data.data() + static_cast<std::size_t>(o) * d_in;
      T* gwp = weight.grad.data.data() + static_cast<std::size_t>(o) * d_in;
      for (int i = 0; i < d_in; ++i) {
        gwp[i] += g * ip[i];
        gip[i] += g * wp[i];
      }
    }
  }
  return gin;
}

// Area-average pooling over factor x factor blocks.
template <typename T>
Tensor4T<T> downscale(const Tensor4T<T>& in, int factor) {
  require(factor == 2 || factor == 4, "downscale: factor must be 2 or 4");
  require(in.h % factor == 0 && in.w % factor == 0,
          "downscale: dims " + in.dims_str() + " not divisible by " +
              std::to_string(factor));
  const int oh = in.h / factor, ow = in.w / factor;
  const T inv = T(1) / static_cast<T>(factor * factor);
  Tensor4T<T> out(in.n, in.c, oh, ow);
  for (int b = 0; b < in.n; ++b)
    for (int ch = 0; ch < in.c; ++ch) {
      const T* ip = in.plane(b, ch);
      T* op = out.plane(b, ch);
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          T acc = 0;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              acc += ip[(y * factor + dy) * in.w + x * factor + dx];
          op[y * ow + x] = acc * inv;
        }
    }
  return out;
}

template <typename T>
Tensor4T<T> downscale_backward(const Tensor4T<T>& gout, int factor) {
  const T inv = T(1) / static_cast<T>(factor * factor);
  Tensor4T<T> gin(gout.n, gout.c, gout.h * factor, gout.w * factor);
  for (int b = 0; b < gout.n; ++b)
    for (int ch = 0; ch < gout.c; ++ch) {
      const T* gp = gout.plane(b, ch);
      T* gip = gin.plane(b, ch);
      for (int y = 0; y < gout.h; ++y)
        for (int x = 0; x < gout.w; ++x) {
          const T g = gp[y * gout.w + x] * inv;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              gip[(y * factor + dy) * gin.w + x * factor + dx] = g;
        }
    }
  return gin;
}

// Nearest-neighbor 2x replication.
template <typename T>
Tensor4T<T> upsample2(const Tensor4T<T>& in) {
  Tensor4T<T> out(in.n, in.c, in.h * 2, in.w * 2);
  for (int b = 0; b < in.n; ++b)
    for (int ch = 0; ch < in.c; ++ch) {
      const T* ip = in.plane(b, ch);
      T* op = out.plane(b, ch);
      for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
          const T v = ip[y * in.w + x];
          op[(2 * y) * out.w + 2 * x] = v;
          op[(2 * y) * out.w + 2 * x + 1] = v;
          op[(2 * y + 1) * out.w + 2 * x] = v;
          op[(2 * y + 1) * out.w + 2 * x + 1] = v;
        }
    }
  return out;
}

template <typename T>
Tensor4T<T> upsample2_backward(const Tensor4T<T>& gout) {
  require(gout.h % 2 == 0 && gout.w % 2 == 0,
          "upsample2_backward: odd grad dims");
  Tensor4T<T> gin(gout.n, gout.c, gout.h / 2, gout.w / 2);
  for (int b = 0; b < gout.n; ++b)
    for (int ch = 0; ch < gout.c; ++ch) {
      const T* gp = gout.plane(b, ch);
      T* gip = gin.plane(b, ch);
      for (int y = 0; y < gin.h; ++y)
        for (int x = 0; x < gin.w; ++x)
          gip[y * gin.w + x] = gp[(2 * y) * gout.w + 2 * x] +
                               gp[(2 * y) * gout.w + 2 * x + 1] +
                               gp[(2 * y + 1) * gout.w + 2 * x] +
                               gp[(2 * y + 1) * gout.w + 2 * x + 1];
    }
  return gin;
}

// Mean squared difference.
template <typename T>
T l2_loss(const Tensor4T<T>& pred, const Tensor4T<T>& target) {
  require(pred.same_dims(target), "l2_loss: dims mismatch");
  require(pred.size() > 0, "l2_loss: empty tensors");
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - target.data[i];
    acc += d * d;
  }
  return static_cast<T>(acc / static_cast<double>(pred.size()));
}

template <typename T>
Tensor4T<T> l2_loss_backward(const Tensor4T<T>& pred,
                             const Tensor4T<T>& target) {
  require(pred.same_dims(target), "l2_loss_backward: dims mismatch");
  Tensor4T<T> g(pred.n, pred.c, pred.h, pred.w);
  const T scale = T(2) / static_cast<T>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    g.data[i] = scale * (pred.data[i] - target.data[i]);
  return g;
}

}  // namespace mdfsc
