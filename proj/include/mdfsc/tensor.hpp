#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mdfsc/errors.hpp"

namespace mdfsc {

// Dense rank-4 array (batch, channel, height, width), row-major with n
// outermost. Rank-2 data for linear layers is carried as (n, d, 1, 1).
template <typename T>
struct Tensor4T {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor4T() = default;
  Tensor4T(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {
    require(n_ >= 0 && c_ >= 0 && h_ >= 0 && w_ >= 0, "Tensor4: negative dim");
  }

  std::size_t size() const { return data.size(); }

  T& at(int i, int j, int y, int x) {
    return data[((static_cast<std::size_t>(i) * c + j) * h + y) * w + x];
  }
  T at(int i, int j, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * c + j) * h + y) * w + x];
  }

  T* plane(int i, int j) {
    return data.data() + (static_cast<std::size_t>(i) * c + j) * h * w;
  }
  const T* plane(int i, int j) const {
    return data.data() + (static_cast<std::size_t>(i) * c + j) * h * w;
  }

  bool same_dims(const Tensor4T& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string dims_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  template <typename U>
  Tensor4T<U> cast() const {
    Tensor4T<U> out(n, c, h, w);
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor4 = Tensor4T<float>;

// Trainable tensor with gradient and Adam state.
template <typename T>
struct ParamTensorT {
  Tensor4T<T> value;
  Tensor4T<T> grad;
  Tensor4T<T> adam_m;
  Tensor4T<T> adam_v;
  long step_count = 0;

  ParamTensorT() = default;
  explicit ParamTensorT(Tensor4T<T> v)
      : value(std::move(v)),
        grad(value.n, value.c, value.h, value.w),
        adam_m(value.n, value.c, value.h, value.w),
        adam_v(value.n, value.c, value.h, value.w) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

using ParamTensor = ParamTensorT<float>;

}  // namespace mdfsc
