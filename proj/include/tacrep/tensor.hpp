#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace tacrep {

// Dense 4-D tensor, NCHW layout. Lower-rank data uses trailing singleton
// dims (a vector of length L is {1, L, 1, 1}).
template <class T>
class Tensor {
 public:
  Tensor() : dims_{0, 0, 0, 0} {}
  Tensor(int n, int c, int h, int w) : dims_{n, c, h, w} {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw std::invalid_argument("negative tensor dim");
    data_.assign(static_cast<size_t>(n) * c * h * w, T(0));
  }

  static Tensor vec(int len) { return Tensor(1, len, 1, 1); }

  int n() const { return dims_[0]; }
  int c() const { return dims_[1]; }
  int h() const { return dims_[2]; }
  int w() const { return dims_[3]; }
  const std::array<int, 4>& dims() const { return dims_; }
  size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& at(int n, int c, int h, int w) {
    return data_[((static_cast<size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  const T& at(int n, int c, int h, int w) const {
    return data_[((static_cast<size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  Tensor& operator+=(const Tensor& o) {
    assert(same_shape(o));
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    assert(same_shape(o));
    for (size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  T abs_mean() const {
    if (data_.empty()) return T(0);
    double acc = 0;
    for (auto v : data_) acc += std::abs(static_cast<double>(v));
    return static_cast<T>(acc / data_.size());
  }

  T sum() const {
    double acc = 0;
    for (auto v : data_) acc += static_cast<double>(v);
    return static_cast<T>(acc);
  }

  bool all_finite() const {
    for (auto v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(dims_[0], dims_[1], dims_[2], dims_[3]);
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  // Single sample view-copy (n-th slice).
  Tensor slice(int n) const {
    Tensor out(1, dims_[1], dims_[2], dims_[3]);
    size_t stride = out.size();
    std::copy(data_.begin() + n * stride, data_.begin() + (n + 1) * stride, out.data_.begin());
    return out;
  }

  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

 private:
  std::array<int, 4> dims_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace tacrep
