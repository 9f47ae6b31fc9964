#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "awb/common.hpp"

namespace awb {

// Dense row-major n-d array. Feature maps use [C,H,W]; histogram votes add a
// trailing bin axis [C,H,W,B].
template <class T>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, T fill = T(0)) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (int e : shape_) {
      if (e < 1) throw Error(ErrorKind::Config, "tensor extent < 1 in " + shape_str(shape_));
      n *= static_cast<std::size_t>(e);
    }
    data_.assign(n, fill);
  }

  static Tensor from(std::vector<int> shape, std::vector<T> data) {
    Tensor t;
    t.shape_ = std::move(shape);
    std::size_t n = 1;
    for (int e : t.shape_) {
      if (e < 1) throw Error(ErrorKind::Config, "tensor extent < 1 in " + shape_str(t.shape_));
      n *= static_cast<std::size_t>(e);
    }
    if (n != data.size())
      throw Error(ErrorKind::Config, "tensor data size does not match shape " + shape_str(t.shape_));
    t.data_ = std::move(data);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // [C,H,W] accessors
  T& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
  }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * dim(1) + y) * dim(2) + x];
  }

  // [N,C,H,W] accessors (convolution weights [C_out,C_in,kh,kw])
  T& at(int a, int b, int y, int x) {
    return data_[((static_cast<std::size_t>(a) * dim(1) + b) * dim(2) + y) * dim(3) + x];
  }
  const T& at(int a, int b, int y, int x) const {
    return data_[((static_cast<std::size_t>(a) * dim(1) + b) * dim(2) + y) * dim(3) + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    std::vector<U> d(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
    return Tensor<U>::from(shape_, std::move(d));
  }

private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

template <class T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape());
}

}  // namespace awb
