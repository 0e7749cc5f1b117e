#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "srgan/error.hpp"

namespace srgan {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

// Dense row-major tensor with shared copy-on-write storage. Activations use
// (N, C, H, W); conv weights use (Cout, Cin, K, K). A rank-0 tensor is a scalar.
template <typename T>
class TensorT {
 public:
  using value_type = T;

  TensorT() : data_(std::make_shared<std::vector<T>>(1, T(0))) {}

  explicit TensorT(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_dims();
    data_ = std::make_shared<std::vector<T>>(static_cast<std::size_t>(shape_numel(shape_)), fill);
  }

  TensorT(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
    check_dims();
    require(static_cast<std::int64_t>(values.size()) == shape_numel(shape_), ErrorCode::shape_mismatch,
            "tensor data length " + std::to_string(values.size()) + " does not match shape " + shape_str(shape_));
    data_ = std::make_shared<std::vector<T>>(std::move(values));
  }

  static TensorT scalar(T v) { return TensorT(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const noexcept { return static_cast<std::int64_t>(data_->size()); }

  std::span<const T> data() const noexcept { return {data_->data(), data_->size()}; }

  // Detaches from any other holder of the same storage before handing out
  // write access.
  std::span<T> mutable_data() {
    if (data_.use_count() > 1) data_ = std::make_shared<std::vector<T>>(*data_);
    return {data_->data(), data_->size()};
  }

  T item() const {
    require(numel() == 1, ErrorCode::shape_mismatch, "item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
  }

  T operator[](std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }

  TensorT reshaped(Shape shape) const {
    require(shape_numel(shape) == numel(), ErrorCode::shape_mismatch,
            "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    TensorT out = *this;
    out.shape_ = std::move(shape);
    out.check_dims();
    return out;
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> values(data_->begin(), data_->end());
    return TensorT<U>(shape_, std::move(values));
  }

  bool same_storage(const TensorT& other) const noexcept { return data_ == other.data_; }

 private:
  void check_dims() const {
    for (auto d : shape_)
      require(d >= 1, ErrorCode::shape_mismatch, "tensor dimensions must be >= 1, got " + shape_str(shape_));
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// True iff shapes and every element compare equal bit-for-bit.
template <typename T>
bool bit_equal(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() != b.shape()) return false;
  auto da = a.data();
  auto db = b.data();
  return std::equal(da.begin(), da.end(), db.begin());
}

}  // namespace srgan
