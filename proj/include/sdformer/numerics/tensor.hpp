#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sdformer/error.hpp"

namespace sdformer {

using Index = std::ptrdiff_t;

/// Row-major extents of a dense tensor. Rank 0 denotes a scalar.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> extents) : extents_(extents) { validate(); }
  explicit Shape(std::vector<Index> extents) : extents_(std::move(extents)) { validate(); }

  int rank() const { return static_cast<int>(extents_.size()); }
  Index operator[](int axis) const { return extents_[static_cast<std::size_t>(axis)]; }
  const std::vector<Index>& extents() const { return extents_; }

  Index numel() const {
    return std::accumulate(extents_.begin(), extents_.end(), Index{1}, std::multiplies<>());
  }

  bool operator==(const Shape&) const = default;

  std::string str() const {
    if (extents_.empty()) return "scalar";
    std::ostringstream os;
    for (std::size_t i = 0; i < extents_.size(); ++i) os << (i ? "x" : "") << extents_[i];
    return os.str();
  }

 private:
  void validate() const {
    for (std::size_t i = 0; i < extents_.size(); ++i)
      if (extents_[i] <= 0)
        throw ConfigError("shape extent " + std::to_string(i) + " must be positive, got " +
                          std::to_string(extents_[i]));
  }

  std::vector<Index> extents_;
};

/// Dense row-major tensor owning a contiguous buffer.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using ArrayMap = Eigen::Map<Array>;
  using ConstArrayMap = Eigen::Map<const Array>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.numel()), Scalar(0)) {}
  Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.numel()), fill) {}
  Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<Index>(data_.size()) != shape_.numel())
      throw ConfigError("tensor buffer has " + std::to_string(data_.size()) + " elements, shape " +
                        shape_.str() + " needs " + std::to_string(shape_.numel()));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor constant(Shape shape, Scalar value) { return Tensor(std::move(shape), value); }
  static Tensor scalar(Scalar value) { return Tensor(Shape{}, value); }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  Index dim(int axis) const { return shape_[axis]; }
  Index size() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return data_; }
  std::span<const Scalar> values() const { return data_; }

  ArrayMap array() { return ArrayMap(data_.data(), size()); }
  ConstArrayMap array() const { return ConstArrayMap(data_.data(), size()); }

  Scalar& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  Scalar operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Element of a rank-3 (C x H x W) tensor.
  Scalar& operator()(Index c, Index h, Index w) { return data_[offset3(c, h, w)]; }
  Scalar operator()(Index c, Index h, Index w) const { return data_[offset3(c, h, w)]; }

  Scalar item() const {
    if (size() != 1) throw ConfigError("item() on tensor of shape " + shape_.str());
    return data_[0];
  }

  Tensor reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
  }
  Tensor reshaped(Shape shape) && {
    if (shape.numel() != size())
      throw ConfigError("cannot reshape " + shape_.str() + " to " + shape.str());
    shape_ = std::move(shape);
    return std::move(*this);
  }

  template <typename To>
  Tensor<To> cast() const {
    std::vector<To> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](Scalar v) { return static_cast<To>(v); });
    return Tensor<To>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
  }

  bool operator==(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

 private:
  std::size_t offset3(Index c, Index h, Index w) const {
    return static_cast<std::size_t>((c * shape_[1] + h) * shape_[2] + w);
  }

  Shape shape_;
  std::vector<Scalar> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace sdformer
