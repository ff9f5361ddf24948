#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cfb {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense n-dimensional array over a flat row-major buffer. All arithmetic runs
// on Eigen views of the buffer; the shape is layout bookkeeping only.
template <class Scalar>
class Tensor {
 public:
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap =
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ArrayMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using ConstArrayMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

  Tensor() = default;

  // Zero-filled tensor of the given shape. Every extent must be positive.
  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    for (Index e : shape_)
      if (e <= 0)
        throw std::invalid_argument("Tensor: extents must be positive, got " +
                                    shape_string(shape_));
    data_ = Storage::Zero(shape_size(shape_));
  }

  Tensor(Shape shape, std::vector<Scalar> values) : Tensor(std::move(shape)) {
    if (static_cast<Index>(values.size()) != size())
      throw std::invalid_argument("Tensor: " + std::to_string(values.size()) +
                                  " values for shape " + shape_string(shape_));
    std::copy(values.begin(), values.end(), data_.data());
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index extent(std::size_t axis) const { return shape_.at(axis); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  ArrayMap array() { return {data_.data(), data_.size()}; }
  ConstArrayMap array() const { return {data_.data(), data_.size()}; }

  // 2-D view with the given extents; must cover the buffer exactly.
  MatrixMap matrix(Index rows, Index cols) {
    check_view(rows, cols);
    return {data_.data(), rows, cols};
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_view(rows, cols);
    return {data_.data(), rows, cols};
  }

  // View splitting off the leading axis: [shape[0], size/shape[0]].
  MatrixMap rows2d() { return matrix(shape_.front(), size() / shape_.front()); }
  ConstMatrixMap rows2d() const { return matrix(shape_.front(), size() / shape_.front()); }

  // Relabel the shape; the element count must be unchanged.
  void reshape(Shape shape) {
    if (shape_size(shape) != size())
      throw std::invalid_argument("Tensor: cannot reshape " + shape_string(shape_) + " to " +
                                  shape_string(shape));
    shape_ = std::move(shape);
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const { return data_.allFinite(); }

  void set_zero() { data_.setZero(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_view(Index rows, Index cols) const {
    if (rows <= 0 || cols <= 0 || rows * cols != size())
      throw std::logic_error("Tensor: " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " view of " + std::to_string(size()) + " elements");
  }

  Shape shape_;
  Storage data_;
};

}  // namespace cfb
