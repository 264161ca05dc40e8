#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sst {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f32 array. The last dimension is the "row" dimension for
// every kernel that reduces along rows.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, float value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Size of the last dimension and the number of rows along it.
  std::size_t row_size() const;
  std::size_t row_count() const;

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<float> row(std::size_t i);
  std::span<const float> row(std::size_t i) const;

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Shapes equal and every element has the same bit pattern.
bool bit_equal(const Tensor& a, const Tensor& b);

// Largest |a_i - b_i|; throws ShapeError on mismatch.
float max_abs_diff(const Tensor& a, const Tensor& b);

// Throws NumericError naming `where` if any element is NaN or Inf.
void require_finite(const Tensor& t, std::string_view where);
void require_finite(std::span<const float> values, std::string_view where);

// 64-bit FNV-1a over the raw bytes of the values (shape included).
std::uint64_t content_hash(const Tensor& t);

}  // namespace sst
