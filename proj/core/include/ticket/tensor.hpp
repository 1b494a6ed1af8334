#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ticket {

/// Violated precondition or shape contract. Carries a message naming the
/// offending values.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Numeric failure during training or attacks (non-finite loss/gradients).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

/// Dense row-major tensor of 32-bit floats. Plain value type: copy freely.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(numel(shape), 0.0f) {}
  Tensor(Shape s, std::vector<float> d);

  static Tensor scalar(float v) { return Tensor({1}, {v}); }
  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, float v);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

void check_same_shape(const Tensor& a, const Tensor& b, const std::string& ctx);

bool all_finite(const Tensor& t);

/// Sum of squares with a 64-bit accumulator.
double sum_squares(const Tensor& t);

}  // namespace ticket
