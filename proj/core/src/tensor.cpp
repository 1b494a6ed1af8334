#include "ticket/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ticket {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ContractViolation("non-positive extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
  if (numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ContractViolation("data length " + std::to_string(data.size()) +
                            " does not match shape " + shape_str(shape));
  }
}

Tensor Tensor::full(Shape s, float v) {
  Tensor t(std::move(s));
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

void check_same_shape(const Tensor& a, const Tensor& b, const std::string& ctx) {
  if (!a.same_shape(b)) {
    throw ContractViolation(ctx + ": shape mismatch " + shape_str(a.shape) + " vs " +
                            shape_str(b.shape));
  }
}

bool all_finite(const Tensor& t) {
  for (float v : t.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double sum_squares(const Tensor& t) {
  double acc = 0.0;
  for (float v : t.data) acc += static_cast<double>(v) * v;
  return acc;
}

}  // namespace ticket
