#include "diffstg/tensor.hpp"

#include <functional>
#include <numeric>

namespace diffstg {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void throw_shape_error(std::string_view op, std::string_view detail, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": " + std::string(detail) + " " + shape_string(a) + " vs " +
                   shape_string(b));
}

}  // namespace diffstg
