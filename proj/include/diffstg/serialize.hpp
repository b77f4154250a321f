#pragma once

#include <filesystem>

#include "diffstg/tensor.hpp"

namespace diffstg {

// On-disk tensor format: `<base>.bin` holds the values as flat little-endian
// float32, `<base>.shape` holds the single line "shape: d1,d2,...".
// Doubles are narrowed to float32 on write.

void write_tensor_file(const std::filesystem::path& base, const Shape& shape,
                       std::span<const float> values);
std::vector<float> read_tensor_file(const std::filesystem::path& base, Shape& shape);

template <typename T>
void save_tensor(const std::filesystem::path& base, const Tensor<T>& t) {
  std::vector<float> values(t.data().begin(), t.data().end());
  write_tensor_file(base, t.shape(), values);
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& base) {
  Shape shape;
  const std::vector<float> values = read_tensor_file(base, shape);
  return Tensor<T>(shape, std::vector<T>(values.begin(), values.end()));
}

}  // namespace diffstg
