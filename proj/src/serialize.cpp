#include "diffstg/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace diffstg {
namespace {

std::filesystem::path with_suffix(const std::filesystem::path& base, const char* suffix) {
  return std::filesystem::path(base.string() + suffix);
}

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

void write_tensor_file(const std::filesystem::path& base, const Shape& shape,
                       std::span<const float> values) {
  if (numel(shape) != values.size()) throw ShapeError("write_tensor_file: shape/value count mismatch");
  std::ofstream meta(with_suffix(base, ".shape"));
  meta << "shape: ";
  for (std::size_t i = 0; i < shape.size(); ++i) meta << (i ? "," : "") << shape[i];
  meta << "\n";
  if (!meta) throw std::runtime_error("cannot write " + with_suffix(base, ".shape").string());

  std::ofstream bin(with_suffix(base, ".bin"), std::ios::binary);
  for (float f : values) {
    const std::uint32_t word = to_little(std::bit_cast<std::uint32_t>(f));
    bin.write(reinterpret_cast<const char*>(&word), sizeof word);
  }
  if (!bin) throw std::runtime_error("cannot write " + with_suffix(base, ".bin").string());
}

std::vector<float> read_tensor_file(const std::filesystem::path& base, Shape& shape) {
  const auto meta_path = with_suffix(base, ".shape");
  std::ifstream meta(meta_path);
  std::string line;
  if (!std::getline(meta, line) || line.rfind("shape:", 0) != 0) {
    throw std::runtime_error(meta_path.string() + ": missing 'shape:' header");
  }
  shape.clear();
  std::stringstream ss(line.substr(6));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dim = std::stoull(item);
    if (dim == 0) throw std::runtime_error(meta_path.string() + ": zero-sized dimension");
    shape.push_back(static_cast<std::size_t>(dim));
  }
  if (shape.empty()) throw std::runtime_error(meta_path.string() + ": empty shape");

  const auto bin_path = with_suffix(base, ".bin");
  std::ifstream bin(bin_path, std::ios::binary);
  std::vector<float> values(numel(shape));
  for (float& f : values) {
    std::uint32_t word = 0;
    if (!bin.read(reinterpret_cast<char*>(&word), sizeof word)) {
      throw std::runtime_error(bin_path.string() + ": truncated, expected " +
                               std::to_string(values.size()) + " floats");
    }
    f = std::bit_cast<float>(to_little(word));
  }
  if (bin.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error(bin_path.string() + ": trailing bytes after " +
                             std::to_string(values.size()) + " floats");
  }
  return values;
}

}  // namespace diffstg
