#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace fedsto::ad {

// Dense row-major float32 array. Shape {} is a scalar (one element).
struct Array {
  std::vector<int> shape;
  std::vector<float> data;

  Array() = default;
  Array(std::vector<int> s, std::vector<float> d);

  static Array zeros(const std::vector<int>& shape);
  static Array full(const std::vector<int>& shape, float value);
  static Array scalar(float value);
  static Array identity(int n);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return data.size() == 1 && shape.empty(); }
  bool all_finite() const;

  float& at(std::initializer_list<int> idx);
  float at(std::initializer_list<int> idx) const;

  bool same_shape(const Array& other) const { return shape == other.shape; }
};

int64_t numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// True when the two arrays have identical shape and bit-identical payloads.
bool bit_equal(const Array& a, const Array& b);

}  // namespace fedsto::ad
