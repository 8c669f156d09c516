#include "fedsto/array.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace fedsto::ad {

int64_t numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Array::Array(std::vector<int> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
  for (int dim : shape) {
    if (dim <= 0) throw std::invalid_argument("Array: non-positive dimension in " + shape_str(shape));
  }
  if (numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("Array: shape " + shape_str(shape) + " does not match data length " +
                                std::to_string(data.size()));
  }
}

Array Array::zeros(const std::vector<int>& shape) {
  Array a;
  a.shape = shape;
  a.data.assign(static_cast<size_t>(numel(shape)), 0.0f);
  return a;
}

Array Array::full(const std::vector<int>& shape, float value) {
  Array a = zeros(shape);
  for (auto& v : a.data) v = value;
  return a;
}

Array Array::scalar(float value) {
  Array a;
  a.data.assign(1, value);
  return a;
}

Array Array::identity(int n) {
  Array a = zeros({n, n});
  for (int i = 0; i < n; ++i) a.data[static_cast<size_t>(i) * n + i] = 1.0f;
  return a;
}

bool Array::all_finite() const {
  for (float v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

float& Array::at(std::initializer_list<int> idx) {
  return const_cast<float&>(static_cast<const Array*>(this)->at(idx));
}

float Array::at(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != rank()) {
    throw std::invalid_argument("Array::at: index rank mismatch");
  }
  int64_t off = 0;
  int d = 0;
  for (int i : idx) {
    if (i < 0 || i >= shape[d]) throw std::out_of_range("Array::at: index out of range");
    off = off * shape[d] + i;
    ++d;
  }
  return data[static_cast<size_t>(off)];
}

bool bit_equal(const Array& a, const Array& b) {
  if (a.shape != b.shape) return false;
  if (a.data.size() != b.data.size()) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

}  // namespace fedsto::ad
