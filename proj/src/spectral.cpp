#include "fedsto/spectral.hpp"

#include <cmath>

#include "fedsto/rng.hpp"

namespace fedsto::ad {

namespace {

double norm2(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

template <typename Scalar>
SpectralResult power_iteration_impl(const Scalar* m, int rows, int cols, int iterations,
                                    uint64_t seed) {
  SpectralResult res;
  res.u.assign(static_cast<size_t>(rows), 0.0);
  res.v.assign(static_cast<size_t>(cols), 0.0);

  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(cols));
  for (auto& x : v) x = rng.normal();
  double nv = norm2(v);
  if (nv == 0.0) v[0] = 1.0, nv = 1.0;
  for (auto& x : v) x /= nv;

  std::vector<double> u(static_cast<size_t>(rows), 0.0);
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    // u <- normalize(M v)
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      const Scalar* row = m + static_cast<size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) s += static_cast<double>(row[c]) * v[static_cast<size_t>(c)];
      u[static_cast<size_t>(r)] = s;
    }
    double nu = norm2(u);
    if (nu == 0.0) return res;  // zero matrix (or v in the null space)
    for (auto& x : u) x /= nu;
    // v <- normalize(M^T u)
    for (int c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int r = 0; r < rows; ++r) {
        s += static_cast<double>(m[static_cast<size_t>(r) * cols + c]) * u[static_cast<size_t>(r)];
      }
      v[static_cast<size_t>(c)] = s;
    }
    sigma = norm2(v);
    if (sigma == 0.0) return res;
    for (auto& x : v) x /= sigma;
  }
  res.sigma = sigma;
  res.u = std::move(u);
  res.v = std::move(v);
  return res;
}

}  // namespace

SpectralResult power_iteration(const float* m, int rows, int cols, int iterations, uint64_t seed) {
  return power_iteration_impl(m, rows, cols, iterations, seed);
}

SpectralResult power_iteration(const std::vector<double>& m, int rows, int cols, int iterations,
                               uint64_t seed) {
  return power_iteration_impl(m.data(), rows, cols, iterations, seed);
}

}  // namespace fedsto::ad
