#pragma once

#include <cstdint>
#include <vector>

namespace fedsto::ad {

struct SpectralResult {
  double sigma = 0.0;
  std::vector<double> u;  // left singular vector, length rows
  std::vector<double> v;  // right singular vector, length cols
};

// Power iteration for the largest singular value of a rows x cols matrix in
// row-major order. Starts from a seeded random unit vector; the estimate is
// non-decreasing in the iteration count up to convergence. A zero matrix
// yields sigma 0 with zero vectors.
SpectralResult power_iteration(const float* m, int rows, int cols, int iterations, uint64_t seed);

SpectralResult power_iteration(const std::vector<double>& m, int rows, int cols, int iterations,
                               uint64_t seed);

}  // namespace fedsto::ad
