#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "u4d/rng.hpp"
#include "u4d/tensor.hpp"

namespace u4d::test {

inline Tensor randn(Shape shape, Rng& rng, double s = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = s * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

inline Tensor param(Shape shape, Rng& rng, double s = 1.0) {
  Tensor t = randn(std::move(shape), rng, s);
  t.set_requires_grad(true);
  return t;
}

// Straight triple loop, kept apart from the library's Eigen path.
inline std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * m + j] += a.at(i * k + p) * b.at(p * m + j);
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace u4d::test
