#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "charcom/lowrank.h"
#include "charcom/random.h"
#include "charcom/world.h"

namespace charcom::testing {

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
  return DenseMatrix(rows, cols, gaussian_vector(rows * cols, rng, stddev));
}

inline LowRankUpdate random_update(std::size_t d_out, std::size_t d_in, std::size_t rank, Rng& rng) {
  return LowRankUpdate(random_matrix(d_out, rank, rng), random_matrix(rank, d_in, rng));
}

// Triple-loop product, independent of the library kernels.
inline std::vector<std::vector<double>> naive_product(const DenseMatrix& a, const DenseMatrix& b) {
  std::vector<std::vector<double>> out(a.rows(), std::vector<double>(b.cols(), 0.0));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) out[i][j] += a(i, k) * b(k, j);
  return out;
}

inline double relative_error(const std::vector<double>& got, const std::vector<double>& want) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num = std::max(num, std::abs(got[i] - want[i]));
    den = std::max(den, std::abs(want[i]));
  }
  return num / std::max(den, 1e-300);
}

inline bool bit_identical(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
           return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
         });
}

// Default world, built once per test binary.
inline const World& shared_world() {
  static const World world = build_world(WorldConfig{}, 11);
  return world;
}

}  // namespace charcom::testing
