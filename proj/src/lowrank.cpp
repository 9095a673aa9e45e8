#include "charcom/lowrank.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "charcom/errors.h"
#include "charcom/random.h"

namespace charcom {

namespace {

void require_finite(std::span<const double> data) {
  for (double v : data) {
    if (!std::isfinite(v)) throw InvalidArgument("DenseMatrix: non-finite entry");
  }
}

// Indices of entries in canonical (character id) order.
std::vector<std::size_t> canonical_order(const WeightedUpdateSet& set) {
  std::vector<std::size_t> order(set.entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    const auto& a = set.entries[l];
    const auto& b = set.entries[r];
    if (a.character_id != b.character_id) return a.character_id < b.character_id;
    return a.weight < b.weight;
  });
  return order;
}

void check_compatible(std::size_t rows, std::size_t cols, const WeightedUpdateSet& set) {
  for (const auto& e : set.entries) {
    if (e.update.d_out() != rows || e.update.d_in() != cols) {
      throw InvalidArgument("update for '" + e.character_id + "' is " + std::to_string(e.update.d_out()) + "x" +
                            std::to_string(e.update.d_in()) + ", base is " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    }
    if (!(e.weight >= 0.0 && e.weight <= 1.0)) {
      throw InvalidArgument("weight for '" + e.character_id + "' outside [0,1]");
    }
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw InvalidArgument("DenseMatrix: " + std::to_string(data_.size()) + " values for " + std::to_string(rows) +
                          "x" + std::to_string(cols));
  }
  require_finite(data_);
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> DenseMatrix::multiply(std::span<const double> x) const {
  std::vector<double> y(rows_, 0.0);
  multiply_accumulate(x, 1.0, y);
  return y;
}

void DenseMatrix::multiply_accumulate(std::span<const double> x, double scale, std::span<double> y) const {
  if (x.size() != cols_ || y.size() != rows_) {
    throw InvalidArgument("matrix-vector: " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                          " against vector of length " + std::to_string(x.size()));
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    const double* w = data_.data() + r * cols_;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols_; ++c) acc += w[c] * x[c];
    y[r] += scale == 1.0 ? acc : scale * acc;
  }
}

DenseMatrix matmul(const DenseMatrix& lhs, const DenseMatrix& rhs) {
  if (lhs.cols() != rhs.rows()) {
    throw InvalidArgument("matmul: inner dimensions " + std::to_string(lhs.cols()) + " and " +
                          std::to_string(rhs.rows()));
  }
  DenseMatrix out(lhs.rows(), rhs.cols());
  for (std::size_t i = 0; i < lhs.rows(); ++i) {
    for (std::size_t k = 0; k < lhs.cols(); ++k) {
      const double l = lhs(i, k);
      if (l == 0.0) continue;
      for (std::size_t j = 0; j < rhs.cols(); ++j) out(i, j) += l * rhs(k, j);
    }
  }
  return out;
}

LowRankUpdate::LowRankUpdate(DenseMatrix b_factor, DenseMatrix a_factor) : b_(std::move(b_factor)), a_(std::move(a_factor)) {
  if (b_.cols() == 0 || b_.cols() != a_.rows()) {
    throw InvalidArgument("LowRankUpdate: B has " + std::to_string(b_.cols()) + " columns, A has " +
                          std::to_string(a_.rows()) + " rows");
  }
  if (b_.rows() == 0 || a_.cols() == 0) throw InvalidArgument("LowRankUpdate: zero dimension");
}

LowRankUpdate make_lowrank(std::size_t d_out, std::size_t d_in, std::size_t rank, const InitSpec& init,
                           std::uint64_t seed) {
  if (d_out == 0 || d_in == 0) throw InvalidArgument("make_lowrank: dimensions must be >= 1");
  if (rank == 0) throw InvalidArgument("make_lowrank: rank must be >= 1");
  if (!(init.a_stddev >= 0.0) || !std::isfinite(init.a_stddev)) {
    throw InvalidArgument("make_lowrank: a_stddev must be finite and non-negative");
  }
  Rng rng(seed);
  DenseMatrix a(rank, d_in, gaussian_vector(rank * d_in, rng, init.a_stddev));
  return LowRankUpdate(DenseMatrix(d_out, rank), std::move(a));
}

DenseMatrix materialize(const LowRankUpdate& update) { return matmul(update.b_factor(), update.a_factor()); }

DenseMatrix fuse(const DenseMatrix& base, const WeightedUpdateSet& set) {
  check_compatible(base.rows(), base.cols(), set);
  DenseMatrix out = base;
  for (std::size_t idx : canonical_order(set)) {
    const auto& e = set.entries[idx];
    const double w = e.weight * set.rank_scale;
    if (w == 0.0) continue;
    const auto& b = e.update.b_factor();
    const auto& a = e.update.a_factor();
    for (std::size_t i = 0; i < out.rows(); ++i) {
      for (std::size_t j = 0; j < out.cols(); ++j) {
        double delta = 0.0;
        for (std::size_t k = 0; k < b.cols(); ++k) delta += b(i, k) * a(k, j);
        out(i, j) += w * delta;
      }
    }
  }
  return out;
}

std::vector<double> fused_apply(const DenseMatrix& base, const WeightedUpdateSet& set, std::span<const double> x) {
  check_compatible(base.rows(), base.cols(), set);
  if (x.size() != base.cols()) {
    throw InvalidArgument("fused_apply: input length " + std::to_string(x.size()) + ", expected " +
                          std::to_string(base.cols()));
  }
  std::vector<double> y = base.multiply(x);
  for (std::size_t idx : canonical_order(set)) {
    const auto& e = set.entries[idx];
    const double w = e.weight * set.rank_scale;
    if (w == 0.0) continue;
    const std::vector<double> projected = e.update.a_factor().multiply(x);
    e.update.b_factor().multiply_accumulate(projected, w, y);
  }
  return y;
}

}  // namespace charcom
