#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace charcom {

/// Row-major dense matrix of doubles. Entries are always finite.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols);  // zero-filled
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }
  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  /// y = M x
  std::vector<double> multiply(std::span<const double> x) const;
  /// y += scale * M x
  void multiply_accumulate(std::span<const double> x, double scale, std::span<double> y) const;

  bool operator==(const DenseMatrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& lhs, const DenseMatrix& rhs);

struct InitSpec {
  double a_stddev = 0.02;
};

/// Residual delta = B * A with B: d_out x r and A: r x d_in.
class LowRankUpdate {
 public:
  LowRankUpdate() = default;
  LowRankUpdate(DenseMatrix b_factor, DenseMatrix a_factor);

  const DenseMatrix& b_factor() const noexcept { return b_; }
  const DenseMatrix& a_factor() const noexcept { return a_; }
  DenseMatrix& b_factor() noexcept { return b_; }
  DenseMatrix& a_factor() noexcept { return a_; }

  std::size_t rank() const noexcept { return b_.cols(); }
  std::size_t d_out() const noexcept { return b_.rows(); }
  std::size_t d_in() const noexcept { return a_.cols(); }
  std::size_t parameter_count() const noexcept { return b_.size() + a_.size(); }

  bool operator==(const LowRankUpdate& other) const = default;

 private:
  DenseMatrix b_;
  DenseMatrix a_;
};

struct WeightedUpdate {
  std::string character_id;
  LowRankUpdate update;
  double weight = 0.0;
};

/// Weighted residuals destined for one base matrix. Entries are applied in
/// ascending character-id order regardless of insertion order, so results do
/// not depend on how the set was assembled.
struct WeightedUpdateSet {
  std::vector<WeightedUpdate> entries;
  // Global multiplier on every residual (the conventional alpha/r knob). 1 = off.
  double rank_scale = 1.0;

  bool empty() const noexcept { return entries.empty(); }
};

LowRankUpdate make_lowrank(std::size_t d_out, std::size_t d_in, std::size_t rank, const InitSpec& init,
                           std::uint64_t seed);

DenseMatrix materialize(const LowRankUpdate& update);

/// base + sum_c w_c B_c A_c. Zero-weight entries are skipped, so an empty or
/// all-zero set returns `base` bit-for-bit.
DenseMatrix fuse(const DenseMatrix& base, const WeightedUpdateSet& set);

/// fuse(base, set) * x without forming the fused matrix; per adapter the extra
/// cost is r * (d_in + d_out).
std::vector<double> fused_apply(const DenseMatrix& base, const WeightedUpdateSet& set, std::span<const double> x);

}  // namespace charcom
