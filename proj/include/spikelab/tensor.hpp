#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace spikelab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Mode sizes of an order-d tensor together with the derived totals:
/// N = sum of n_i and the aspect ratios c_i = n_i / N.
class DimProfile {
 public:
  DimProfile() = default;
  explicit DimProfile(std::vector<std::size_t> dims);

  /// Order-d profile with every mode of size n.
  static DimProfile balanced(std::size_t order, std::size_t n);

  std::size_t order() const { return dims_.size(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t dim(std::size_t mode) const { return dims_[mode]; }
  std::size_t total() const { return total_; }
  /// Start of mode `mode` inside a stacked vector of length N.
  std::size_t offset(std::size_t mode) const { return offsets_[mode]; }
  double ratio(std::size_t mode) const;
  std::vector<double> ratios() const;
  /// Product of the mode sizes, saturating at SIZE_MAX on overflow.
  std::size_t entry_count() const;
  bool is_balanced() const;

  bool operator==(const DimProfile& other) const { return dims_ == other.dims_; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

/// Dense real tensor stored row-major (last index fastest).
class DenseTensor {
 public:
  DenseTensor() = default;
  /// Zero tensor of the given shape.
  explicit DenseTensor(DimProfile profile);
  DenseTensor(DimProfile profile, std::vector<double> entries);

  const DimProfile& profile() const { return profile_; }
  std::size_t size() const { return entries_.size(); }
  std::span<const double> entries() const { return entries_; }
  std::span<double> entries() { return entries_; }

  double at(std::span<const std::size_t> index) const { return entries_[linear_index(index)]; }
  double& at(std::span<const std::size_t> index) { return entries_[linear_index(index)]; }
  std::size_t linear_index(std::span<const std::size_t> index) const;

  DenseTensor& operator+=(const DenseTensor& other);
  DenseTensor& operator*=(double scale);

 private:
  DimProfile profile_;
  std::vector<double> entries_;
  std::vector<std::size_t> strides_;
};

DenseTensor operator+(DenseTensor lhs, const DenseTensor& rhs);
DenseTensor operator*(double scale, DenseTensor tensor);

/// Rank-one tensor scale * v_1 (x) ... (x) v_d.
DenseTensor outer_product(std::span<const Vector> vectors, double scale = 1.0);

// Contractions. These are multilinear in the vectors and accept vectors of
// any norm; only the lengths are checked against the tensor's mode sizes.
// Where a mode is left free, the corresponding entry of `vs` is ignored.

/// T(v_1, ..., v_d).
double contract_full(const DenseTensor& t, std::span<const Vector> vs);

/// T(v_1, ..., v_{i-1}, ., v_{i+1}, ..., v_d), a vector of length n_i.
Vector contract_except(const DenseTensor& t, std::span<const Vector> vs, std::size_t mode);

/// T with modes i < j left free: an n_i x n_j matrix.
Matrix contract_except_pair(const DenseTensor& t, std::span<const Vector> vs, std::size_t mode_i,
                            std::size_t mode_j);

/// T contracted on its last mode only: an order-(d-1) tensor.
DenseTensor contract_last(const DenseTensor& t, const Vector& v);

/// Stacks one vector per mode into a single vector of length N.
Vector stack(std::span<const Vector> vs);

}  // namespace spikelab
