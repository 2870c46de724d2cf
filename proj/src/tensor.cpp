#include "spikelab/tensor.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "spikelab/error.hpp"

namespace spikelab {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_vectors(const DimProfile& p, std::span<const Vector> vs, std::size_t skip_a,
                   std::size_t skip_b) {
  if (vs.size() != p.order()) {
    throw DimensionError("expected " + std::to_string(p.order()) + " vectors, got " +
                         std::to_string(vs.size()));
  }
  for (std::size_t m = 0; m < p.order(); ++m) {
    if (m == skip_a || m == skip_b) continue;
    if (static_cast<std::size_t>(vs[m].size()) != p.dim(m)) {
      throw DimensionError("vector for mode " + std::to_string(m) + " has length " +
                           std::to_string(vs[m].size()) + ", expected " +
                           std::to_string(p.dim(m)));
    }
  }
}

// Contracts every mode whose `keep` flag is false. The result is the row-major
// tensor over the kept modes, in their original order.
//
// Modes are eliminated from the last to the first. When mode m is reduced the
// working buffer has shape (prefix, n_m, suffix) where suffix is the product of
// the kept modes after m, so each step is a matrix-vector product.
std::vector<double> reduce(const DenseTensor& t, std::span<const Vector> vs,
                           const std::vector<bool>& keep) {
  const auto& dims = t.profile().dims();
  const std::size_t d = dims.size();

  std::vector<double> current;
  const double* src = t.entries().data();
  std::size_t suffix = 1;
  std::size_t prefix = t.size();

  for (std::size_t step = 0; step < d; ++step) {
    const std::size_t m = d - 1 - step;
    const std::size_t n = dims[m];
    prefix /= n;
    if (keep[m]) {
      suffix *= n;
      continue;
    }
    std::vector<double> next(prefix * suffix);
    if (suffix == 1) {
      Eigen::Map<const RowMajorMatrix> a(src, static_cast<Eigen::Index>(prefix),
                                         static_cast<Eigen::Index>(n));
      Eigen::Map<Vector>(next.data(), static_cast<Eigen::Index>(prefix)).noalias() = a * vs[m];
    } else {
      for (std::size_t p = 0; p < prefix; ++p) {
        Eigen::Map<const RowMajorMatrix> block(src + p * n * suffix, static_cast<Eigen::Index>(n),
                                               static_cast<Eigen::Index>(suffix));
        Eigen::Map<Vector>(next.data() + p * suffix, static_cast<Eigen::Index>(suffix))
            .noalias() = block.transpose() * vs[m];
      }
    }
    current = std::move(next);
    src = current.data();
  }
  if (current.empty() || src != current.data()) {
    // Nothing was contracted; copy the tensor as is.
    current.assign(src, src + prefix * suffix);
  }
  return current;
}

}  // namespace

DimProfile::DimProfile(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw DimensionError("profile needs at least one mode");
  offsets_.reserve(dims_.size());
  for (std::size_t n : dims_) {
    if (n == 0) throw DimensionError("mode sizes must be positive");
    offsets_.push_back(total_);
    total_ += n;
  }
}

DimProfile DimProfile::balanced(std::size_t order, std::size_t n) {
  return DimProfile(std::vector<std::size_t>(order, n));
}

double DimProfile::ratio(std::size_t mode) const {
  return static_cast<double>(dims_[mode]) / static_cast<double>(total_);
}

std::vector<double> DimProfile::ratios() const {
  std::vector<double> c(dims_.size());
  for (std::size_t i = 0; i < dims_.size(); ++i) c[i] = ratio(i);
  return c;
}

std::size_t DimProfile::entry_count() const {
  std::size_t count = 1;
  for (std::size_t n : dims_) {
    if (count > std::numeric_limits<std::size_t>::max() / n) {
      return std::numeric_limits<std::size_t>::max();
    }
    count *= n;
  }
  return count;
}

bool DimProfile::is_balanced() const {
  for (std::size_t n : dims_) {
    if (n != dims_.front()) return false;
  }
  return true;
}

DenseTensor::DenseTensor(DimProfile profile)
    : DenseTensor(profile, std::vector<double>(profile.entry_count(), 0.0)) {}

DenseTensor::DenseTensor(DimProfile profile, std::vector<double> entries)
    : profile_(std::move(profile)), entries_(std::move(entries)) {
  if (entries_.size() != profile_.entry_count()) {
    throw DimensionError("entry count " + std::to_string(entries_.size()) +
                         " does not match the profile (" +
                         std::to_string(profile_.entry_count()) + ")");
  }
  for (double v : entries_) {
    if (!std::isfinite(v)) throw DomainError("tensor entries must be finite");
  }
  const std::size_t d = profile_.order();
  strides_.assign(d, 1);
  for (std::size_t m = d - 1; m > 0; --m) strides_[m - 1] = strides_[m] * profile_.dim(m);
}

std::size_t DenseTensor::linear_index(std::span<const std::size_t> index) const {
  if (index.size() != profile_.order()) throw DimensionError("multi-index has wrong order");
  std::size_t lin = 0;
  for (std::size_t m = 0; m < index.size(); ++m) {
    if (index[m] >= profile_.dim(m)) throw DimensionError("multi-index out of range");
    lin += index[m] * strides_[m];
  }
  return lin;
}

DenseTensor& DenseTensor::operator+=(const DenseTensor& other) {
  if (!(profile_ == other.profile_)) throw DimensionError("tensor shapes differ");
  for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] += other.entries_[k];
  return *this;
}

DenseTensor& DenseTensor::operator*=(double scale) {
  for (double& v : entries_) v *= scale;
  return *this;
}

DenseTensor operator+(DenseTensor lhs, const DenseTensor& rhs) {
  lhs += rhs;
  return lhs;
}

DenseTensor operator*(double scale, DenseTensor tensor) {
  tensor *= scale;
  return tensor;
}

DenseTensor outer_product(std::span<const Vector> vectors, double scale) {
  std::vector<std::size_t> dims;
  for (const auto& v : vectors) dims.push_back(static_cast<std::size_t>(v.size()));
  DimProfile profile(dims);
  std::vector<double> entries{scale};
  for (const auto& v : vectors) {
    std::vector<double> next;
    next.reserve(entries.size() * static_cast<std::size_t>(v.size()));
    for (double e : entries) {
      for (Eigen::Index j = 0; j < v.size(); ++j) next.push_back(e * v[j]);
    }
    entries = std::move(next);
  }
  return DenseTensor(std::move(profile), std::move(entries));
}

double contract_full(const DenseTensor& t, std::span<const Vector> vs) {
  const std::size_t none = t.profile().order();
  check_vectors(t.profile(), vs, none, none);
  std::vector<bool> keep(t.profile().order(), false);
  return reduce(t, vs, keep).front();
}

Vector contract_except(const DenseTensor& t, std::span<const Vector> vs, std::size_t mode) {
  const auto& p = t.profile();
  if (mode >= p.order()) throw DimensionError("mode out of range");
  check_vectors(p, vs, mode, p.order());
  std::vector<bool> keep(p.order(), false);
  keep[mode] = true;
  auto out = reduce(t, vs, keep);
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Matrix contract_except_pair(const DenseTensor& t, std::span<const Vector> vs, std::size_t mode_i,
                            std::size_t mode_j) {
  const auto& p = t.profile();
  if (mode_i >= mode_j || mode_j >= p.order()) {
    throw DimensionError("pair contraction needs modes i < j < d");
  }
  check_vectors(p, vs, mode_i, mode_j);
  std::vector<bool> keep(p.order(), false);
  keep[mode_i] = keep[mode_j] = true;
  auto out = reduce(t, vs, keep);
  return Eigen::Map<RowMajorMatrix>(out.data(), static_cast<Eigen::Index>(p.dim(mode_i)),
                                    static_cast<Eigen::Index>(p.dim(mode_j)));
}

DenseTensor contract_last(const DenseTensor& t, const Vector& v) {
  const auto& dims = t.profile().dims();
  if (dims.size() < 2) throw DimensionError("contract_last needs order >= 2");
  const std::size_t n = dims.back();
  if (static_cast<std::size_t>(v.size()) != n) throw DimensionError("last-mode vector length mismatch");
  const std::size_t prefix = t.size() / n;
  std::vector<double> out(prefix);
  Eigen::Map<const RowMajorMatrix> a(t.entries().data(), static_cast<Eigen::Index>(prefix),
                                     static_cast<Eigen::Index>(n));
  Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(prefix)).noalias() = a * v;
  return DenseTensor(DimProfile(std::vector<std::size_t>(dims.begin(), dims.end() - 1)),
                     std::move(out));
}

Vector stack(std::span<const Vector> vs) {
  Eigen::Index total = 0;
  for (const auto& v : vs) total += v.size();
  Vector out(total);
  Eigen::Index at = 0;
  for (const auto& v : vs) {
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

}  // namespace spikelab
