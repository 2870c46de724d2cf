#include "spikelab/contraction.hpp"

#include <cmath>
#include <string>

#include "spikelab/error.hpp"

namespace spikelab {

ContractionMatrix::ContractionMatrix(DimProfile profile, Matrix data)
    : profile_(std::move(profile)), data_(std::move(data)) {
  const auto n = static_cast<Eigen::Index>(profile_.total());
  if (data_.rows() != n || data_.cols() != n) {
    throw DimensionError("contraction matrix must be N x N");
  }
}

void check_unit_vectors(const DimProfile& profile, std::span<const Vector> vs, double tol) {
  if (vs.size() != profile.order()) throw DimensionError("one vector per mode required");
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (static_cast<std::size_t>(vs[i].size()) != profile.dim(i)) {
      throw DimensionError("vector length mismatch in mode " + std::to_string(i));
    }
    if (std::abs(vs[i].norm() - 1.0) > tol) {
      throw DimensionError("vector for mode " + std::to_string(i) + " is not unit norm");
    }
  }
}

ContractionMatrix build_phi(const DenseTensor& t, std::span<const Vector> vs) {
  const DimProfile& p = t.profile();
  check_unit_vectors(p, vs);
  const auto n = static_cast<Eigen::Index>(p.total());
  Matrix data = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < p.order(); ++i) {
    for (std::size_t j = i + 1; j < p.order(); ++j) {
      const Matrix block = contract_except_pair(t, vs, i, j);
      const auto oi = static_cast<Eigen::Index>(p.offset(i));
      const auto oj = static_cast<Eigen::Index>(p.offset(j));
      data.block(oi, oj, block.rows(), block.cols()) = block;
      data.block(oj, oi, block.cols(), block.rows()) = block.transpose();
    }
  }
  return ContractionMatrix(p, std::move(data));
}

SpikePart build_spike_part(const SpikedModel& model, std::span<const Vector> vs) {
  if (model.rank() != 1) throw ConfigError("spike decomposition needs a rank-one model");
  const DimProfile& p = model.profile;
  check_unit_vectors(p, vs);
  const std::size_t d = p.order();
  const auto& x = model.spikes.front();

  std::vector<double> overlap(d);
  for (std::size_t k = 0; k < d; ++k) overlap[k] = vs[k].dot(x[k]);

  SpikePart part;
  part.beta = model.betas.front();
  part.b = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      double prod = 1.0;
      for (std::size_t k = 0; k < d; ++k) {
        if (k != i && k != j) prod *= overlap[k];
      }
      part.b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = prod;
      part.b(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = prod;
    }
  }
  part.v = Matrix::Zero(static_cast<Eigen::Index>(p.total()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    part.v.block(static_cast<Eigen::Index>(p.offset(i)), static_cast<Eigen::Index>(i),
                 static_cast<Eigen::Index>(p.dim(i)), 1) = x[i];
  }
  return part;
}

Vector apply_to_stacked(const ContractionMatrix& m, std::span<const Vector> vs) {
  const Vector h = stack(vs);
  if (h.size() != m.data().rows()) throw DimensionError("stacked vector length mismatch");
  return m.data() * h;
}

double outlier_identity_residual(const ContractionMatrix& m, std::span<const Vector> vs,
                                 double lambda) {
  const double d = static_cast<double>(m.profile().order());
  const Vector h = stack(vs) / std::sqrt(d);
  return (m.data() * h - (d - 1.0) * lambda * h).norm();
}

}  // namespace spikelab
