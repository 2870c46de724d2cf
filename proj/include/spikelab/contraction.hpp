#pragma once

#include <span>

#include "spikelab/model.hpp"
#include "spikelab/tensor.hpp"

namespace spikelab {

/// The N x N symmetric block matrix Phi_d(T, a^(1), ..., a^(d)). Block (i, j)
/// for i < j is T contracted on every mode except i and j; diagonal blocks are
/// zero.
class ContractionMatrix {
 public:
  ContractionMatrix(DimProfile profile, Matrix data);

  const DimProfile& profile() const { return profile_; }
  const Matrix& data() const { return data_; }
  std::size_t offset(std::size_t mode) const { return profile_.offset(mode); }
  auto block(std::size_t i, std::size_t j) const {
    return data_.block(static_cast<Eigen::Index>(profile_.offset(i)),
                       static_cast<Eigen::Index>(profile_.offset(j)),
                       static_cast<Eigen::Index>(profile_.dim(i)),
                       static_cast<Eigen::Index>(profile_.dim(j)));
  }

 private:
  DimProfile profile_;
  Matrix data_;
};

/// Throws DimensionError unless every vector is unit norm to `tol` and has the
/// matching mode length.
void check_unit_vectors(const DimProfile& profile, std::span<const Vector> vs,
                        double tol = 1e-10);

ContractionMatrix build_phi(const DenseTensor& t, std::span<const Vector> vs);

/// Signal part of Phi for a rank-one model: Phi(T) - Phi(W / sqrt(N)) =
/// beta V B V^T, with B_ij = prod_{k != i, j} <u^(k), x^(k)> and V the
/// block-diagonal matrix of spike vectors.
struct SpikePart {
  Matrix b;
  Matrix v;
  double beta = 0.0;

  Matrix reconstruct() const { return beta * v * b * v.transpose(); }
};

SpikePart build_spike_part(const SpikedModel& model, std::span<const Vector> vs);

/// M times the stacked vector (v_1; ...; v_d).
Vector apply_to_stacked(const ContractionMatrix& m, std::span<const Vector> vs);

/// || Phi h - (d-1) lambda h || for the normalized stacked vector h.
double outlier_identity_residual(const ContractionMatrix& m, std::span<const Vector> vs,
                                 double lambda);

}  // namespace spikelab
