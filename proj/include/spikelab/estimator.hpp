#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spikelab/model.hpp"
#include "spikelab/tensor.hpp"

namespace spikelab {

enum class InitKind { spike_aligned, random, fixed_point_map };

const char* to_string(InitKind kind);

/// A (possibly unconverged) solution of T(..., ., ...) = lambda u^(i).
struct StationaryPoint {
  double lambda = 0.0;
  std::vector<Vector> modes;
  /// max_i || T(u^(-i)) - lambda u^(i) ||
  double residual = 0.0;
  int iterations = 0;
  InitKind init = InitKind::random;
  bool converged = false;
  /// Modes restarted from a random vector after a vanishing contraction.
  int reinitializations = 0;
  /// |T(u)| after each sweep.
  std::vector<double> objective_trace;
};

struct PowerOptions {
  double tol = 1e-10;
  int max_iter = 2000;
  InitKind init = InitKind::spike_aligned;
  /// Spike vectors used to fix signs: <u^(i), x^(i)> >= 0 for i < d.
  std::optional<std::vector<Vector>> reference;
  /// Seeds the random restarts of degenerate modes.
  std::uint64_t seed = 0;
};

/// Cyclic alternating power iteration (HOPM). Never throws on slow
/// convergence; DegenerateIterateError after repeated vanishing contractions.
StationaryPoint power_iterate(const DenseTensor& t, std::vector<Vector> init,
                              const PowerOptions& options = {});

/// KKT residual max_i || T(u^(-i)) - lambda u^(i) ||.
double kkt_residual(const DenseTensor& t, std::span<const Vector> modes, double lambda);

/// Seeded uniformly random unit vectors, one per mode.
std::vector<Vector> random_unit_vectors(const DimProfile& profile, std::uint64_t seed);

struct BranchOptions {
  double tol = 1e-10;
  int max_iter = 2000;
  /// Bulk-distance margin as a fraction of the support half-width.
  double margin_fraction = 0.05;
  double alignment_floor = 0.3;
  /// Spike used for the initialization and the flags.
  std::size_t component = 0;
};

/// Empirical surrogates of the informative-branch hypotheses.
struct BranchSelection {
  StationaryPoint point;
  double bulk_distance = 0.0;
  double min_alignment = 0.0;
  std::vector<double> alignments;
  bool outlier_separated = false;
  bool aligned = false;
};

BranchSelection select_branch(const DenseTensor& t, const SpikedModel& model,
                              const BranchOptions& options = {});

/// Iterates the fixed-point map on the components (a^(i)) orthogonal to the
/// spike, u^(i) = sqrt(1 - |a^(i)|^2) x^(i) + a^(i). Throws ContractionFailure
/// when some |a^(i)| exceeds r / beta.
StationaryPoint high_signal_fixed_point(const DenseTensor& t, const SpikedModel& model,
                                        double r = 2.0, double tol = 1e-13,
                                        int max_iter = 500);

/// d lambda / d W_idx = prod_l u^(l)_{idx_l} / sqrt(N).
double lambda_derivative(const StationaryPoint& point, std::span<const std::size_t> index);

/// Holds the eigendecomposition of Phi_d(T, u) at a stationary point so that
/// many derivatives can be taken against one factorization.
class KktSensitivity {
 public:
  /// Throws RegularityError if lambda + shift is within `gap` of the spectrum.
  KktSensitivity(const DenseTensor& t, const StationaryPoint& point, double shift = 0.0,
                 double gap = 1e-8);

  /// d u^(i) / d W_idx for every mode.
  std::vector<Vector> vector_derivative(std::span<const std::size_t> index) const;
  /// min_k |mu_k - lambda - shift| over the eigenvalues mu_k of Phi.
  double spectral_distance() const { return distance_; }
  const Vector& eigenvalues() const { return eigenvalues_; }

 private:
  DimProfile profile_;
  std::vector<Vector> modes_;
  double lambda_ = 0.0;
  double shift_ = 0.0;
  Vector eigenvalues_;
  Matrix eigenvectors_;
  double distance_ = 0.0;
};

std::vector<Vector> vector_derivative(const StationaryPoint& point, const DenseTensor& t,
                                      std::span<const std::size_t> index, double shift = 0.0);

/// Centered finite differences of lambda and u^(i) with respect to the noise
/// entry W_idx (T moves by +-h / sqrt(N)), each side re-solved by power
/// iteration warm-started at `point` so the solver stays on its branch. The
/// re-solve error enters as tol / h, so both defaults are set together.
struct FiniteDifference {
  double lambda = 0.0;
  std::vector<Vector> modes;
};

FiniteDifference finite_difference(const DenseTensor& t, const StationaryPoint& point,
                                   std::span<const std::size_t> index, double h = 1e-3,
                                   double tol = 1e-14, int max_iter = 20000);

/// per_mode[i](l, m) = |<u_l^(i), x_m^(i)>| for estimated component l and
/// spike m; the diagonal holds the alignments, the rest the cross-alignments.
struct AlignmentReport {
  std::vector<Matrix> per_mode;

  double alignment(std::size_t component, std::size_t mode) const {
    const auto l = static_cast<Eigen::Index>(component);
    return per_mode[mode](l, l);
  }
  /// Largest off-diagonal entry over all modes.
  double max_cross() const;
};

AlignmentReport alignment_report(std::span<const StationaryPoint> points,
                                 const SpikedModel& model);

struct RankRResult {
  std::vector<BranchSelection> components;
  AlignmentReport report;
};

/// One informative branch per spike, each started at its own spike.
RankRResult rank_r_deflate(const DenseTensor& t, const SpikedModel& model,
                           const BranchOptions& options = {});

}  // namespace spikelab
