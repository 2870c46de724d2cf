#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "spikelab/contraction.hpp"
#include "spikelab/limitlaw.hpp"

namespace spikelab {

/// Full eigendecomposition of a contraction matrix together with the squared
/// eigenvector mass that falls in each mode block.
class SpectralSummary {
 public:
  SpectralSummary(DimProfile profile, Vector eigenvalues, Matrix eigenvectors, double trace);

  const DimProfile& profile() const { return profile_; }
  /// Ascending.
  const Vector& eigenvalues() const { return eigenvalues_; }
  const Matrix& eigenvectors() const { return eigenvectors_; }
  /// block_mass()(i, k): squared norm of block i of eigenvector k.
  const Matrix& block_mass() const { return block_mass_; }
  double trace() const { return trace_; }
  std::size_t size() const { return static_cast<std::size_t>(eigenvalues_.size()); }

 private:
  DimProfile profile_;
  Vector eigenvalues_;
  Matrix eigenvectors_;
  Matrix block_mass_;
  double trace_ = 0.0;
};

/// Throws DomainError on non-finite entries.
SpectralSummary eigendecompose(const ContractionMatrix& m);

struct EmpiricalStieltjes {
  Complex g;
  std::vector<Complex> blocks;
};

/// g^N(z) = (1/N) sum_k 1 / (mu_k - z) and the block traces
/// g_i^N(z) = (1/N) sum_k m_ik / (mu_k - z). Real z within 1e-12 of an
/// eigenvalue is a DomainError.
EmpiricalStieltjes empirical_stieltjes(const SpectralSummary& s, Complex z);

struct ESDHistogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> edges;
  std::vector<std::size_t> counts;
  /// counts / (N * bin_width)
  std::vector<double> density;
  std::size_t total = 0;
  std::size_t below = 0;
  std::size_t above = 0;

  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  double bin_center(std::size_t k) const { return lo + (static_cast<double>(k) + 0.5) * bin_width(); }
  double mass_below() const { return static_cast<double>(below) / static_cast<double>(total); }
  double mass_above() const { return static_cast<double>(above) / static_cast<double>(total); }
  double out_of_range_mass() const { return mass_below() + mass_above(); }
  /// sum_k density_k * bin_width
  double integral() const;
};

/// Uniform bins over [lo, hi]; the last bin is closed on the right.
ESDHistogram esd_histogram(std::span<const double> values, double lo, double hi,
                           std::size_t bins);
ESDHistogram esd_histogram(const SpectralSummary& s, double lo, double hi, std::size_t bins = 101);

/// Tabulated CDF of a density on [lo, hi], trapezoid rule, normalized to end
/// at one.
class CdfTable {
 public:
  CdfTable(const std::function<double(double)>& density, double lo, double hi,
           std::size_t points = 2001);
  /// From density values on an increasing grid.
  CdfTable(std::vector<double> xs, const std::vector<double>& density);

  double operator()(double x) const;
  /// Inverse by linear interpolation on the table.
  double quantile(double p) const;
  /// Trapezoid integral before normalization.
  double raw_mass() const { return raw_mass_; }
  double lo() const { return xs_.front(); }
  double hi() const { return xs_.back(); }

 private:
  void integrate(const std::vector<double>& f);

  std::vector<double> xs_;
  std::vector<double> cdf_;
  double raw_mass_ = 0.0;
};

CdfTable law_cdf(const LimitLaw& law, std::size_t points = 2001);

/// Closed-form balanced law: d / (2 pi (d-1)) sqrt(4 (d-1) / d - x^2)_+.
double balanced_density(std::size_t order, double x);
CdfTable balanced_cdf(std::size_t order, std::size_t points = 2001);

struct Outlier {
  std::size_t index = 0;
  double value = 0.0;
};

/// Eigenvalues further than `margin` from [law.lower_edge(), law.upper_edge()].
std::vector<Outlier> detect_outliers(const SpectralSummary& s, const LimitLaw& law,
                                     double margin);
/// Eigenvalues that are not outliers, ascending.
std::vector<double> bulk_eigenvalues(const SpectralSummary& s, const LimitLaw& law,
                                     double margin = 0.15);

/// sup_x |F_n(x) - F(x)| for a sample against a tabulated CDF.
double ks_distance(std::span<const double> sample, const CdfTable& cdf);
/// Bulk eigenvalues (outliers removed with `margin`) against the law.
double ks_distance(const SpectralSummary& s, const LimitLaw& law, double margin = 0.15);
double ks_distance(const SpectralSummary& s, const LimitLaw& law, const CdfTable& cdf,
                   double margin = 0.15);
/// Two-sample Kolmogorov-Smirnov statistic.
double ks_two_sample(std::span<const double> a, std::span<const double> b);

void write_eigenvalues_csv(std::ostream& out, const SpectralSummary& s);
void write_histogram_csv(std::ostream& out, const ESDHistogram& h);
void write_matrix_csv(std::ostream& out, const Matrix& m);

}  // namespace spikelab
