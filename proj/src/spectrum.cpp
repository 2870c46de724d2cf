#include "spikelab/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "spikelab/error.hpp"

namespace spikelab {

SpectralSummary::SpectralSummary(DimProfile profile, Vector eigenvalues, Matrix eigenvectors,
                                 double trace)
    : profile_(std::move(profile)),
      eigenvalues_(std::move(eigenvalues)),
      eigenvectors_(std::move(eigenvectors)),
      trace_(trace) {
  const auto n = static_cast<Eigen::Index>(profile_.total());
  if (eigenvalues_.size() != n || eigenvectors_.rows() != n || eigenvectors_.cols() != n) {
    throw DimensionError("spectral data does not match the profile");
  }
  const auto d = static_cast<Eigen::Index>(profile_.order());
  block_mass_.resize(d, n);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto o = static_cast<Eigen::Index>(profile_.offset(static_cast<std::size_t>(i)));
    const auto len = static_cast<Eigen::Index>(profile_.dim(static_cast<std::size_t>(i)));
    block_mass_.row(i) = eigenvectors_.middleRows(o, len).colwise().squaredNorm();
  }
}

SpectralSummary eigendecompose(const ContractionMatrix& m) {
  if (!m.data().allFinite()) throw DomainError("contraction matrix has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.data());
  if (solver.info() != Eigen::Success) throw SolverError("symmetric eigensolver failed", 0.0);
  return SpectralSummary(m.profile(), solver.eigenvalues(), solver.eigenvectors(),
                         m.data().trace());
}

EmpiricalStieltjes empirical_stieltjes(const SpectralSummary& s, Complex z) {
  const Vector& mu = s.eigenvalues();
  if (z.imag() == 0.0) {
    const double gap = (mu.array() - z.real()).abs().minCoeff();
    if (gap < 1e-12) throw DomainError("real z sits on an eigenvalue");
  }
  const double n = static_cast<double>(mu.size());
  Eigen::VectorXcd weights(mu.size());
  for (Eigen::Index k = 0; k < mu.size(); ++k) weights(k) = 1.0 / (mu(k) - z) / n;

  EmpiricalStieltjes out;
  out.g = weights.sum();
  const Matrix& mass = s.block_mass();
  for (Eigen::Index i = 0; i < mass.rows(); ++i) {
    out.blocks.push_back(mass.row(i).cast<Complex>().dot(weights));
  }
  return out;
}

double ESDHistogram::integral() const {
  double sum = 0.0;
  for (double v : density) sum += v;
  return sum * bin_width();
}

ESDHistogram esd_histogram(std::span<const double> values, double lo, double hi,
                           std::size_t bins) {
  if (!(lo < hi)) throw DomainError("histogram needs lo < hi");
  if (bins < 1) throw DomainError("histogram needs at least one bin");
  if (values.empty()) throw DomainError("histogram of an empty sample");
  ESDHistogram h;
  h.lo = lo;
  h.hi = hi;
  h.total = values.size();
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) {
    h.edges[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
  }
  const double width = h.bin_width();
  for (double v : values) {
    if (v < lo) {
      ++h.below;
    } else if (v > hi) {
      ++h.above;
    } else {
      auto k = static_cast<std::size_t>((v - lo) / width);
      ++h.counts[std::min(k, bins - 1)];
    }
  }
  h.density.resize(bins);
  const double norm = 1.0 / (static_cast<double>(h.total) * width);
  for (std::size_t k = 0; k < bins; ++k) h.density[k] = static_cast<double>(h.counts[k]) * norm;
  return h;
}

ESDHistogram esd_histogram(const SpectralSummary& s, double lo, double hi, std::size_t bins) {
  const Vector& mu = s.eigenvalues();
  return esd_histogram(std::span<const double>(mu.data(), static_cast<std::size_t>(mu.size())),
                       lo, hi, bins);
}

namespace {

std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  if (!(lo < hi) || points < 2) throw DomainError("CDF table needs lo < hi and two points");
  std::vector<double> xs(points);
  for (std::size_t k = 0; k < points; ++k) {
    xs[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
  }
  return xs;
}

}  // namespace

CdfTable::CdfTable(const std::function<double(double)>& density, double lo, double hi,
                   std::size_t points)
    : xs_(uniform_grid(lo, hi, points)) {
  std::vector<double> f(points);
  for (std::size_t k = 0; k < points; ++k) f[k] = density(xs_[k]);
  integrate(f);
}

CdfTable::CdfTable(std::vector<double> xs, const std::vector<double>& density) : xs_(std::move(xs)) {
  if (xs_.size() < 2 || density.size() != xs_.size()) {
    throw DomainError("CDF table needs matching grid and density of length >= 2");
  }
  integrate(density);
}

void CdfTable::integrate(const std::vector<double>& f) {
  const std::size_t points = xs_.size();
  cdf_.resize(points);
  cdf_[0] = 0.0;
  for (std::size_t k = 1; k < points; ++k) {
    cdf_[k] = cdf_[k - 1] + 0.5 * (f[k] + f[k - 1]) * (xs_[k] - xs_[k - 1]);
  }
  raw_mass_ = cdf_.back();
  if (!(raw_mass_ > 0.0)) throw DomainError("density has no mass on the table range");
  for (double& c : cdf_) c /= raw_mass_;
}

double CdfTable::operator()(double x) const {
  if (x <= xs_.front()) return 0.0;
  if (x >= xs_.back()) return 1.0;
  const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  const auto k = static_cast<std::size_t>(it - xs_.begin());
  const double t = (x - xs_[k - 1]) / (xs_[k] - xs_[k - 1]);
  return cdf_[k - 1] + t * (cdf_[k] - cdf_[k - 1]);
}

double CdfTable::quantile(double p) const {
  if (p <= 0.0) return xs_.front();
  if (p >= 1.0) return xs_.back();
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), p);
  const auto k = static_cast<std::size_t>(it - cdf_.begin());
  if (k == 0) return xs_.front();
  const double span = cdf_[k] - cdf_[k - 1];
  const double t = span > 0.0 ? (p - cdf_[k - 1]) / span : 0.0;
  return xs_[k - 1] + t * (xs_[k] - xs_[k - 1]);
}

CdfTable law_cdf(const LimitLaw& law, std::size_t points) {
  std::vector<double> xs = uniform_grid(law.lower_edge(), law.upper_edge(), points);
  const std::vector<double> f = law.density_curve(xs);
  return CdfTable(std::move(xs), f);
}

double balanced_density(std::size_t order, double x) {
  const double d = static_cast<double>(order);
  const double r2 = 4.0 * (d - 1.0) / d;
  return d / (2.0 * std::numbers::pi * (d - 1.0)) * std::sqrt(std::max(0.0, r2 - x * x));
}

CdfTable balanced_cdf(std::size_t order, std::size_t points) {
  const double d = static_cast<double>(order);
  const double edge = 2.0 * std::sqrt((d - 1.0) / d);
  return CdfTable([order](double x) { return balanced_density(order, x); }, -edge, edge, points);
}

std::vector<Outlier> detect_outliers(const SpectralSummary& s, const LimitLaw& law,
                                     double margin) {
  if (!(margin > 0.0)) throw DomainError("outlier margin must be positive");
  std::vector<Outlier> out;
  const Vector& mu = s.eigenvalues();
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    const double dist = std::max(law.lower_edge() - mu(k), mu(k) - law.upper_edge());
    if (dist > margin) out.push_back({static_cast<std::size_t>(k), mu(k)});
  }
  return out;
}

std::vector<double> bulk_eigenvalues(const SpectralSummary& s, const LimitLaw& law,
                                     double margin) {
  const std::vector<Outlier> outliers = detect_outliers(s, law, margin);
  std::vector<double> bulk;
  std::size_t next = 0;
  const Vector& mu = s.eigenvalues();
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    if (next < outliers.size() && outliers[next].index == static_cast<std::size_t>(k)) {
      ++next;
      continue;
    }
    bulk.push_back(mu(k));
  }
  return bulk;
}

double ks_distance(std::span<const double> sample, const CdfTable& cdf) {
  if (sample.empty()) throw DomainError("KS distance of an empty sample");
  std::vector<double> xs(sample.begin(), sample.end());
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double f = cdf(xs[k]);
    worst = std::max({worst, std::abs(f - static_cast<double>(k) / n),
                      std::abs(f - static_cast<double>(k + 1) / n)});
  }
  return std::min(1.0, worst);
}

double ks_distance(const SpectralSummary& s, const LimitLaw& law, const CdfTable& cdf,
                   double margin) {
  const std::vector<double> bulk = bulk_eigenvalues(s, law, margin);
  return ks_distance(bulk, cdf);
}

double ks_distance(const SpectralSummary& s, const LimitLaw& law, double margin) {
  return ks_distance(s, law, law_cdf(law), margin);
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("KS distance of an empty sample");
  std::vector<double> xa(a.begin(), a.end());
  std::vector<double> xb(b.begin(), b.end());
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  const double na = static_cast<double>(xa.size());
  const double nb = static_cast<double>(xb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double worst = 0.0;
  while (i < xa.size() && j < xb.size()) {
    const double x = std::min(xa[i], xb[j]);
    while (i < xa.size() && xa[i] <= x) ++i;
    while (j < xb.size() && xb[j] <= x) ++j;
    worst = std::max(worst, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return worst;
}

void write_eigenvalues_csv(std::ostream& out, const SpectralSummary& s) {
  out << "eigenvalue\n";
  out.precision(17);
  for (Eigen::Index k = 0; k < s.eigenvalues().size(); ++k) out << s.eigenvalues()(k) << '\n';
}

void write_histogram_csv(std::ostream& out, const ESDHistogram& h) {
  out << "bin_center,density\n";
  out.precision(17);
  for (std::size_t k = 0; k < h.density.size(); ++k) {
    out << h.bin_center(k) << ',' << h.density[k] << '\n';
  }
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  out.precision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ',';
      out << m(r, c);
    }
    out << '\n';
  }
}

}  // namespace spikelab
