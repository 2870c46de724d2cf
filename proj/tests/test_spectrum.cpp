#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "spikelab/contraction.hpp"
#include "spikelab/error.hpp"
#include "spikelab/estimator.hpp"
#include "spikelab/spectrum.hpp"

using namespace spikelab;

namespace {

// Pure-noise Phi at fixed unit vectors, balanced d = 3 with n per mode.
SpectralSummary noise_spectrum(std::size_t n, NoiseLaw law, std::uint64_t seed) {
  const DimProfile p = DimProfile::balanced(3, n);
  DenseTensor w = sample_noise_tensor(p, law, seed);
  w *= 1.0 / std::sqrt(static_cast<double>(p.total()));
  return eigendecompose(build_phi(w, random_unit_vectors(p, seed + 1)));
}

// Twenty N = 600 pure-noise spectra, shared by several cases.
const std::vector<SpectralSummary>& noise_600() {
  static const std::vector<SpectralSummary> cache = [] {
    std::vector<SpectralSummary> out;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      out.push_back(noise_spectrum(200, NoiseLaw::gaussian, 4000 + seed));
    }
    return out;
  }();
  return cache;
}

// Characteristic polynomial coefficients by Faddeev-LeVerrier:
// det(xI - A) = x^n + c[n-1] x^(n-1) + ... + c[0].
std::vector<double> char_poly(const Matrix& a) {
  const Eigen::Index n = a.rows();
  std::vector<double> c(static_cast<std::size_t>(n) + 1, 0.0);
  c[static_cast<std::size_t>(n)] = 1.0;
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    m = a * m + c[static_cast<std::size_t>(n - k + 1)] * Matrix::Identity(n, n);
    c[static_cast<std::size_t>(n - k)] = -(a * m).trace() / static_cast<double>(k);
  }
  return c;
}

std::vector<double> companion_roots(const std::vector<double>& c) {
  const auto n = static_cast<Eigen::Index>(c.size() - 1);
  Matrix comp = Matrix::Zero(n, n);
  for (Eigen::Index k = 1; k < n; ++k) comp(k, k - 1) = 1.0;
  for (Eigen::Index k = 0; k < n; ++k) comp(k, n - 1) = -c[static_cast<std::size_t>(k)];
  Eigen::EigenSolver<Matrix> solver(comp, false);
  std::vector<double> roots;
  for (Eigen::Index k = 0; k < n; ++k) {
    CHECK(std::abs(solver.eigenvalues()(k).imag()) < 1e-8);
    roots.push_back(solver.eigenvalues()(k).real());
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace

TEST_CASE("eigendecompose: zero matrix and zero-noise spike") {
  const DimProfile p({3, 4, 5});
  SpectralSummary zero = eigendecompose(ContractionMatrix(p, Matrix::Zero(12, 12)));
  CHECK(zero.eigenvalues().cwiseAbs().maxCoeff() == 0.0);

  SpikedModel m = make_spiked_model(p, {1.5}, NoiseLaw::gaussian, 2, SpikeLayout::haar);
  m.noise_scale = 0.0;
  SpectralSummary s = eigendecompose(build_phi(assemble_spiked_tensor(m), m.spikes[0]));
  const Vector& ev = s.eigenvalues();
  CHECK(ev(0) == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(ev(1) == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(ev(11) == doctest::Approx(3.0).epsilon(1e-12));
  for (Eigen::Index k = 2; k < 11; ++k) CHECK(std::abs(ev(k)) < 1e-12);
  for (Eigen::Index k = 1; k < 12; ++k) CHECK(ev(k) >= ev(k - 1));

  Matrix bad = Matrix::Zero(12, 12);
  bad(0, 5) = bad(5, 0) = std::nan("");
  CHECK_THROWS_AS(eigendecompose(ContractionMatrix(p, bad)), DomainError);
}

TEST_CASE("eigenvalues match the characteristic-polynomial oracle") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    Matrix a(5, 5);
    for (Eigen::Index i = 0; i < 5; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) a(i, j) = a(j, i) = g(rng);
    }
    const SpectralSummary s = eigendecompose(ContractionMatrix(DimProfile({2, 3}), a));
    const std::vector<double> roots = companion_roots(char_poly(a));
    for (Eigen::Index k = 0; k < 5; ++k) {
      CHECK(std::abs(s.eigenvalues()(k) - roots[static_cast<std::size_t>(k)]) < 1e-8);
      const Vector q = s.eigenvectors().col(k);
      CHECK((a * q - s.eigenvalues()(k) * q).norm() / a.norm() < 1e-10);
    }
  }
}

TEST_CASE("empirical Stieltjes transform") {
  const SpectralSummary s = noise_spectrum(20, NoiseLaw::gaussian, 3);
  CHECK(std::abs(s.eigenvalues().sum()) < 1e-8 * 60.0);
  CHECK(std::abs(s.trace()) == 0.0);
  for (Eigen::Index k = 0; k < 60; ++k) CHECK(std::abs(s.block_mass().col(k).sum() - 1.0) < 1e-12);

  for (Complex z : {Complex(0.3, 0.01), Complex(-1.0, 0.5), Complex(3.0, 0.0), Complex(0.0, 2.0)}) {
    const EmpiricalStieltjes e = empirical_stieltjes(s, z);
    Complex sum = 0.0;
    for (Complex b : e.blocks) sum += b;
    CHECK(std::abs(sum - e.g) < 1e-14);
    if (z.imag() > 0.0) CHECK(e.g.imag() > 0.0);
  }
  const Complex far(0.0, 100.0);
  CHECK(std::abs(empirical_stieltjes(s, far).g + 1.0 / far) < 1e-3);
  for (double x = -3.0; x <= 3.0; x += 0.1) {
    for (double eta : {1e-4, 1e-2, 1.0}) {
      CHECK(empirical_stieltjes(s, Complex(x, eta)).g.imag() >= 0.0);
    }
  }
  CHECK_THROWS_AS(empirical_stieltjes(s, Complex(s.eigenvalues()(7), 0.0)), DomainError);

  const LimitLaw law = LimitLaw::balanced(3);
  const Complex z(0.0, 2.0);
  CHECK(std::abs(empirical_stieltjes(noise_600().front(), z).g - law.stieltjes(z).g) < 0.02);
}

TEST_CASE("histogram normalization") {
  const std::vector<double> single{0.0};
  const ESDHistogram h = esd_histogram(single, -1.0, 1.0, 1);
  CHECK(h.density.size() == 1);
  CHECK(h.density[0] == doctest::Approx(0.5));
  CHECK(h.integral() == doctest::Approx(1.0));

  const std::vector<double> values{-2.0, -0.5, 0.0, 0.2, 0.9, 1.0, 3.0};
  const ESDHistogram g = esd_histogram(values, -1.0, 1.0, 4);
  CHECK(g.edges.size() == 5);
  CHECK(g.below == 1);
  CHECK(g.above == 1);
  CHECK(g.counts.back() == 2);  // the right edge belongs to the last bin
  CHECK(std::abs(g.integral() + g.out_of_range_mass() - 1.0) < 1e-12);
  CHECK_THROWS_AS(esd_histogram(values, 1.0, -1.0, 4), DomainError);
  CHECK_THROWS_AS(esd_histogram(values, -1.0, 1.0, 0), DomainError);
}

TEST_CASE("pure-noise histogram follows the semicircle") {
  // Pooled over the 20 seeds: one N = 600 sample puts ~7 eigenvalues in a bin.
  std::vector<double> pooled;
  for (const SpectralSummary& s : noise_600()) {
    const ESDHistogram h = esd_histogram(s, -1.8, 1.8, 101);
    CHECK(std::abs(h.integral() + h.out_of_range_mass() - 1.0) < 1e-10);
    pooled.insert(pooled.end(), s.eigenvalues().begin(), s.eigenvalues().end());
  }
  const ESDHistogram h = esd_histogram(pooled, -1.8, 1.8, 101);
  double gap = 0.0;
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    gap = std::max(gap, std::abs(h.density[k] - balanced_density(3, h.bin_center(k))));
  }
  CHECK(gap < 0.08);
}

TEST_CASE("spiked spectrum: outliers and out-of-range mass") {
  const DimProfile p = DimProfile::balanced(3, 200);
  const LimitLaw law = LimitLaw::balanced(3);
  int one_right = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SpikedModel m = make_spiked_model(p, {2.0}, NoiseLaw::gaussian, 6000 + seed);
    DenseTensor t = assemble_spiked_tensor(m);
    const StationaryPoint u = select_branch(t, m).point;
    const SpectralSummary s = eigendecompose(build_phi(t, u.modes));
    std::vector<double> right;
    for (const Outlier& o : detect_outliers(s, law, 0.15)) {
      if (o.value > 0.0) right.push_back(o.value);
    }
    if (right.size() == 1 && std::abs(right[0] - 2.0 * 2.2558) < 0.25) ++one_right;
    if (seed == 0) {
      // Right outlier 2 lambda and two left outliers at -lambda.
      const ESDHistogram h = esd_histogram(s, -1.8, 1.8, 101);
      CHECK(h.above == 1);
      CHECK(h.below == 2);
      CHECK(std::abs(h.integral() + h.out_of_range_mass() - 1.0) < 1e-10);
      CHECK(std::abs(s.eigenvalues()(599) - 2.0 * u.lambda) < 1e-8);
      CHECK(bulk_eigenvalues(s, law).size() == 597);
    }
  }
  CHECK(one_right >= 18);
}

TEST_CASE("pure-noise spectra have no outliers") {
  const LimitLaw law = LimitLaw::balanced(3);
  int clean = 0;
  for (const SpectralSummary& s : noise_600()) {
    if (detect_outliers(s, law, 0.15).empty()) ++clean;
    CHECK(detect_outliers(s, law, 100.0).empty());
  }
  CHECK(clean >= 18);
  CHECK_THROWS_AS(detect_outliers(noise_600().front(), law, 0.0), DomainError);
}

TEST_CASE("KS distance") {
  const LimitLaw law = LimitLaw::balanced(3);
  const CdfTable cdf = law_cdf(law);
  CHECK(std::abs(cdf.raw_mass() - 1.0) < 1e-3);

  // Atoms at the law's own quantiles.
  const std::size_t n = 600;
  std::vector<double> atoms;
  for (std::size_t k = 1; k <= n; ++k) atoms.push_back(cdf.quantile(double(k) / double(n + 1)));
  CHECK(ks_distance(atoms, cdf) <= 1.0 / double(n + 1) + 1e-3);

  // The tabulated law agrees with the closed form.
  const CdfTable closed = balanced_cdf(3);
  for (double x = -1.6; x <= 1.6; x += 0.1) CHECK(std::abs(cdf(x) - closed(x)) < 1e-4);

  const SpectralSummary a = noise_600().front();
  const SpectralSummary b = noise_spectrum(200, NoiseLaw::rademacher, 4000);
  const std::vector<double> ea(a.eigenvalues().begin(), a.eigenvalues().end());
  const std::vector<double> eb(b.eigenvalues().begin(), b.eigenvalues().end());
  CHECK(ks_two_sample(ea, eb) < 0.05);
  CHECK(ks_distance(a, law, cdf) < 0.05);
  CHECK(ks_distance(b, law, cdf) < 0.05);
  CHECK(ks_two_sample(ea, ea) == 0.0);
}

TEST_CASE("KS distance shrinks from N = 150 to N = 600") {
  const LimitLaw law = LimitLaw::balanced(3);
  const CdfTable cdf = law_cdf(law);
  int decreasing = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double small = ks_distance(noise_spectrum(50, NoiseLaw::gaussian, 8000 + seed), law, cdf);
    const double large = ks_distance(noise_600()[seed], law, cdf);
    if (large < small) ++decreasing;
  }
  CHECK(decreasing >= 16);
}

TEST_CASE("resolvent traces with and without the spike stay within K/N") {
  const Complex z(0.0, 2.0);
  for (std::size_t n : {50, 100, 200}) {
    const DimProfile p = DimProfile::balanced(3, n);
    SpikedModel m = make_spiked_model(p, {2.0}, NoiseLaw::gaussian, 70 + n);
    const std::vector<Vector>& u = m.spikes[0];
    DenseTensor noise = model_noise(m);
    noise *= 1.0 / std::sqrt(static_cast<double>(p.total()));
    const Complex r = empirical_stieltjes(eigendecompose(build_phi(assemble_spiked_tensor(m), u)), z).g;
    const Complex q = empirical_stieltjes(eigendecompose(build_phi(noise, u)), z).g;
    CAPTURE(n);
    CHECK(std::abs(r - q) * static_cast<double>(p.total()) < 20.0);
  }
}

TEST_CASE("csv dumps") {
  const SpectralSummary s = noise_spectrum(3, NoiseLaw::uniform, 1);
  std::ostringstream ev;
  write_eigenvalues_csv(ev, s);
  std::istringstream in(ev.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "eigenvalue");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 9);

  std::ostringstream hist;
  write_histogram_csv(hist, esd_histogram(s, -2.0, 2.0, 4));
  CHECK(hist.str().rfind("bin_center,density", 0) == 0);
}
