#pragma once

#include <complex>
#include <span>
#include <vector>

namespace spikelab {

using Complex = std::complex<double>;

/// g(z) and its block components g_1(z), ..., g_d(z).
struct StieltjesPoint {
  Complex z;
  Complex g;
  std::vector<Complex> blocks;
  int iterations = 0;
  /// max_i |g_i^2 - (g + z) g_i - c_i|
  double residual = 0.0;
};

/// Solves g = sum_i g_i with g_i^2 - (g + z) g_i - c_i = 0 by damped Picard
/// iteration from g_i = -c_i/z, finished with Newton steps on the system.
/// z must lie in the upper half-plane or on the real axis outside the support;
/// the latter is checked and reported as a DomainError.
StieltjesPoint solve_g(const std::vector<double>& ratios, Complex z);
/// Same solution, reached by Newton steps from `near` (typically the solution
/// at a neighbouring z); falls back to the cold start if those do not land on
/// a valid point.
StieltjesPoint solve_g(const std::vector<double>& ratios, Complex z, const StieltjesPoint& near);

/// Right support edge obtained from the critical point of the real branch: the
/// unique w > 0 with sum_i (1 - w / sqrt(w^2 + 4 c_i)) / 2 = 1 gives the edge
/// z = w - sum_i g_i(w).
double critical_edge(const std::vector<double>& ratios);

/// Limiting spectral law of Phi_d(W, a) / sqrt(N) for aspect ratios c.
class LimitLaw {
 public:
  explicit LimitLaw(std::vector<double> ratios);
  static LimitLaw balanced(std::size_t order);

  const std::vector<double>& ratios() const { return ratios_; }
  std::size_t order() const { return ratios_.size(); }
  bool is_balanced() const { return balanced_; }

  StieltjesPoint stieltjes(Complex z) const { return solve_g(ratios_, z); }
  /// Im g(x + i eta) / pi.
  double density(double x, double eta = 1e-6) const;
  /// Density on an increasing grid, each solve warm-started from its neighbour.
  std::vector<double> density_curve(std::span<const double> xs, double eta = 1e-6) const;
  double lower_edge() const { return -upper_edge_; }
  double upper_edge() const { return upper_edge_; }

 private:
  std::vector<double> ratios_;
  bool balanced_ = false;
  double upper_edge_ = 0.0;
};

/// Right edge located by bisection on the density threshold `threshold` at
/// spectral offset `eta`; used as an independent check of upper_edge().
double density_threshold_edge(const LimitLaw& law, double threshold = 1e-4, double eta = 1e-6,
                              double tol = 1e-6);

enum class Regime { above_threshold, below_threshold };

struct Prediction {
  double beta = 0.0;
  /// Limit of the singular value; below threshold this is the upper bound hi.
  double lambda_inf = 0.0;
  std::vector<double> q;
  std::vector<double> alpha;
  double beta_s = 0.0;
  double upper_edge = 0.0;
  Regime regime = Regime::below_threshold;
};

/// z + g(z) - beta * prod_i q_i(z) for real z beyond the edge.
double f_value(const LimitLaw& law, double z, double beta);
/// q_i(z) = sqrt(1 - g_i(z)^2 / c_i) for real z beyond the edge.
std::vector<double> alignment_curve(const LimitLaw& law, double z);

/// beta(z) = (z + g) / prod_i q_i(z); DomainError when z <= hi.
double invert_beta(const LimitLaw& law, double lambda_obs);

/// beta_s: the limit of beta(z) as z decreases to the right edge, evaluated at
/// the critical point of the real branch.
double beta_threshold(const LimitLaw& law);

/// The same limit by extrapolating invert_beta(hi + delta) to delta = 0 from
/// delta in {1e-3, 1e-4, 1e-5, 1e-6}.
double beta_threshold_extrapolated(const LimitLaw& law);

Prediction predict(const LimitLaw& law, double beta);

/// q_i from the alpha representation (alpha_i^(d-3) / prod_{j!=i} alpha_j)^(1/(2d-4)).
std::vector<double> q_alternative(const LimitLaw& law, double beta, double lambda_inf);

/// alpha_i(z) = beta / (z + g(z) - g_i(z)).
std::vector<double> alpha_values(const LimitLaw& law, double beta, double z);

}  // namespace spikelab
