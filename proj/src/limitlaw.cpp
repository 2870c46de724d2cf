#include "spikelab/limitlaw.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "spikelab/error.hpp"

namespace spikelab {

namespace {

constexpr int kMaxPicardIterations = 10'000;
constexpr double kPicardDamping = 0.5;
constexpr double kPicardTolerance = 1e-13;
constexpr double kQuadraticTolerance = 1e-10;

void check_ratios(const std::vector<double>& c) {
  if (c.size() < 2) throw DomainError("limit law needs at least two modes");
  double sum = 0.0;
  for (double ci : c) {
    if (!(ci > 0.0 && ci < 1.0)) throw DomainError("aspect ratios must lie in (0, 1)");
    sum += ci;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("aspect ratios must sum to one");
}

Complex total(const std::vector<Complex>& blocks) {
  return std::accumulate(blocks.begin(), blocks.end(), Complex(0.0));
}

double quadratic_residual(const std::vector<double>& c, const std::vector<Complex>& blocks,
                          Complex g, Complex z) {
  double worst = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Complex gi = blocks[i];
    worst = std::max(worst, std::abs(gi * gi - (g + z) * gi - c[i]));
  }
  return worst;
}

// Unique w >= 0 where sum_i d g_i / d w = 1, i.e. where the real branch
// z(w) = w - sum_i g_i(w) turns around. For d = 2 this is w = 0.
double critical_w(const std::vector<double>& c) {
  auto slope_sum = [&](double w) {
    double s = 0.0;
    for (double ci : c) s += 0.5 * (1.0 - w / std::sqrt(w * w + 4.0 * ci));
    return s;
  };
  if (slope_sum(0.0) <= 1.0) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  while (slope_sum(hi) > 1.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (slope_sum(mid) > 1.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double critical_edge(const std::vector<double>& ratios) {
  check_ratios(ratios);
  const double w = critical_w(ratios);
  double g = 0.0;
  for (double ci : ratios) g += 0.5 * (w - std::sqrt(w * w + 4.0 * ci));
  return w - g;
}

namespace {

void check_spectral_parameter(const std::vector<double>& ratios, Complex z) {
  check_ratios(ratios);
  if (z.imag() < 0.0) throw DomainError("spectral parameter must have Im z >= 0");
  if (z.imag() == 0.0) {
    const double edge = critical_edge(ratios);
    if (std::abs(z.real()) <= edge) {
      throw DomainError("real spectral parameter " + std::to_string(z.real()) +
                        " lies on the support [-" + std::to_string(edge) + ", " +
                        std::to_string(edge) + "]");
    }
  }
}

// Scaled residuals h_i = g_i - w - c_i / g_i, well conditioned when a block
// grows large near a singular point of the density.
double scaled_norm(const std::vector<double>& c, const std::vector<Complex>& blocks, Complex z) {
  const Complex w = total(blocks) + z;
  double worst = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    worst = std::max(worst, std::abs(blocks[i] - w - c[i] / blocks[i]));
  }
  return std::isfinite(worst) ? worst : std::numeric_limits<double>::infinity();
}

// Newton on h(g_1, ..., g_d) = 0 with step halving.
void newton_polish(const std::vector<double>& c, std::vector<Complex>& blocks, Complex z,
                   int& iterations) {
  const auto d = static_cast<Eigen::Index>(c.size());
  double norm = scaled_norm(c, blocks, z);
  for (int k = 0; k < 100 && norm > 1e-15; ++k) {
    const Complex w = total(blocks) + z;
    Eigen::VectorXcd h(d);
    Eigen::MatrixXcd jac = Eigen::MatrixXcd::Constant(d, d, Complex(-1.0));
    for (Eigen::Index i = 0; i < d; ++i) {
      const Complex gi = blocks[static_cast<std::size_t>(i)];
      const double ci = c[static_cast<std::size_t>(i)];
      h(i) = gi - w - ci / gi;
      jac(i, i) += 1.0 + ci / (gi * gi);
    }
    // Blocks can differ by orders of magnitude; equilibrate before solving.
    Eigen::VectorXd cols(d);
    for (Eigen::Index i = 0; i < d; ++i) cols(i) = std::max(std::abs(blocks[static_cast<std::size_t>(i)]), 1e-300);
    jac = jac * cols.asDiagonal();
    Eigen::VectorXd rows = jac.rowwise().lpNorm<Eigen::Infinity>().cwiseInverse();
    jac = rows.asDiagonal() * jac;
    Eigen::VectorXcd delta = cols.asDiagonal() * jac.fullPivLu().solve(rows.asDiagonal() * h);
    if (!delta.allFinite()) break;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving) {
      std::vector<Complex> trial(blocks);
      for (Eigen::Index i = 0; i < d; ++i) trial[static_cast<std::size_t>(i)] -= delta(i);
      const double trial_norm = scaled_norm(c, trial, z);
      if (trial_norm < norm) {
        blocks = std::move(trial);
        norm = trial_norm;
        improved = true;
        break;
      }
      delta *= 0.5;
    }
    ++iterations;
    if (!improved) break;
  }
}

// g_i <- -c_i / (z + g - g_i): no branch choice, and a contraction in the
// upper half-plane, but slow close to the real axis.
void picard(const std::vector<double>& c, std::vector<Complex>& blocks, Complex z,
            int& iterations) {
  for (int k = 0; k < kMaxPicardIterations; ++k, ++iterations) {
    const Complex g = total(blocks);
    double step = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const Complex target = -c[i] / (z + g - blocks[i]);
      const Complex next = (1.0 - kPicardDamping) * blocks[i] + kPicardDamping * target;
      step = std::max(step, std::abs(next - blocks[i]));
      blocks[i] = next;
    }
    if (step < kPicardTolerance) break;
  }
}

StieltjesPoint assemble_point(const std::vector<double>& c, std::vector<Complex> blocks,
                              Complex z, int iterations) {
  StieltjesPoint out;
  out.z = z;
  out.g = total(blocks);
  out.blocks = std::move(blocks);
  out.iterations = iterations;
  out.residual = quadratic_residual(c, out.blocks, out.g, z);
  return out;
}

// Quadratic residuals relative to the size of their terms; near an atom of
// the law g grows like 1/eta and the absolute residual is limited by rounding.
double relative_residual(const std::vector<double>& c, const StieltjesPoint& p) {
  const Complex w = p.g + p.z;
  double worst = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Complex gi = p.blocks[i];
    const double scale = std::max({1.0, std::norm(gi), std::abs(w * gi)});
    worst = std::max(worst, std::abs(gi * gi - w * gi - c[i]) / scale);
  }
  return worst;
}

bool acceptable(const std::vector<double>& c, const StieltjesPoint& p) {
  if (!(relative_residual(c, p) < kQuadraticTolerance)) return false;
  if (p.z.imag() == 0.0) {
    // Outside the support the physical branch is real with sign opposite to z.
    return std::all_of(p.blocks.begin(), p.blocks.end(), [&](Complex gi) {
      return std::abs(gi.imag()) < 1e-9 && gi.real() * p.z.real() < 0.0;
    });
  }
  return std::all_of(p.blocks.begin(), p.blocks.end(),
                     [](Complex gi) { return gi.imag() >= 0.0; });
}

[[noreturn]] void fail(const StieltjesPoint& p) {
  char where[96];
  std::snprintf(where, sizeof where, "(%.17g, %.17g)", p.z.real(), p.z.imag());
  throw SolverError(std::string("Stieltjes fixed point did not converge at z = ") + where +
                        "; last residual " + std::to_string(p.residual),
                    p.residual);
}

bool converged(const std::vector<double>& c, const std::vector<Complex>& blocks, Complex z) {
  if (!(scaled_norm(c, blocks, z) < 1e-12)) return false;
  return z.imag() == 0.0 || std::all_of(blocks.begin(), blocks.end(),
                                        [](Complex gi) { return gi.imag() >= 0.0; });
}

StieltjesPoint cold_solve(const std::vector<double>& c, Complex z) {
  std::vector<Complex> blocks(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) blocks[i] = -c[i] / z;
  int it = 0;
  picard(c, blocks, z, it);
  // Newton finish; the Picard contraction rate tends to one at the edges.
  newton_polish(c, blocks, z, it);
  StieltjesPoint out = assemble_point(c, blocks, z, it);
  if (acceptable(c, out) || z.imag() <= 0.0 || z.imag() >= 1.0) return out;

  // Close to the support Newton needs a good start: walk Im z down from 1,
  // predicting each level by log-log extrapolation of the previous two and
  // shrinking the step whenever a level fails to converge.
  blocks = cold_solve(c, Complex(z.real(), 1.0)).blocks;
  std::vector<Complex> previous;
  double eta = 1.0;
  double previous_eta = 0.0;
  double ratio = 0.5;
  while (eta > z.imag() && ratio < 1.0 - 1e-6) {
    const double next = std::max(z.imag(), eta * ratio);
    std::vector<Complex> trial = blocks;
    if (!previous.empty()) {
      const double t = std::log(next / eta) / std::log(eta / previous_eta);
      for (std::size_t i = 0; i < c.size(); ++i) {
        trial[i] = blocks[i] * std::exp(t * std::log(blocks[i] / previous[i]));
      }
    }
    newton_polish(c, trial, Complex(z.real(), next), it);
    if (converged(c, trial, Complex(z.real(), next))) {
      previous = std::move(blocks);
      previous_eta = eta;
      blocks = std::move(trial);
      eta = next;
      ratio = std::max(0.1, ratio * ratio);
    } else {
      ratio = std::sqrt(ratio);
    }
  }
  return assemble_point(c, blocks, z, it);
}

}  // namespace

StieltjesPoint solve_g(const std::vector<double>& ratios, Complex z) {
  check_spectral_parameter(ratios, z);
  StieltjesPoint out = cold_solve(ratios, z);
  if (!acceptable(ratios, out)) fail(out);
  return out;
}

StieltjesPoint solve_g(const std::vector<double>& ratios, Complex z, const StieltjesPoint& near) {
  check_spectral_parameter(ratios, z);
  if (near.blocks.size() == ratios.size()) {
    std::vector<Complex> blocks = near.blocks;
    int it = 0;
    newton_polish(ratios, blocks, z, it);
    StieltjesPoint warm = assemble_point(ratios, std::move(blocks), z, it);
    if (acceptable(ratios, warm)) return warm;
  }
  return solve_g(ratios, z);
}

LimitLaw::LimitLaw(std::vector<double> ratios) : ratios_(std::move(ratios)) {
  check_ratios(ratios_);
  balanced_ = std::all_of(ratios_.begin(), ratios_.end(),
                          [&](double c) { return std::abs(c - ratios_.front()) < 1e-12; });
  if (balanced_) {
    const double d = static_cast<double>(ratios_.size());
    upper_edge_ = 2.0 * std::sqrt((d - 1.0) / d);
  } else {
    upper_edge_ = critical_edge(ratios_);
  }
}

LimitLaw LimitLaw::balanced(std::size_t order) {
  return LimitLaw(std::vector<double>(order, 1.0 / static_cast<double>(order)));
}

double LimitLaw::density(double x, double eta) const {
  if (!(eta > 0.0)) throw DomainError("density needs eta > 0");
  const StieltjesPoint p = stieltjes(Complex(x, eta));
  return std::max(0.0, p.g.imag() / M_PI);
}

std::vector<double> LimitLaw::density_curve(std::span<const double> xs, double eta) const {
  if (!(eta > 0.0)) throw DomainError("density needs eta > 0");
  std::vector<double> out(xs.size());
  StieltjesPoint previous;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Complex z(xs[k], eta);
    const StieltjesPoint p = solve_g(ratios_, z, previous);
    previous = p;
    out[k] = std::max(0.0, p.g.imag() / M_PI);
  }
  return out;
}

double density_threshold_edge(const LimitLaw& law, double threshold, double eta, double tol) {
  double reach = 1.0;
  for (double c : law.ratios()) reach += 2.0 * std::sqrt(c);
  // Scan inwards; the first grid point above the threshold brackets the edge.
  // The centre of the support is never visited (the density can blow up there).
  constexpr int kScan = 400;
  double inside = 0.0;
  double outside = reach;
  for (int k = kScan - 1; k > 0; --k) {
    const double x = reach * k / kScan;
    if (law.density(x, eta) > threshold) {
      inside = x;
      break;
    }
    outside = x;
  }
  while (outside - inside > tol) {
    const double mid = 0.5 * (inside + outside);
    (law.density(mid, eta) > threshold ? inside : outside) = mid;
  }
  return 0.5 * (inside + outside);
}

namespace {

// Beyond the right edge everything is a closed form in w = z + g > w*:
// g_i(w) = (w - sqrt(w^2 + 4 c_i)) / 2 and z(w) = w - sum_i g_i(w), with z(w)
// increasing. Working in w avoids solving the fixed point near the edge.
struct RealBranch {
  double w = 0.0;
  std::vector<double> blocks;
  double g = 0.0;
};

RealBranch real_branch_at_w(const std::vector<double>& c, double w) {
  RealBranch out;
  out.w = w;
  out.blocks.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    out.blocks[i] = 0.5 * (w - std::sqrt(w * w + 4.0 * c[i]));
    out.g += out.blocks[i];
  }
  return out;
}

double z_of_w(const std::vector<double>& c, double w) {
  return w - real_branch_at_w(c, w).g;
}

RealBranch real_branch(const LimitLaw& law, double z) {
  if (!(z > law.upper_edge())) {
    throw DomainError("z = " + std::to_string(z) + " is not beyond the right edge " +
                      std::to_string(law.upper_edge()));
  }
  const auto& c = law.ratios();
  double lo = critical_w(c);
  double hi = z;  // g < 0 there, so w < z
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (z_of_w(c, mid) < z ? lo : hi) = mid;
  }
  return real_branch_at_w(c, 0.5 * (lo + hi));
}

std::vector<double> branch_q(const std::vector<double>& c, const RealBranch& b) {
  std::vector<double> q(c.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = std::sqrt(std::max(0.0, 1.0 - b.blocks[i] * b.blocks[i] / c[i]));
  }
  return q;
}

double branch_q_product(const std::vector<double>& c, const RealBranch& b) {
  double prod = 1.0;
  for (double q : branch_q(c, b)) prod *= q;
  return prod;
}

}  // namespace

std::vector<double> alignment_curve(const LimitLaw& law, double z) {
  return branch_q(law.ratios(), real_branch(law, z));
}

double f_value(const LimitLaw& law, double z, double beta) {
  const RealBranch b = real_branch(law, z);
  return b.w - beta * branch_q_product(law.ratios(), b);
}

double invert_beta(const LimitLaw& law, double lambda_obs) {
  if (!(lambda_obs > law.upper_edge())) {
    throw DomainError("lambda " + std::to_string(lambda_obs) +
                      " is not beyond the bulk edge; no informative branch");
  }
  const RealBranch b = real_branch(law, lambda_obs);
  return b.w / branch_q_product(law.ratios(), b);
}

double beta_threshold(const LimitLaw& law) {
  // Written in the variable w = z + g, beta(z) is smooth through the edge, so
  // its one-sided limit is the value at the critical point w*. There
  // q_i^2 = w / (w - g_i) and beta = w / prod_i q_i.
  const double w = critical_w(law.ratios());
  if (w <= 0.0) throw DomainError("no informative threshold for d < 3");
  double prod = 1.0;
  for (double ci : law.ratios()) {
    const double gi = 0.5 * (w - std::sqrt(w * w + 4.0 * ci));
    prod *= std::sqrt(w / (w - gi));
  }
  return w / prod;
}

double beta_threshold_extrapolated(const LimitLaw& law) {
  // beta(hi + delta) expands in powers of s = sqrt(delta); a cubic in s
  // through four offsets is evaluated at s = 0.
  const std::array<double, 4> deltas{1e-3, 1e-4, 1e-5, 1e-6};
  std::array<double, 4> s{};
  std::array<double, 4> b{};
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    s[k] = std::sqrt(deltas[k]);
    b[k] = invert_beta(law, law.upper_edge() + deltas[k]);
  }
  double limit = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    double weight = 1.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j != k) weight *= -s[j] / (s[k] - s[j]);
    }
    limit += weight * b[k];
  }
  return limit;
}

std::vector<double> alpha_values(const LimitLaw& law, double beta, double z) {
  const RealBranch b = real_branch(law, z);
  std::vector<double> alpha(law.order());
  for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = beta / (b.w - b.blocks[i]);
  return alpha;
}

Prediction predict(const LimitLaw& law, double beta) {
  if (!(beta > 0.0)) throw DomainError("predict needs beta > 0");
  Prediction out;
  out.beta = beta;
  out.beta_s = beta_threshold(law);
  out.upper_edge = law.upper_edge();
  if (!(beta > out.beta_s)) {
    out.regime = Regime::below_threshold;
    out.lambda_inf = out.upper_edge;
    out.q.assign(law.order(), 0.0);
    return out;
  }

  // beta(w) = w / prod_i q_i(w) increases from beta_s at w*; solve beta(w) = beta.
  const auto& c = law.ratios();
  auto excess = [&](double w) { return w - beta * branch_q_product(c, real_branch_at_w(c, w)); };
  double lo = critical_w(c);
  double hi = std::max(1.0, 2.0 * beta);
  while (excess(hi) < 0.0) hi *= 2.0;
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (excess(mid) < 0.0 ? lo : hi) = mid;
  }
  const RealBranch b = real_branch_at_w(c, 0.5 * (lo + hi));
  out.regime = Regime::above_threshold;
  out.lambda_inf = b.w - b.g;
  out.q = branch_q(c, b);
  out.alpha.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out.alpha[i] = beta / (b.w - b.blocks[i]);
  return out;
}

std::vector<double> q_alternative(const LimitLaw& law, double beta, double lambda_inf) {
  const std::size_t d = law.order();
  if (d < 3) throw DomainError("the alpha representation needs d >= 3");
  const std::vector<double> alpha = alpha_values(law, beta, lambda_inf);
  for (double a : alpha) {
    if (!(a > 0.0)) throw SolverError("alpha_i must be positive", a);
  }
  std::vector<double> q(d);
  for (std::size_t i = 0; i < d; ++i) {
    double others = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (j != i) others *= alpha[j];
    }
    const double ratio = std::pow(alpha[i], static_cast<double>(d) - 3.0) / others;
    q[i] = std::pow(ratio, 1.0 / (2.0 * static_cast<double>(d) - 4.0));
  }
  return q;
}

}  // namespace spikelab
