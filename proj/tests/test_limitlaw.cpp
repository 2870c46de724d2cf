#include <doctest.h>

#include <cmath>
#include <random>

#include "spikelab/error.hpp"
#include "spikelab/limitlaw.hpp"

using namespace spikelab;

namespace {

// Balanced closed form (-z d + d sqrt(z^2 - 4(d-1)/d)) / (2(d-1)), with the
// square root continued from +z at infinity.
Complex balanced_g(std::size_t order, Complex z) {
  const double d = static_cast<double>(order);
  const double r2 = 4.0 * (d - 1.0) / d;
  const Complex s = z * std::sqrt(1.0 - r2 / (z * z));
  return (-z * d + d * s) / (2.0 * (d - 1.0));
}

// Order-three balanced formulas for the singular value and alignment limits.
double lambda_closed(double b) {
  return std::sqrt(b * b / 2.0 + 2.0 + std::sqrt(3.0) * std::sqrt(std::pow(std::max(0.0, 3.0 * b * b - 4.0), 3)) /
                                           (18.0 * b));
}

double q_closed(double b) {
  const double t = std::sqrt(3.0) * std::sqrt(std::pow(std::max(0.0, 3.0 * b * b - 4.0), 3)) / b;
  return (std::sqrt(9.0 * b * b - 12.0 + t) + std::sqrt(9.0 * b * b + 36.0 + t)) /
         (6.0 * std::sqrt(2.0) * b);
}

double beta_closed(double z) {
  const double s = std::sqrt(9.0 * z * z - 24.0);
  const double num = 2.0 * z * z * z + 2.0 * z * z * s / 3.0 - 4.0 * z - 4.0 * s / 9.0;
  return std::sqrt(num / (z + std::sqrt(3.0) * std::sqrt(3.0 * z * z - 8.0)));
}

const std::vector<double> kUnbalanced{0.5, 0.3, 0.2};

}  // namespace

TEST_CASE("closed-form reference values") {
  // Frozen oracle values, recomputed here from the closed forms.
  CHECK(lambda_closed(2.0) == doctest::Approx(2.255806).epsilon(1e-6));
  CHECK(q_closed(2.0) == doctest::Approx(0.953021).epsilon(1e-6));
  CHECK(balanced_g(3, 2.0).real() == doctest::Approx(-0.633975).epsilon(1e-6));
}

TEST_CASE("solve_g examples") {
  const auto c3 = std::vector<double>(3, 1.0 / 3.0);
  CHECK(std::abs(solve_g(c3, 2.0).g - Complex(-0.6339746, 0.0)) < 1e-7);
  const Complex z(0.0, 100.0);
  CHECK(std::abs(solve_g(c3, z).g + 1.0 / z) < 1e-3);
  const auto c4 = std::vector<double>(4, 0.25);
  CHECK(std::abs(solve_g(c4, 3.0).g - balanced_g(4, 3.0)) < 1e-10);
}

TEST_CASE("solve_g domain and input errors") {
  const auto c3 = std::vector<double>(3, 1.0 / 3.0);
  CHECK_THROWS_AS(solve_g(c3, Complex(1.0, 0.0)), DomainError);
  CHECK_THROWS_AS(solve_g(c3, Complex(-1.6, 0.0)), DomainError);
  CHECK_THROWS_AS(solve_g(c3, Complex(0.0, -1.0)), DomainError);
  CHECK_THROWS_AS(solve_g({0.5, 0.6}, Complex(0.0, 1.0)), DomainError);
  CHECK_THROWS_AS(solve_g({1.0}, Complex(0.0, 1.0)), DomainError);
}

TEST_CASE("balanced closed-form agreement on random z") {
  std::mt19937_64 rng(31);
  for (std::size_t d : {3u, 4u, 5u}) {
    const LimitLaw law = LimitLaw::balanced(d);
    std::uniform_real_distribution<double> off(law.upper_edge() + 1e-3, 6.0);
    std::uniform_real_distribution<double> re(-3.0, 3.0);
    std::bernoulli_distribution sign;
    for (int k = 0; k < 100; ++k) {
      const double x = sign(rng) ? off(rng) : -off(rng);
      const StieltjesPoint p = law.stieltjes(x);
      CHECK(std::abs(p.g - balanced_g(d, x)) < 1e-10);
      CHECK(p.residual < 1e-10);
      const Complex z(re(rng), 0.1);
      const StieltjesPoint q = law.stieltjes(z);
      CHECK(std::abs(q.g - balanced_g(d, z)) < 1e-10);
      CHECK(q.residual < 1e-10);
      CHECK(q.g.imag() > 0.0);
    }
  }
}

TEST_CASE("quadratic residual and Herglotz property on an unbalanced profile") {
  const LimitLaw law(kUnbalanced);
  for (double x = -3.0; x <= 3.0; x += 0.05) {
    for (double eta : {1e-6, 1e-3, 0.1, 1.0}) {
      const StieltjesPoint p = law.stieltjes(Complex(x, eta));
      CHECK(p.residual < 1e-10);
      CHECK(p.g.imag() >= 0.0);
      Complex sum = 0.0;
      for (Complex gi : p.blocks) sum += gi;
      CHECK(std::abs(sum - p.g) < 1e-14);
    }
  }
  // Outside the support Im g grows with eta while eta is below the distance.
  for (double x : {-3.0, 2.0, 2.5, 3.0}) {
    double previous = 0.0;
    for (double eta : {1e-4, 1e-3, 1e-2, 0.05, 0.1}) {
      const double im = law.stieltjes(Complex(x, eta)).g.imag();
      CHECK(im > previous);
      previous = im;
    }
  }
  // At the centre of the bulk it decreases.
  double previous = 1e9;
  for (double eta : {1e-4, 1e-3, 1e-2, 0.1, 1.0}) {
    const double im = law.stieltjes(Complex(0.0, eta)).g.imag();
    CHECK(im < previous);
    previous = im;
  }
}

TEST_CASE("large-z decay") {
  const LimitLaw law(kUnbalanced);
  for (double r : {50.0, 100.0, 1000.0}) {
    const Complex z(0.3 * r, r);
    CHECK(std::abs(law.stieltjes(z).g + 1.0 / z) < 2.0 / std::norm(z));
  }
}

TEST_CASE("density examples and normalization") {
  const LimitLaw law = LimitLaw::balanced(3);
  const double nu0 = 3.0 / (4.0 * M_PI) * std::sqrt(8.0 / 3.0);
  CHECK(std::abs(law.density(0.0) - nu0) < 1e-6);
  CHECK(std::abs(law.density(0.0) - 0.389850) < 5e-6);
  CHECK(law.density(5.0) < 1e-4);
  CHECK_THROWS_AS(law.density(0.0, 0.0), DomainError);

  for (const auto& c : {std::vector<double>(3, 1.0 / 3.0), kUnbalanced,
                        std::vector<double>{0.4, 0.3, 0.2, 0.1}}) {
    const LimitLaw l(c);
    const double reach = 1.1 * l.upper_edge();
    // Staggered grid: for c = (0.5, 0.3, 0.2) the density has an integrable
    // singularity at 0, which must not be sampled as a node.
    std::vector<double> xs(4001);
    for (std::size_t k = 0; k < xs.size(); ++k) xs[k] = -reach + 2.0 * reach * (k + 0.25) / 4000.0;
    const std::vector<double> f = l.density_curve(xs);
    double mass = 0.0;
    for (std::size_t k = 1; k < xs.size(); ++k) mass += 0.5 * (f[k] + f[k - 1]) * (xs[k] - xs[k - 1]);
    CHECK(std::abs(mass - 1.0) < 1e-3);
    // Warm-started values agree with independent cold solves.
    for (std::size_t k = 0; k < xs.size(); k += 400) CHECK(std::abs(f[k] - l.density(xs[k])) < 1e-9);
  }
}

TEST_CASE("support edges") {
  CHECK(LimitLaw::balanced(3).upper_edge() == doctest::Approx(1.632993).epsilon(1e-6));
  CHECK(LimitLaw::balanced(4).upper_edge() == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  // The critical-point construction reproduces the balanced closed form.
  CHECK(std::abs(critical_edge(std::vector<double>(3, 1.0 / 3.0)) - 2.0 * std::sqrt(2.0 / 3.0)) <
        1e-12);
  CHECK(std::abs(critical_edge(std::vector<double>(5, 0.2)) - 2.0 * std::sqrt(0.8)) < 1e-12);
  for (const auto& c : {kUnbalanced, std::vector<double>{0.6, 0.25, 0.15},
                        std::vector<double>{0.4, 0.3, 0.2, 0.1}}) {
    const LimitLaw law(c);
    CHECK(law.lower_edge() == -law.upper_edge());
    CHECK(std::abs(density_threshold_edge(law) - law.upper_edge()) < 1e-4);
    // Density vanishes beyond the edge and is positive just inside.
    CHECK(law.density(law.upper_edge() + 1e-3) < 1e-4);
    CHECK(law.density(law.upper_edge() - 1e-3) > 1e-3);
    CHECK(law.density(-law.upper_edge() + 1e-3) > 1e-3);
  }
}

TEST_CASE("predict at d = 3 balanced, beta = 2") {
  const LimitLaw law = LimitLaw::balanced(3);
  const Prediction p = predict(law, 2.0);
  CHECK(p.regime == Regime::above_threshold);
  CHECK(std::abs(p.lambda_inf - lambda_closed(2.0)) < 1e-9);
  CHECK(p.lambda_inf == doctest::Approx(2.25580).epsilon(1e-5));
  for (double q : p.q) CHECK(std::abs(q - q_closed(2.0)) < 1e-8);
  CHECK(std::abs(f_value(law, p.lambda_inf, 2.0)) < 1e-10);
  CHECK(p.lambda_inf > law.upper_edge());
}

TEST_CASE("predict matches the closed forms along a beta grid") {
  const LimitLaw law = LimitLaw::balanced(3);
  for (double b : {1.2, 1.5, 2.5, 4.0, 10.0}) {
    const Prediction p = predict(law, b);
    CHECK(std::abs(p.lambda_inf - lambda_closed(b)) < 1e-9);
    CHECK(std::abs(p.q[1] - q_closed(b)) < 1e-8);
  }
}

TEST_CASE("edge continuity at beta_s") {
  const LimitLaw law = LimitLaw::balanced(3);
  const double bs = 2.0 * std::sqrt(3.0) / 3.0;
  CHECK(lambda_closed(bs) == doctest::Approx(2.0 * std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  CHECK(q_closed(bs) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  // lambda - hi is linear in beta - beta_s, the alignments move like its root.
  const Prediction just_above = predict(law, bs + 1e-6);
  CHECK(just_above.regime == Regime::above_threshold);
  CHECK(just_above.lambda_inf > law.upper_edge());
  CHECK(just_above.lambda_inf - law.upper_edge() < 1e-6);
  CHECK(std::abs(just_above.q[0] - 1.0 / std::sqrt(2.0)) < 5e-3);
  CHECK(std::abs(alignment_curve(law, law.upper_edge() + 1e-10)[0] - 1.0 / std::sqrt(2.0)) < 1e-4);
  const Prediction at = predict(law, beta_threshold(law));
  CHECK(at.regime == Regime::below_threshold);
  CHECK(at.lambda_inf <= law.upper_edge());
  CHECK(at.q == std::vector<double>(3, 0.0));
}

TEST_CASE("below threshold predictions") {
  const Prediction p = predict(LimitLaw::balanced(3), 0.5);
  CHECK(p.regime == Regime::below_threshold);
  CHECK(p.q == std::vector<double>(3, 0.0));
  CHECK_THROWS_AS(predict(LimitLaw::balanced(3), 0.0), DomainError);
}

TEST_CASE("high-signal limit") {
  const Prediction p = predict(LimitLaw::balanced(3), 100.0);
  for (double q : p.q) CHECK(q > 1.0 - 1e-3);
  CHECK(std::abs(p.lambda_inf / 100.0 - 1.0) < 1e-3);
}

TEST_CASE("beta threshold") {
  const LimitLaw law = LimitLaw::balanced(3);
  CHECK(std::abs(beta_threshold(law) - 1.154701) < 1e-6);
  CHECK(std::abs(beta_threshold(law) - 2.0 * std::sqrt(3.0) / 3.0) < 1e-12);
  CHECK(std::abs(beta_threshold_extrapolated(law) - beta_threshold(law)) < 1e-6);

  for (const auto& c : {kUnbalanced, std::vector<double>{0.4, 0.3, 0.2, 0.1},
                        std::vector<double>(4, 0.25)}) {
    const LimitLaw l(c);
    const double bs = beta_threshold(l);
    CHECK(std::abs(beta_threshold_extrapolated(l) - bs) < 1e-6);
    // Brute-force minimum of beta(z) over (hi, hi + 5].
    double grid_min = 1e300;
    constexpr int kGrid = 3000;
    for (int k = 1; k <= kGrid; ++k) {
      const double s = static_cast<double>(k) / kGrid;
      grid_min = std::min(grid_min, invert_beta(l, l.upper_edge() + 5.0 * s * s));
    }
    CHECK(grid_min >= bs - 1e-9);
    CHECK(grid_min - bs < 1e-4);
  }
}

TEST_CASE("d = 4 regime boundary") {
  const LimitLaw law = LimitLaw::balanced(4);
  const double bs = beta_threshold(law);
  CHECK(predict(law, bs - 0.01).regime == Regime::below_threshold);
  const Prediction p = predict(law, bs + 0.01);
  CHECK(p.regime == Regime::above_threshold);
  CHECK(p.lambda_inf > law.upper_edge());
  CHECK(p.lambda_inf - law.upper_edge() < 0.05);
  CHECK(std::abs(f_value(law, p.lambda_inf, bs + 0.01)) < 1e-10);
}

TEST_CASE("invert_beta") {
  const LimitLaw law = LimitLaw::balanced(3);
  CHECK(std::abs(invert_beta(law, lambda_closed(2.0)) - 2.0) < 1e-9);
  CHECK(std::abs(invert_beta(law, law.upper_edge() + 1e-5) - beta_threshold(law)) < 1e-4);
  CHECK_THROWS_AS(invert_beta(law, law.upper_edge()), DomainError);
  CHECK_THROWS_AS(invert_beta(law, 1.0), DomainError);

  // Product form sqrt(prod_i (z + g - g_i) / (z + g)) and the closed form.
  const double z = 2.0;
  const StieltjesPoint p = law.stieltjes(z);
  double prod = 1.0;
  for (Complex gi : p.blocks) prod *= (z + p.g - gi).real();
  const double product_form = std::sqrt(prod / (z + p.g.real()));
  CHECK(std::abs(product_form - beta_closed(z)) < 1e-10);
  CHECK(std::abs(invert_beta(law, z) - beta_closed(z)) < 1e-10);

  for (const auto& c : {std::vector<double>(3, 1.0 / 3.0), kUnbalanced,
                        std::vector<double>(4, 0.25)}) {
    const LimitLaw l(c);
    for (double lam : {l.upper_edge() + 0.05, 2.3, 3.0, 5.0}) {
      const double b = invert_beta(l, lam);
      CHECK(std::abs(predict(l, b).lambda_inf - lam) < 1e-8);
    }
  }
}

TEST_CASE("alpha representation of the alignments") {
  CHECK(std::abs(q_alternative(LimitLaw::balanced(3), 2.0, lambda_closed(2.0))[0] -
                 q_closed(2.0)) < 1e-8);
  for (const auto& c : {std::vector<double>(3, 1.0 / 3.0), std::vector<double>(4, 0.25),
                        kUnbalanced, std::vector<double>{0.4, 0.3, 0.2, 0.1}}) {
    const LimitLaw law(c);
    for (double b : {1.5, 2.0, 3.0, 6.0}) {
      const Prediction p = predict(law, b);
      if (p.regime != Regime::above_threshold) continue;
      const std::vector<double> alt = q_alternative(law, b, p.lambda_inf);
      for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(std::abs(alt[i] - p.q[i]) < 1e-8);
        CHECK(p.q[i] >= 0.0);
        CHECK(p.q[i] <= 1.0);
      }
      CHECK(std::abs(f_value(law, p.lambda_inf, b)) < 1e-8);
      if (c.size() == 3) {
        // a_x = alpha_1 a_y a_z and its permutations.
        for (std::size_t i = 0; i < 3; ++i) {
          CHECK(std::abs(p.q[i] - p.alpha[i] * p.q[(i + 1) % 3] * p.q[(i + 2) % 3]) < 1e-8);
        }
      }
      if (law.is_balanced()) {
        for (double q : p.q) CHECK(std::abs(q - p.q.front()) < 1e-12);
      }
    }
  }
}
