#include "spikelab/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "spikelab/contraction.hpp"
#include "spikelab/error.hpp"
#include "spikelab/limitlaw.hpp"

namespace spikelab {

namespace {

constexpr double kDegenerateNorm = 1e-14;
constexpr int kMaxReinitializations = 3;

Vector random_unit(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  do {
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = gauss(rng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

void check_index(const DimProfile& p, std::span<const std::size_t> index) {
  if (index.size() != p.order()) throw DimensionError("multi-index has the wrong order");
  for (std::size_t l = 0; l < index.size(); ++l) {
    if (index[l] >= p.dim(l)) throw DimensionError("multi-index out of range");
  }
}

DimProfile profile_of(std::span<const Vector> modes) {
  std::vector<std::size_t> dims;
  for (const Vector& u : modes) dims.push_back(static_cast<std::size_t>(u.size()));
  return DimProfile(std::move(dims));
}

void canonicalize_signs(StationaryPoint& point, const std::optional<std::vector<Vector>>& ref) {
  const std::size_t d = point.modes.size();
  if (point.lambda < 0.0) {
    point.lambda = -point.lambda;
    point.modes[d - 1] = -point.modes[d - 1];
  }
  if (!ref) return;
  for (std::size_t i = 0; i + 1 < d; ++i) {
    if (point.modes[i].dot((*ref)[i]) < 0.0) {
      point.modes[i] = -point.modes[i];
      point.modes[d - 1] = -point.modes[d - 1];
    }
  }
}

}  // namespace

const char* to_string(InitKind kind) {
  switch (kind) {
    case InitKind::spike_aligned:
      return "spike_aligned";
    case InitKind::random:
      return "random";
    case InitKind::fixed_point_map:
      return "fixed_point_map";
  }
  return "unknown";
}

std::vector<Vector> random_unit_vectors(const DimProfile& profile, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed));
  std::vector<Vector> vs;
  for (std::size_t i = 0; i < profile.order(); ++i) vs.push_back(random_unit(profile.dim(i), rng));
  return vs;
}

double kkt_residual(const DenseTensor& t, std::span<const Vector> modes, double lambda) {
  double worst = 0.0;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    worst = std::max(worst, (contract_except(t, modes, i) - lambda * modes[i]).norm());
  }
  return worst;
}

StationaryPoint power_iterate(const DenseTensor& t, std::vector<Vector> init,
                              const PowerOptions& options) {
  const DimProfile& p = t.profile();
  const std::size_t d = p.order();
  check_unit_vectors(p, init);
  if (!(options.tol > 0.0)) throw ConfigError("power iteration tolerance must be positive");
  if (options.max_iter < 1) throw ConfigError("power iteration needs max_iter >= 1");
  if (options.reference && options.reference->size() != d) {
    throw DimensionError("reference spike needs one vector per mode");
  }

  StationaryPoint out;
  out.init = options.init;
  out.modes = std::move(init);
  std::mt19937_64 rng(mix_seed(options.seed ^ 0xd1ce5eedULL));

  // T contracted on the last mode. Every other mode update, and the residual
  // check, works on this much smaller tensor; a sweep costs two passes over T.
  DenseTensor partial = contract_last(t, out.modes[d - 1]);
  auto head = [&]() { return std::span<const Vector>(out.modes).first(d - 1); };
  double lambda = 0.0;
  for (int sweep = 1; sweep <= options.max_iter; ++sweep) {
    out.iterations = sweep;
    bool restarted = false;
    for (std::size_t i = 0; i < d; ++i) {
      const Vector c =
          i + 1 < d ? contract_except(partial, head(), i) : contract_except(t, out.modes, i);
      const double norm = c.norm();
      if (norm < kDegenerateNorm) {
        if (++out.reinitializations > kMaxReinitializations) {
          throw DegenerateIterateError("contraction vector vanished in mode " +
                                       std::to_string(i) + " after " +
                                       std::to_string(kMaxReinitializations) + " restarts");
        }
        out.modes[i] = random_unit(p.dim(i), rng);
        restarted = true;
        continue;
      }
      out.modes[i] = c / norm;
      if (i + 1 == d) lambda = norm;
    }
    partial = contract_last(t, out.modes[d - 1]);
    if (restarted) {
      lambda = contract_full(t, out.modes);
      out.objective_trace.push_back(std::abs(lambda));
      continue;
    }
    out.objective_trace.push_back(std::abs(lambda));

    // The last mode satisfies its equation exactly after the update.
    double residual = 0.0;
    for (std::size_t i = 0; i + 1 < d; ++i) {
      residual = std::max(residual,
                          (contract_except(partial, head(), i) - lambda * out.modes[i]).norm());
    }
    out.residual = residual;
    if (residual < options.tol) {
      out.converged = true;
      break;
    }
  }

  out.lambda = contract_full(t, out.modes);
  canonicalize_signs(out, options.reference);
  return out;
}

BranchSelection select_branch(const DenseTensor& t, const SpikedModel& model,
                              const BranchOptions& options) {
  if (options.component >= model.rank()) throw ConfigError("component index exceeds the rank");
  if (!(t.profile() == model.profile)) throw DimensionError("tensor and model shapes differ");
  const auto& spike = model.spikes[options.component];

  PowerOptions power;
  power.tol = options.tol;
  power.max_iter = options.max_iter;
  power.init = InitKind::spike_aligned;
  power.reference = spike;
  power.seed = model.seed;

  BranchSelection out;
  out.point = power_iterate(t, spike, power);

  const LimitLaw law(model.profile.ratios());
  const double hi = law.upper_edge();
  out.bulk_distance = std::max(0.0, std::abs(out.point.lambda) - hi);
  out.outlier_separated = out.bulk_distance > options.margin_fraction * hi;

  out.alignments.resize(model.profile.order());
  for (std::size_t i = 0; i < out.alignments.size(); ++i) {
    out.alignments[i] = std::min(1.0, std::abs(out.point.modes[i].dot(spike[i])));
  }
  out.min_alignment = *std::min_element(out.alignments.begin(), out.alignments.end());
  out.aligned = out.min_alignment > options.alignment_floor;
  return out;
}

StationaryPoint high_signal_fixed_point(const DenseTensor& t, const SpikedModel& model,
                                        double r, double tol, int max_iter) {
  const DimProfile& p = t.profile();
  const std::size_t d = p.order();
  if (!(p == model.profile)) throw DimensionError("tensor and model shapes differ");
  if (d < 3) throw ConfigError("the fixed-point map needs order d >= 3");
  if (model.rank() < 1) throw ConfigError("model has no spike");
  const double beta = model.betas.front();
  if (!(beta > 0.0) || !(r > 0.0)) throw ConfigError("fixed-point map needs beta > 0 and r > 0");
  const auto& x = model.spikes.front();
  const double radius = r / beta;
  if (radius >= 1.0) {
    throw ContractionFailure("ball radius r / beta = " + std::to_string(radius) +
                             " does not fit inside the unit sphere");
  }

  std::vector<Vector> a(d);
  for (std::size_t i = 0; i < d; ++i) a[i] = Vector::Zero(static_cast<Eigen::Index>(p.dim(i)));
  auto assemble = [&](const std::vector<Vector>& comp) {
    std::vector<Vector> u(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double alpha = std::sqrt(std::max(0.0, 1.0 - comp[i].squaredNorm()));
      u[i] = alpha * x[i] + comp[i];
    }
    return u;
  };

  StationaryPoint out;
  out.init = InitKind::fixed_point_map;
  double step = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    out.iterations = it;
    const std::vector<Vector> u = assemble(a);
    std::vector<Vector> c(d);
    for (std::size_t i = 0; i < d; ++i) c[i] = contract_except(t, u, i);
    const double big_lambda = u[0].dot(c[0]);
    out.objective_trace.push_back(std::abs(big_lambda));
    if (!(big_lambda > 0.0)) throw ContractionFailure("fixed-point map lost the spike direction");

    step = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      // The projection removes the signal term, leaving the noise part.
      Vector next = (c[i] - x[i].dot(c[i]) * x[i]) / big_lambda;
      const double norm = next.norm();
      if (norm > radius) {
        throw ContractionFailure("iterate left the ball in mode " + std::to_string(i) + ": " +
                                 std::to_string(norm) + " > r / beta = " +
                                 std::to_string(radius));
      }
      step = std::max(step, (next - a[i]).norm());
      a[i] = std::move(next);
    }
    if (step < tol) {
      out.converged = true;
      break;
    }
  }

  out.modes = assemble(a);
  out.lambda = contract_full(t, out.modes);
  out.residual = kkt_residual(t, out.modes, out.lambda);
  canonicalize_signs(out, x);
  return out;
}

double lambda_derivative(const StationaryPoint& point, std::span<const std::size_t> index) {
  const DimProfile p = profile_of(point.modes);
  check_index(p, index);
  double prod = 1.0;
  for (std::size_t l = 0; l < index.size(); ++l) {
    prod *= point.modes[l](static_cast<Eigen::Index>(index[l]));
  }
  return prod / std::sqrt(static_cast<double>(p.total()));
}

KktSensitivity::KktSensitivity(const DenseTensor& t, const StationaryPoint& point, double shift,
                               double gap)
    : profile_(t.profile()), modes_(point.modes), lambda_(point.lambda), shift_(shift) {
  const ContractionMatrix phi = build_phi(t, modes_);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(phi.data());
  if (solver.info() != Eigen::Success) throw SolverError("eigendecomposition failed", 0.0);
  eigenvalues_ = solver.eigenvalues();
  eigenvectors_ = solver.eigenvectors();
  distance_ = (eigenvalues_.array() - (lambda_ + shift_)).abs().minCoeff();
  if (!(distance_ > gap)) {
    throw RegularityError("lambda is within " + std::to_string(distance_) +
                          " of the spectrum of Phi; the resolvent is not defined");
  }
}

std::vector<Vector> KktSensitivity::vector_derivative(std::span<const std::size_t> index) const {
  check_index(profile_, index);
  const std::size_t d = profile_.order();
  Vector rhs(static_cast<Eigen::Index>(profile_.total()));
  for (std::size_t l = 0; l < d; ++l) {
    double prod = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      if (k != l) prod *= modes_[k](static_cast<Eigen::Index>(index[k]));
    }
    const auto il = static_cast<Eigen::Index>(index[l]);
    Vector block = -modes_[l](il) * modes_[l];
    block(il) += 1.0;
    rhs.segment(static_cast<Eigen::Index>(profile_.offset(l)), block.size()) = prod * block;
  }
  const Vector coeff =
      (eigenvectors_.transpose() * rhs).array() / (eigenvalues_.array() - (lambda_ + shift_));
  const Vector du = -(eigenvectors_ * coeff) / std::sqrt(static_cast<double>(profile_.total()));

  std::vector<Vector> out(d);
  for (std::size_t l = 0; l < d; ++l) {
    out[l] = du.segment(static_cast<Eigen::Index>(profile_.offset(l)),
                        static_cast<Eigen::Index>(profile_.dim(l)));
  }
  return out;
}

std::vector<Vector> vector_derivative(const StationaryPoint& point, const DenseTensor& t,
                                      std::span<const std::size_t> index, double shift) {
  return KktSensitivity(t, point, shift).vector_derivative(index);
}

FiniteDifference finite_difference(const DenseTensor& t, const StationaryPoint& point,
                                   std::span<const std::size_t> index, double h, double tol,
                                   int max_iter) {
  check_index(t.profile(), index);
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  const double step = h / std::sqrt(static_cast<double>(t.profile().total()));
  PowerOptions options;
  options.tol = tol;
  options.max_iter = max_iter;
  options.init = point.init;
  options.reference = point.modes;

  auto solve = [&](double sign) {
    DenseTensor moved = t;
    moved.at(index) += sign * step;
    StationaryPoint p = power_iterate(moved, point.modes, options);
    if (!p.converged) {
      throw SolverError("perturbed power iteration did not converge", p.residual);
    }
    return p;
  };
  const StationaryPoint plus = solve(1.0);
  const StationaryPoint minus = solve(-1.0);

  FiniteDifference out;
  out.lambda = (plus.lambda - minus.lambda) / (2.0 * h);
  for (std::size_t i = 0; i < point.modes.size(); ++i) {
    out.modes.push_back((plus.modes[i] - minus.modes[i]) / (2.0 * h));
  }
  return out;
}

double AlignmentReport::max_cross() const {
  double worst = 0.0;
  for (const Matrix& m : per_mode) {
    for (Eigen::Index l = 0; l < m.rows(); ++l) {
      for (Eigen::Index s = 0; s < m.cols(); ++s) {
        if (l != s) worst = std::max(worst, m(l, s));
      }
    }
  }
  return worst;
}

AlignmentReport alignment_report(std::span<const StationaryPoint> points,
                                 const SpikedModel& model) {
  const std::size_t d = model.profile.order();
  AlignmentReport report;
  report.per_mode.assign(d, Matrix::Zero(static_cast<Eigen::Index>(points.size()),
                                         static_cast<Eigen::Index>(model.rank())));
  for (std::size_t l = 0; l < points.size(); ++l) {
    if (points[l].modes.size() != d) throw DimensionError("point order does not match model");
    for (std::size_t s = 0; s < model.rank(); ++s) {
      for (std::size_t i = 0; i < d; ++i) {
        const double a = std::abs(points[l].modes[i].dot(model.spikes[s][i]));
        report.per_mode[i](static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(s)) =
            std::min(1.0, a);
      }
    }
  }
  return report;
}

RankRResult rank_r_deflate(const DenseTensor& t, const SpikedModel& model,
                           const BranchOptions& options) {
  RankRResult out;
  std::vector<StationaryPoint> points;
  for (std::size_t l = 0; l < model.rank(); ++l) {
    BranchOptions per = options;
    per.component = l;
    out.components.push_back(select_branch(t, model, per));
    points.push_back(out.components.back().point);
  }
  out.report = alignment_report(points, model);
  return out;
}

}  // namespace spikelab
