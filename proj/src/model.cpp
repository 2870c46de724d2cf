#include "spikelab/model.hpp"

#include <cmath>
#include <string>

#include "spikelab/error.hpp"

namespace spikelab {

std::string_view to_string(NoiseLaw law) {
  switch (law) {
    case NoiseLaw::gaussian:
      return "gaussian";
    case NoiseLaw::rademacher:
      return "rademacher";
    case NoiseLaw::uniform:
      return "uniform";
    case NoiseLaw::student_t5:
      return "student_t5";
  }
  return "unknown";
}

NoiseLaw parse_noise_law(std::string_view name) {
  if (name == "gaussian") return NoiseLaw::gaussian;
  if (name == "rademacher") return NoiseLaw::rademacher;
  if (name == "uniform") return NoiseLaw::uniform;
  if (name == "student_t5" || name == "student_t5_normalized") return NoiseLaw::student_t5;
  if (name.starts_with("student_t")) {
    throw ConfigError("noise law '" + std::string(name) +
                      "' has an infinite fourth moment; only student_t5 is supported");
  }
  throw ConfigError("unknown noise law '" + std::string(name) + "'");
}

double fourth_moment(NoiseLaw law) {
  switch (law) {
    case NoiseLaw::gaussian:
      return 3.0;
    case NoiseLaw::rademacher:
      return 1.0;
    case NoiseLaw::uniform:
      return 9.0 / 5.0;
    case NoiseLaw::student_t5:
      // E t^4 = 3 nu^2 / ((nu-2)(nu-4)) = 25 for nu = 5, divided by Var^2 = (5/3)^2.
      return 9.0;
  }
  return 0.0;
}

std::uint64_t mix_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double draw(NoiseLaw law, std::mt19937_64& rng) {
  switch (law) {
    case NoiseLaw::gaussian: {
      std::normal_distribution<double> dist(0.0, 1.0);
      return dist(rng);
    }
    case NoiseLaw::rademacher:
      return (rng() >> 63) != 0 ? 1.0 : -1.0;
    case NoiseLaw::uniform: {
      std::uniform_real_distribution<double> dist(-std::sqrt(3.0), std::sqrt(3.0));
      return dist(rng);
    }
    case NoiseLaw::student_t5: {
      std::student_t_distribution<double> dist(5.0);
      return dist(rng) / std::sqrt(5.0 / 3.0);
    }
  }
  return 0.0;
}

DenseTensor sample_noise_tensor(const DimProfile& profile, NoiseLaw law, std::uint64_t seed,
                                std::size_t entry_budget) {
  const std::size_t count = profile.entry_count();
  if (count > entry_budget) {
    throw SizeError("tensor with " + std::to_string(count) + " entries exceeds the budget of " +
                    std::to_string(entry_budget));
  }
  std::mt19937_64 rng(mix_seed(seed));
  std::vector<double> entries(count);
  switch (law) {
    case NoiseLaw::gaussian: {
      std::normal_distribution<double> dist(0.0, 1.0);
      for (double& e : entries) e = dist(rng);
      break;
    }
    case NoiseLaw::rademacher:
      for (double& e : entries) e = (rng() >> 63) != 0 ? 1.0 : -1.0;
      break;
    case NoiseLaw::uniform: {
      std::uniform_real_distribution<double> dist(-std::sqrt(3.0), std::sqrt(3.0));
      for (double& e : entries) e = dist(rng);
      break;
    }
    case NoiseLaw::student_t5: {
      std::student_t_distribution<double> dist(5.0);
      const double scale = 1.0 / std::sqrt(5.0 / 3.0);
      for (double& e : entries) e = dist(rng) * scale;
      break;
    }
  }
  return DenseTensor(profile, std::move(entries));
}

void SpikedModel::validate() const {
  if (betas.empty()) throw ConfigError("model needs at least one spike");
  if (spikes.size() != betas.size()) throw ConfigError("one spike tuple per SNR required");
  for (std::size_t r = 0; r < betas.size(); ++r) {
    if (!(betas[r] >= 0.0)) throw ConfigError("SNRs must be non-negative");
    if (r > 0 && betas[r] > betas[r - 1]) throw ConfigError("SNRs must be non-increasing");
    if (spikes[r].size() != profile.order()) throw ConfigError("one spike vector per mode");
    for (std::size_t i = 0; i < profile.order(); ++i) {
      const Vector& x = spikes[r][i];
      if (static_cast<std::size_t>(x.size()) != profile.dim(i)) {
        throw ConfigError("spike vector length does not match mode size");
      }
      if (std::abs(x.norm() - 1.0) > 1e-12) throw ConfigError("spike vectors must be unit norm");
      for (std::size_t s = 0; s < r; ++s) {
        if (std::abs(x.dot(spikes[s][i])) > 1e-10) {
          throw ConfigError("spikes must be orthogonal within each mode");
        }
      }
    }
  }
}

SpikedModel make_spiked_model(DimProfile profile, std::vector<double> betas, NoiseLaw noise,
                              std::uint64_t seed, SpikeLayout layout) {
  SpikedModel model;
  model.profile = std::move(profile);
  model.betas = std::move(betas);
  model.noise = noise;
  model.seed = seed;
  const std::size_t rank = model.betas.size();
  const std::size_t d = model.profile.order();
  for (std::size_t i = 0; i < d; ++i) {
    if (rank > model.profile.dim(i)) throw ConfigError("rank exceeds a mode size");
  }
  model.spikes.assign(rank, std::vector<Vector>(d));
  if (layout == SpikeLayout::canonical) {
    for (std::size_t r = 0; r < rank; ++r) {
      for (std::size_t i = 0; i < d; ++i) {
        model.spikes[r][i] = Vector::Unit(static_cast<Eigen::Index>(model.profile.dim(i)),
                                          static_cast<Eigen::Index>(r));
      }
    }
  } else {
    // Distinct stream from the noise: the seed is tagged before mixing.
    std::mt19937_64 rng(mix_seed(seed ^ 0x5eed5a1ce5ULL));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < d; ++i) {
      const auto n = static_cast<Eigen::Index>(model.profile.dim(i));
      Matrix g(n, static_cast<Eigen::Index>(rank));
      for (Eigen::Index c = 0; c < g.cols(); ++c) {
        for (Eigen::Index r = 0; r < n; ++r) g(r, c) = gauss(rng);
      }
      Eigen::HouseholderQR<Matrix> qr(g);
      Matrix q = qr.householderQ() * Matrix::Identity(n, g.cols());
      // Fix the column signs so the frame is Haar distributed.
      const Matrix rmat = qr.matrixQR().triangularView<Eigen::Upper>();
      for (std::size_t r = 0; r < rank; ++r) {
        const auto c = static_cast<Eigen::Index>(r);
        Vector col = q.col(c);
        if (rmat(c, c) < 0) col = -col;
        model.spikes[r][i] = col / col.norm();
      }
    }
  }
  model.validate();
  return model;
}

DenseTensor model_noise(const SpikedModel& model, std::size_t entry_budget) {
  return sample_noise_tensor(model.profile, model.noise, model.seed, entry_budget);
}

DenseTensor signal_tensor(const SpikedModel& model) {
  DenseTensor t(model.profile);
  for (std::size_t r = 0; r < model.rank(); ++r) {
    t += outer_product(model.spikes[r], model.betas[r]);
  }
  return t;
}

DenseTensor assemble_spiked_tensor(const SpikedModel& model, std::size_t entry_budget) {
  model.validate();
  DenseTensor t = model_noise(model, entry_budget);
  t *= model.noise_scale / std::sqrt(static_cast<double>(model.profile.total()));
  for (std::size_t r = 0; r < model.rank(); ++r) {
    t += outer_product(model.spikes[r], model.betas[r]);
  }
  return t;
}

}  // namespace spikelab
