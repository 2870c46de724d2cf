#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "spikelab/tensor.hpp"

namespace spikelab {

/// Zero-mean, unit-variance noise laws with a finite fourth moment.
enum class NoiseLaw { gaussian, rademacher, uniform, student_t5 };

std::string_view to_string(NoiseLaw law);
/// Accepts "gaussian", "rademacher", "uniform" and "student_t5" (also spelled
/// "student_t5_normalized"). Student-t with fewer than five degrees of freedom
/// is rejected because its fourth moment is infinite.
NoiseLaw parse_noise_law(std::string_view name);
/// E[X^4] for the law: 3, 1, 9/5 and 9 respectively.
double fourth_moment(NoiseLaw law);

/// Maximum number of tensor entries that sample_noise_tensor will allocate.
inline constexpr std::size_t kDefaultEntryBudget = 50'000'000;

/// Mixes a 64-bit seed (splitmix64 finalizer); used to seed every generator.
std::uint64_t mix_seed(std::uint64_t seed);
/// Seed of trial `index` derived from a batch seed.
inline std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t index) {
  return base_seed ^ index;
}

/// Draws one variate of `law`.
double draw(NoiseLaw law, std::mt19937_64& rng);

/// I.i.d. tensor of the given law. Same (profile, law, seed) gives a
/// bit-identical tensor.
DenseTensor sample_noise_tensor(const DimProfile& profile, NoiseLaw law, std::uint64_t seed,
                                std::size_t entry_budget = kDefaultEntryBudget);

enum class SpikeLayout { canonical, haar };

/// T = sum_r beta_r x_r^(1) (x) ... (x) x_r^(d) + noise_scale * W / sqrt(N).
struct SpikedModel {
  DimProfile profile;
  std::vector<double> betas;
  /// spikes[r][i] is the unit vector of spike r in mode i.
  std::vector<std::vector<Vector>> spikes;
  NoiseLaw noise = NoiseLaw::gaussian;
  std::uint64_t seed = 0;
  /// 1 for the model itself; 0 switches the noise off (test hook).
  double noise_scale = 1.0;

  std::size_t rank() const { return betas.size(); }
  /// Throws ConfigError if the SNRs are not positive and non-increasing or the
  /// spikes are not orthonormal per mode.
  void validate() const;
};

/// Builds a model with spikes e_r in every mode (canonical) or with per-mode
/// orthonormal frames drawn from the Haar measure (QR of a Gaussian matrix,
/// seeded from `seed`).
SpikedModel make_spiked_model(DimProfile profile, std::vector<double> betas, NoiseLaw noise,
                              std::uint64_t seed, SpikeLayout layout = SpikeLayout::canonical);

/// The pure noise part W (before the 1/sqrt(N) scaling) of a model.
DenseTensor model_noise(const SpikedModel& model,
                        std::size_t entry_budget = kDefaultEntryBudget);

DenseTensor assemble_spiked_tensor(const SpikedModel& model,
                                   std::size_t entry_budget = kDefaultEntryBudget);

/// The low-rank signal part alone.
DenseTensor signal_tensor(const SpikedModel& model);

}  // namespace spikelab
