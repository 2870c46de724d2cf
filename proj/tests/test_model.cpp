#include <doctest.h>

#include <cmath>

#include "spikelab/error.hpp"
#include "spikelab/model.hpp"

using namespace spikelab;

TEST_CASE("rademacher entries are signs") {
  DenseTensor t = sample_noise_tensor(DimProfile::balanced(3, 2), NoiseLaw::rademacher, 7);
  CHECK(t.size() == 8);
  for (double v : t.entries()) CHECK((v == 1.0 || v == -1.0));
}

TEST_CASE("sampling is bit-reproducible per seed") {
  DimProfile p({4, 5, 6});
  for (NoiseLaw law : {NoiseLaw::gaussian, NoiseLaw::rademacher, NoiseLaw::uniform,
                       NoiseLaw::student_t5}) {
    DenseTensor a = sample_noise_tensor(p, law, 42);
    DenseTensor b = sample_noise_tensor(p, law, 42);
    DenseTensor c = sample_noise_tensor(p, law, 43);
    CHECK(std::memcmp(a.entries().data(), b.entries().data(), a.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.entries().data(), c.entries().data(), a.size() * sizeof(double)) != 0);
  }
}

TEST_CASE("gaussian sample mean obeys the CLT bound") {
  DenseTensor t = sample_noise_tensor(DimProfile::balanced(3, 50), NoiseLaw::gaussian, 1);
  double sum = 0.0;
  for (double v : t.entries()) sum += v;
  CHECK(std::abs(sum / static_cast<double>(t.size())) < 3.0 / std::sqrt(125000.0));
}

TEST_CASE("noise laws have unit variance and the stated fourth moment") {
  for (NoiseLaw law : {NoiseLaw::gaussian, NoiseLaw::rademacher, NoiseLaw::uniform,
                       NoiseLaw::student_t5}) {
    CAPTURE(to_string(law));
    DenseTensor t = sample_noise_tensor(DimProfile({1000, 1000}), law, 2024);
    double m1 = 0.0, m2 = 0.0, m4 = 0.0;
    for (double v : t.entries()) {
      m1 += v;
      m2 += v * v;
      m4 += v * v * v * v;
    }
    const double n = static_cast<double>(t.size());
    m1 /= n;
    m2 /= n;
    m4 /= n;
    CHECK(std::abs(m1) < 5e-3);
    CHECK(std::abs(m2 - m1 * m1 - 1.0) < 1e-2);
    CHECK(std::isfinite(m4));
    CHECK(std::abs(m4 - fourth_moment(law)) < 0.1 * fourth_moment(law));
  }
}

TEST_CASE("noise law names") {
  CHECK(parse_noise_law("student_t5_normalized") == NoiseLaw::student_t5);
  CHECK(parse_noise_law(to_string(NoiseLaw::uniform)) == NoiseLaw::uniform);
  CHECK_THROWS_AS(parse_noise_law("student_t3"), ConfigError);
  CHECK_THROWS_AS(parse_noise_law("cauchy"), ConfigError);
}

TEST_CASE("entry budget is enforced") {
  CHECK_THROWS_AS(sample_noise_tensor(DimProfile::balanced(3, 100), NoiseLaw::gaussian, 1, 999'999),
                  SizeError);
  CHECK_THROWS_AS(sample_noise_tensor(DimProfile::balanced(3, 400), NoiseLaw::gaussian, 1),
                  SizeError);
}

TEST_CASE("zero-noise spiked tensor is the rank-one signal") {
  SpikedModel m = make_spiked_model(DimProfile({3, 4, 5}), {3.0}, NoiseLaw::gaussian, 5,
                                    SpikeLayout::haar);
  m.noise_scale = 0.0;
  DenseTensor t = assemble_spiked_tensor(m);
  const auto& x = m.spikes.front();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t k = 0; k < 5; ++k) {
        std::vector<std::size_t> idx{i, j, k};
        const double expected = 3.0 * x[0](static_cast<Eigen::Index>(i)) *
                                x[1](static_cast<Eigen::Index>(j)) *
                                x[2](static_cast<Eigen::Index>(k));
        CHECK(std::abs(t.at(idx) - expected) < 1e-14);
      }
    }
  }
}

TEST_CASE("beta = 0 gives exactly the scaled noise") {
  DimProfile p({3, 4, 5});
  SpikedModel m = make_spiked_model(p, {0.0}, NoiseLaw::uniform, 8);
  DenseTensor t = assemble_spiked_tensor(m);
  DenseTensor w = model_noise(m);
  const double scale = 1.0 / std::sqrt(12.0);
  for (std::size_t k = 0; k < t.size(); ++k) CHECK(t.entries()[k] == w.entries()[k] * scale);
}

TEST_CASE("rank-two contraction isolates the first spike") {
  DimProfile p = DimProfile::balanced(3, 30);
  SpikedModel m = make_spiked_model(p, {3.0, 2.0}, NoiseLaw::gaussian, 17, SpikeLayout::haar);
  DenseTensor t = assemble_spiked_tensor(m);
  DenseTensor w = model_noise(m);
  const double noise_part = contract_full(w, m.spikes[0]) / std::sqrt(90.0);
  const double value = contract_full(t, m.spikes[0]);
  CHECK(std::abs(value - 3.0 - noise_part) < 1e-12);
  CHECK(std::abs(value - 3.0) < 5.0 / std::sqrt(90.0));
}

TEST_CASE("model invariants") {
  DimProfile p({6, 7, 8});
  SpikedModel m = make_spiked_model(p, {3.0, 2.0, 1.0}, NoiseLaw::gaussian, 4, SpikeLayout::haar);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(std::abs(m.spikes[r][i].norm() - 1.0) < 1e-12);
      for (std::size_t s = 0; s < r; ++s) CHECK(std::abs(m.spikes[r][i].dot(m.spikes[s][i])) < 1e-10);
    }
  }
  SpikedModel canonical = make_spiked_model(p, {2.0, 1.0}, NoiseLaw::gaussian, 4);
  CHECK(canonical.spikes[1][2] == Vector::Unit(8, 1));
  CHECK_THROWS_AS(make_spiked_model(p, {1.0, 2.0}, NoiseLaw::gaussian, 4), ConfigError);
  CHECK_THROWS_AS(make_spiked_model(DimProfile({2, 2, 2}), {3.0, 2.0, 1.0}, NoiseLaw::gaussian, 4),
                  ConfigError);
  m.spikes[1][0] *= 1.5;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("mixed seeds differ and trial seeds follow the xor rule") {
  CHECK(mix_seed(1) != mix_seed(2));
  CHECK(trial_seed(0xabc, 5) == (0xabcULL ^ 5ULL));
}
