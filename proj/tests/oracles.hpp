#pragma once

// Independent reference implementations used to check the library: plain
// nested loops over the multi-index, no Eigen maps or mode reductions.

#include <cstddef>
#include <vector>

#include "spikelab/tensor.hpp"

namespace oracle {

// Calls f(index) for every multi-index in row-major order.
template <class F>
void for_each_index(const std::vector<std::size_t>& dims, F&& f) {
  std::vector<std::size_t> idx(dims.size(), 0);
  while (true) {
    f(idx);
    std::size_t m = dims.size();
    while (m > 0) {
      --m;
      if (++idx[m] < dims[m]) break;
      idx[m] = 0;
      if (m == 0) return;
    }
  }
}

inline double entry(const spikelab::DenseTensor& t, const std::vector<std::size_t>& idx) {
  std::size_t lin = 0;
  for (std::size_t m = 0; m < idx.size(); ++m) lin = lin * t.profile().dim(m) + idx[m];
  return t.entries()[lin];
}

inline double full(const spikelab::DenseTensor& t, const std::vector<spikelab::Vector>& vs) {
  double sum = 0.0;
  for_each_index(t.profile().dims(), [&](const std::vector<std::size_t>& idx) {
    double w = entry(t, idx);
    for (std::size_t m = 0; m < idx.size(); ++m) w *= vs[m](static_cast<Eigen::Index>(idx[m]));
    sum += w;
  });
  return sum;
}

inline spikelab::Vector except(const spikelab::DenseTensor& t,
                               const std::vector<spikelab::Vector>& vs, std::size_t mode) {
  spikelab::Vector out =
      spikelab::Vector::Zero(static_cast<Eigen::Index>(t.profile().dim(mode)));
  for_each_index(t.profile().dims(), [&](const std::vector<std::size_t>& idx) {
    double w = entry(t, idx);
    for (std::size_t m = 0; m < idx.size(); ++m) {
      if (m != mode) w *= vs[m](static_cast<Eigen::Index>(idx[m]));
    }
    out(static_cast<Eigen::Index>(idx[mode])) += w;
  });
  return out;
}

inline spikelab::Matrix except_pair(const spikelab::DenseTensor& t,
                                    const std::vector<spikelab::Vector>& vs, std::size_t a,
                                    std::size_t b) {
  spikelab::Matrix out = spikelab::Matrix::Zero(static_cast<Eigen::Index>(t.profile().dim(a)),
                                                static_cast<Eigen::Index>(t.profile().dim(b)));
  for_each_index(t.profile().dims(), [&](const std::vector<std::size_t>& idx) {
    double w = entry(t, idx);
    for (std::size_t m = 0; m < idx.size(); ++m) {
      if (m != a && m != b) w *= vs[m](static_cast<Eigen::Index>(idx[m]));
    }
    out(static_cast<Eigen::Index>(idx[a]), static_cast<Eigen::Index>(idx[b])) += w;
  });
  return out;
}

// Dense mat-vec with explicit loops.
inline spikelab::Vector matvec(const spikelab::Matrix& m, const spikelab::Vector& v) {
  spikelab::Vector out = spikelab::Vector::Zero(m.rows());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out(r) += m(r, c) * v(c);
  }
  return out;
}

}  // namespace oracle
