#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "voxseg/errors.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

namespace detail {

inline std::vector<std::int64_t> epoch_order(std::int64_t n,
                                             std::mt19937_64& rng) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

inline void softmax_inplace(std::vector<double>& z) {
  double mx = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

}  // namespace detail

// All tie-breaks resolve to the lowest class id: strict > keeps the first
// (lowest-id) maximum. Returns a 1-based class id.
inline int argmax_class(const double* scores, int k) {
  int best = 0;
  for (int i = 1; i < k; ++i)
    if (scores[i] > scores[best]) best = i;
  return best + 1;
}

inline int argmax_class(const std::vector<double>& scores) {
  return argmax_class(scores.data(), static_cast<int>(scores.size()));
}

// Per-feature affine transform fitted on training data; std floored at eps
// so constant columns map to 0.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std_dev;  // already floored
  static constexpr double kEps = 1e-12;

  int n_features() const { return static_cast<int>(mean.size()); }

  void apply_row(const double* in, double* out) const {
    for (int c = 0; c < n_features(); ++c)
      out[c] = (in[c] - mean[static_cast<std::size_t>(c)]) /
               std_dev[static_cast<std::size_t>(c)];
  }

  void invert_row(const double* in, double* out) const {
    for (int c = 0; c < n_features(); ++c)
      out[c] = in[c] * std_dev[static_cast<std::size_t>(c)] +
               mean[static_cast<std::size_t>(c)];
  }
};

inline Standardizer standardize_fit(const Dataset& data) {
  if (data.n_rows < 1) throw DataError("standardize_fit: empty dataset");
  Standardizer s;
  s.mean.assign(static_cast<std::size_t>(data.n_features), 0.0);
  s.std_dev.assign(static_cast<std::size_t>(data.n_features), 0.0);
  for (std::int64_t r = 0; r < data.n_rows; ++r)
    for (int c = 0; c < data.n_features; ++c)
      s.mean[static_cast<std::size_t>(c)] += data.at(r, c);
  for (auto& m : s.mean) m /= static_cast<double>(data.n_rows);
  for (std::int64_t r = 0; r < data.n_rows; ++r)
    for (int c = 0; c < data.n_features; ++c) {
      double d = data.at(r, c) - s.mean[static_cast<std::size_t>(c)];
      s.std_dev[static_cast<std::size_t>(c)] += d * d;
    }
  for (auto& v : s.std_dev) {
    v = std::sqrt(v / static_cast<double>(data.n_rows));
    if (v < Standardizer::kEps) v = Standardizer::kEps;
  }
  return s;
}

inline Dataset standardize_apply(const Standardizer& s, const Dataset& data) {
  if (s.n_features() != data.n_features)
    throw DataError("standardize_apply: feature count mismatch");
  Dataset out = data;
  for (std::int64_t r = 0; r < out.n_rows; ++r)
    s.apply_row(data.row(r), out.values.data() +
                                 static_cast<std::size_t>(r) * out.n_features);
  return out;
}

}  // namespace voxseg
