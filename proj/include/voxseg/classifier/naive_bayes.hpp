#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "voxseg/classifier/common.hpp"
#include "voxseg/errors.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// Gaussian naive Bayes: per-class priors plus per-class per-feature mean
// and variance (variance floored at kVarEps).
struct NaiveBayesModel {
  int n_features = 0;
  int n_classes = 0;
  std::vector<double> priors;     // K
  std::vector<double> means;      // K x F
  std::vector<double> variances;  // K x F, floored
  static constexpr double kVarEps = 1e-9;

  double mean(int c, int f) const {
    return means[static_cast<std::size_t>(c) * n_features + f];
  }
  double variance(int c, int f) const {
    return variances[static_cast<std::size_t>(c) * n_features + f];
  }
};

inline NaiveBayesModel nb_fit(const Dataset& data) {
  data.check();
  if (data.n_rows < 1 || !data.has_labels())
    throw DataError("nb_fit: need a labeled, non-empty dataset");
  const int K = data.num_classes();
  const int F = data.n_features;
  NaiveBayesModel m;
  m.n_features = F;
  m.n_classes = K;
  m.priors.assign(static_cast<std::size_t>(K), 0.0);
  m.means.assign(static_cast<std::size_t>(K) * F, 0.0);
  m.variances.assign(static_cast<std::size_t>(K) * F, 0.0);

  std::vector<std::int64_t> counts(static_cast<std::size_t>(K), 0);
  for (std::int64_t r = 0; r < data.n_rows; ++r) {
    int c = data.labels[static_cast<std::size_t>(r)] - 1;
    counts[static_cast<std::size_t>(c)]++;
    for (int f = 0; f < F; ++f)
      m.means[static_cast<std::size_t>(c) * F + f] += data.at(r, f);
  }
  for (int c = 0; c < K; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0)
      throw DataError("nb_fit: class " + std::to_string(c + 1) +
                      " has no training rows");
    for (int f = 0; f < F; ++f)
      m.means[static_cast<std::size_t>(c) * F + f] /=
          static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  for (std::int64_t r = 0; r < data.n_rows; ++r) {
    int c = data.labels[static_cast<std::size_t>(r)] - 1;
    for (int f = 0; f < F; ++f) {
      double d = data.at(r, f) - m.means[static_cast<std::size_t>(c) * F + f];
      m.variances[static_cast<std::size_t>(c) * F + f] += d * d;
    }
  }
  for (int c = 0; c < K; ++c)
    for (int f = 0; f < F; ++f) {
      double& v = m.variances[static_cast<std::size_t>(c) * F + f];
      v /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
      if (v < NaiveBayesModel::kVarEps) v = NaiveBayesModel::kVarEps;
    }
  for (int c = 0; c < K; ++c)
    m.priors[static_cast<std::size_t>(c)] =
        static_cast<double>(counts[static_cast<std::size_t>(c)]) /
        static_cast<double>(data.n_rows);
  return m;
}

inline void nb_log_posterior(const NaiveBayesModel& m, const double* row,
                             double* out) {
  constexpr double kLog2Pi = 1.8378770664093453;
  for (int c = 0; c < m.n_classes; ++c) {
    double ll = std::log(m.priors[static_cast<std::size_t>(c)]);
    for (int f = 0; f < m.n_features; ++f) {
      double var = m.variance(c, f);
      double d = row[f] - m.mean(c, f);
      ll += -0.5 * (kLog2Pi + std::log(var) + d * d / var);
    }
    out[c] = ll;
  }
}

inline int nb_predict(const NaiveBayesModel& m, const double* row) {
  std::vector<double> ll(static_cast<std::size_t>(m.n_classes));
  nb_log_posterior(m, row, ll.data());
  return argmax_class(ll);
}

inline int nb_predict(const NaiveBayesModel& m, const std::vector<double>& row) {
  if (static_cast<int>(row.size()) != m.n_features)
    throw DataError("nb_predict: row length != n_features");
  return nb_predict(m, row.data());
}

inline nlohmann::json nb_to_json(const NaiveBayesModel& m) {
  return {{"version", 1},     {"kind", "naive_bayes"},
          {"n_features", m.n_features}, {"n_classes", m.n_classes},
          {"priors", m.priors}, {"means", m.means},
          {"variances", m.variances}};
}

inline NaiveBayesModel nb_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1)
    throw DataError("naive_bayes model: unknown version");
  if (j.at("kind").get<std::string>() != "naive_bayes")
    throw DataError("naive_bayes model: wrong kind");
  NaiveBayesModel m;
  m.n_features = j.at("n_features").get<int>();
  m.n_classes = j.at("n_classes").get<int>();
  m.priors = j.at("priors").get<std::vector<double>>();
  m.means = j.at("means").get<std::vector<double>>();
  m.variances = j.at("variances").get<std::vector<double>>();
  return m;
}

}  // namespace voxseg
