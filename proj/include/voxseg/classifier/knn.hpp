#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "voxseg/classifier/common.hpp"
#include "voxseg/errors.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// Retains the (standardized) training set; Euclidean distance.
struct KnnModel {
  Dataset train;
  int k = 5;
  int n_classes = 0;
};

inline KnnModel knn_fit(const Dataset& data, int k) {
  data.check();
  if (data.n_rows < 1 || !data.has_labels())
    throw DataError("knn_fit: need a labeled, non-empty dataset");
  if (k < 1 || k > data.n_rows)
    throw ConfigError("knn_fit: k must be in 1..n_rows");
  KnnModel m;
  m.train = data;
  m.k = k;
  m.n_classes = data.num_classes();
  return m;
}

// Majority label among the k nearest. Distance ties break toward the lower
// training-row index, vote ties toward the lowest class id.
inline int knn_predict(const KnnModel& m, const double* row) {
  const std::int64_t n = m.train.n_rows;
  const int F = m.train.n_features;
  std::vector<std::pair<double, std::int64_t>> d(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double* t = m.train.row(i);
    double acc = 0;
    for (int f = 0; f < F; ++f) {
      double diff = row[f] - t[f];
      acc += diff * diff;
    }
    d[static_cast<std::size_t>(i)] = {acc, i};
  }
  std::partial_sort(d.begin(), d.begin() + m.k, d.end());
  std::vector<int> votes(static_cast<std::size_t>(m.n_classes), 0);
  for (int i = 0; i < m.k; ++i)
    votes[static_cast<std::size_t>(
        m.train.labels[static_cast<std::size_t>(d[static_cast<std::size_t>(i)].second)] - 1)]++;
  int best = 0;
  for (int c = 1; c < m.n_classes; ++c)
    if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)])
      best = c;
  return best + 1;
}

inline int knn_predict(const KnnModel& m, const std::vector<double>& row) {
  if (static_cast<int>(row.size()) != m.train.n_features)
    throw DataError("knn_predict: row length != n_features");
  return knn_predict(m, row.data());
}

inline nlohmann::json knn_to_json(const KnnModel& m) {
  return {{"version", 1},
          {"kind", "knn"},
          {"k", m.k},
          {"n_classes", m.n_classes},
          {"n_features", m.train.n_features},
          {"n_rows", m.train.n_rows},
          {"feature_names", m.train.feature_names},
          {"values", m.train.values},
          {"labels", m.train.labels}};
}

inline KnnModel knn_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw DataError("knn model: unknown version");
  if (j.at("kind").get<std::string>() != "knn")
    throw DataError("knn model: wrong kind");
  KnnModel m;
  m.k = j.at("k").get<int>();
  m.n_classes = j.at("n_classes").get<int>();
  m.train.n_features = j.at("n_features").get<int>();
  m.train.n_rows = j.at("n_rows").get<std::int64_t>();
  m.train.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.train.values = j.at("values").get<std::vector<double>>();
  m.train.labels = j.at("labels").get<std::vector<int>>();
  m.train.check();
  return m;
}

}  // namespace voxseg
