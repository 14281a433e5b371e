#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxseg/classifier/common.hpp"
#include "voxseg/errors.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// Per-class weight rows + intercepts; kind distinguishes the trained loss.
struct LinearModel {
  enum class Kind { logistic, svm };
  Kind kind = Kind::logistic;
  int n_features = 0;
  int n_classes = 0;
  std::vector<double> weights;  // K x F
  std::vector<double> bias;     // K

  double score(int c, const double* row) const {
    const double* w = weights.data() + static_cast<std::size_t>(c) * n_features;
    double s = bias[static_cast<std::size_t>(c)];
    for (int f = 0; f < n_features; ++f) s += w[f] * row[f];
    return s;
  }
};

inline int linear_predict(const LinearModel& m, const double* row) {
  std::vector<double> scores(static_cast<std::size_t>(m.n_classes));
  for (int c = 0; c < m.n_classes; ++c) scores[static_cast<std::size_t>(c)] = m.score(c, row);
  return argmax_class(scores);
}

inline int linear_predict(const LinearModel& m, const std::vector<double>& row) {
  if (static_cast<int>(row.size()) != m.n_features)
    throw DataError("linear_predict: row length != n_features");
  return linear_predict(m, row.data());
}

// Softmax over the class scores (meaningful for the logistic kind).
inline std::vector<double> linear_predict_proba(const LinearModel& m,
                                                const double* row) {
  std::vector<double> z(static_cast<std::size_t>(m.n_classes));
  for (int c = 0; c < m.n_classes; ++c)
    z[static_cast<std::size_t>(c)] = m.score(c, row);
  detail::softmax_inplace(z);
  return z;
}

// Mean cross-entropy of the current weights over the dataset.
inline double logreg_loss(const LinearModel& m, const Dataset& data) {
  std::vector<double> z(static_cast<std::size_t>(m.n_classes));
  double loss = 0;
  for (std::int64_t r = 0; r < data.n_rows; ++r) {
    for (int c = 0; c < m.n_classes; ++c)
      z[static_cast<std::size_t>(c)] = m.score(c, data.row(r));
    detail::softmax_inplace(z);
    loss -= std::log(std::max(
        z[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(r)] - 1)],
        1e-300));
  }
  return loss / static_cast<double>(data.n_rows);
}

// Multinomial softmax cross-entropy minimized by mini-batch gradient descent
// from zero initialization. Expects standardized features.
inline LinearModel logreg_fit(const Dataset& data, int epochs = 200,
                              double lr = 0.01, std::uint64_t seed = 0,
                              int batch_size = 64,
                              std::vector<double>* loss_curve = nullptr) {
  data.check();
  if (data.n_rows < 1 || !data.has_labels())
    throw DataError("logreg_fit: need a labeled, non-empty dataset");
  const int K = data.num_classes();
  const int F = data.n_features;
  LinearModel m;
  m.kind = LinearModel::Kind::logistic;
  m.n_features = F;
  m.n_classes = K;
  m.weights.assign(static_cast<std::size_t>(K) * F, 0.0);
  m.bias.assign(static_cast<std::size_t>(K), 0.0);

  std::mt19937_64 rng(seed);
  std::vector<double> z(static_cast<std::size_t>(K));
  std::vector<double> gw(static_cast<std::size_t>(K) * F);
  std::vector<double> gb(static_cast<std::size_t>(K));
  for (int e = 0; e < epochs; ++e) {
    auto order = detail::epoch_order(data.n_rows, rng);
    for (std::int64_t start = 0; start < data.n_rows; start += batch_size) {
      std::int64_t stop = std::min<std::int64_t>(data.n_rows, start + batch_size);
      std::fill(gw.begin(), gw.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (std::int64_t i = start; i < stop; ++i) {
        const double* row = data.row(order[static_cast<std::size_t>(i)]);
        int y = data.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] - 1;
        for (int c = 0; c < K; ++c) z[static_cast<std::size_t>(c)] = m.score(c, row);
        detail::softmax_inplace(z);
        for (int c = 0; c < K; ++c) {
          double g = z[static_cast<std::size_t>(c)] - (c == y ? 1.0 : 0.0);
          double* gwc = gw.data() + static_cast<std::size_t>(c) * F;
          for (int f = 0; f < F; ++f) gwc[f] += g * row[f];
          gb[static_cast<std::size_t>(c)] += g;
        }
      }
      double scale = lr / static_cast<double>(stop - start);
      for (std::size_t i = 0; i < m.weights.size(); ++i)
        m.weights[i] -= scale * gw[i];
      for (int c = 0; c < K; ++c)
        m.bias[static_cast<std::size_t>(c)] -= scale * gb[static_cast<std::size_t>(c)];
    }
    if (loss_curve) loss_curve->push_back(logreg_loss(m, data));
    if (loss_curve && !std::isfinite(loss_curve->back()))
      throw AlgoError("logreg_fit: non-finite loss (learning rate too high?)");
  }
  double probe = logreg_loss(m, data);
  if (!std::isfinite(probe))
    throw AlgoError("logreg_fit: non-finite loss (learning rate too high?)");
  return m;
}

// Hinge loss pieces, exposed for direct testing: a point with margin >= 1
// contributes zero gradient.
inline double hinge_loss(double margin) { return margin < 1 ? 1 - margin : 0; }
inline bool hinge_active(double margin) { return margin < 1; }

// One-vs-rest linear SVM trained by sub-gradient descent on L2-regularized
// hinge loss. Expects standardized features.
inline LinearModel svm_fit(const Dataset& data, int epochs = 200,
                           double lr = 0.01, double C = 1.0,
                           std::uint64_t seed = 0, int batch_size = 64) {
  data.check();
  if (data.n_rows < 1 || !data.has_labels())
    throw DataError("svm_fit: need a labeled, non-empty dataset");
  if (!(C > 0)) throw ConfigError("svm_fit: C must be > 0");
  const int K = data.num_classes();
  const int F = data.n_features;
  LinearModel m;
  m.kind = LinearModel::Kind::svm;
  m.n_features = F;
  m.n_classes = K;
  m.weights.assign(static_cast<std::size_t>(K) * F, 0.0);
  m.bias.assign(static_cast<std::size_t>(K), 0.0);

  const double lambda = 1.0 / (C * static_cast<double>(data.n_rows));
  std::mt19937_64 rng(seed);
  std::vector<double> gw(static_cast<std::size_t>(K) * F);
  std::vector<double> gb(static_cast<std::size_t>(K));
  for (int e = 0; e < epochs; ++e) {
    auto order = detail::epoch_order(data.n_rows, rng);
    for (std::int64_t start = 0; start < data.n_rows; start += batch_size) {
      std::int64_t stop = std::min<std::int64_t>(data.n_rows, start + batch_size);
      std::fill(gw.begin(), gw.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (std::int64_t i = start; i < stop; ++i) {
        const double* row = data.row(order[static_cast<std::size_t>(i)]);
        int y = data.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] - 1;
        for (int c = 0; c < K; ++c) {
          double target = c == y ? 1.0 : -1.0;
          double margin = target * m.score(c, row);
          if (hinge_active(margin)) {
            double* gwc = gw.data() + static_cast<std::size_t>(c) * F;
            for (int f = 0; f < F; ++f) gwc[f] -= target * row[f];
            gb[static_cast<std::size_t>(c)] -= target;
          }
        }
      }
      double scale = lr / static_cast<double>(stop - start);
      for (int c = 0; c < K; ++c) {
        double* w = m.weights.data() + static_cast<std::size_t>(c) * F;
        const double* gwc = gw.data() + static_cast<std::size_t>(c) * F;
        for (int f = 0; f < F; ++f)
          w[f] -= scale * gwc[f] + lr * lambda * w[f];
        m.bias[static_cast<std::size_t>(c)] -=
            scale * gb[static_cast<std::size_t>(c)];
      }
    }
  }
  for (double w : m.weights)
    if (!std::isfinite(w))
      throw AlgoError("svm_fit: non-finite weights (learning rate too high?)");
  return m;
}

inline nlohmann::json linear_to_json(const LinearModel& m) {
  return {{"version", 1},
          {"kind", m.kind == LinearModel::Kind::logistic ? "linear_logistic"
                                                         : "linear_svm"},
          {"n_features", m.n_features},
          {"n_classes", m.n_classes},
          {"weights", m.weights},
          {"bias", m.bias}};
}

inline LinearModel linear_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1)
    throw DataError("linear model: unknown version");
  std::string kind = j.at("kind").get<std::string>();
  LinearModel m;
  if (kind == "linear_logistic")
    m.kind = LinearModel::Kind::logistic;
  else if (kind == "linear_svm")
    m.kind = LinearModel::Kind::svm;
  else
    throw DataError("linear model: wrong kind");
  m.n_features = j.at("n_features").get<int>();
  m.n_classes = j.at("n_classes").get<int>();
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<std::vector<double>>();
  return m;
}

}  // namespace voxseg
