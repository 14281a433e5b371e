#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include <json.hpp>

#include "voxseg/classifier/common.hpp"
#include "voxseg/errors.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// Fully connected net: ReLU hidden layers, softmax output, cross-entropy
// loss, mini-batch gradient descent. Weight layout per layer: out x in,
// row-major.
struct DenseNetModel {
  std::vector<int> layer_sizes;  // input, hidden..., K
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  int epochs = 30;
  double learning_rate = 0.01;
  int batch_size = 64;
  std::uint64_t seed = 0;

  int n_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int n_features() const { return layer_sizes.front(); }
  int n_classes() const { return layer_sizes.back(); }

  void check_shapes() const {
    if (layer_sizes.size() < 2)
      throw ConfigError("dense net: need at least input and output layers");
    if (weights.size() != static_cast<std::size_t>(n_layers()) ||
        biases.size() != static_cast<std::size_t>(n_layers()))
      throw DataError("dense net: layer count mismatch");
    for (int l = 0; l < n_layers(); ++l) {
      std::size_t in = static_cast<std::size_t>(layer_sizes[static_cast<std::size_t>(l)]);
      std::size_t out = static_cast<std::size_t>(layer_sizes[static_cast<std::size_t>(l) + 1]);
      if (weights[static_cast<std::size_t>(l)].size() != in * out ||
          biases[static_cast<std::size_t>(l)].size() != out)
        throw DataError("dense net: weight shape mismatch at layer " +
                        std::to_string(l));
    }
  }
};

namespace detail {

// Scratch activations reused across samples.
struct NetWorkspace {
  std::vector<std::vector<double>> acts;    // per layer, post-activation
  std::vector<std::vector<double>> deltas;  // per layer (excluding input)

  explicit NetWorkspace(const DenseNetModel& m) {
    acts.resize(m.layer_sizes.size());
    for (std::size_t i = 0; i < m.layer_sizes.size(); ++i)
      acts[i].resize(static_cast<std::size_t>(m.layer_sizes[i]));
    deltas.resize(static_cast<std::size_t>(m.n_layers()));
    for (int l = 0; l < m.n_layers(); ++l)
      deltas[static_cast<std::size_t>(l)].resize(
          static_cast<std::size_t>(m.layer_sizes[static_cast<std::size_t>(l) + 1]));
  }
};

// Forward pass; leaves softmax probabilities in ws.acts.back().
inline void net_forward(const DenseNetModel& m, const double* row,
                        NetWorkspace& ws) {
  std::copy(row, row + m.n_features(), ws.acts[0].begin());
  for (int l = 0; l < m.n_layers(); ++l) {
    const auto& W = m.weights[static_cast<std::size_t>(l)];
    const auto& b = m.biases[static_cast<std::size_t>(l)];
    const auto& in = ws.acts[static_cast<std::size_t>(l)];
    auto& out = ws.acts[static_cast<std::size_t>(l) + 1];
    const int ni = static_cast<int>(in.size());
    const int no = static_cast<int>(out.size());
    const bool last = l == m.n_layers() - 1;
    for (int j = 0; j < no; ++j) {
      const double* w = W.data() + static_cast<std::size_t>(j) * ni;
      double s = b[static_cast<std::size_t>(j)];
      for (int i = 0; i < ni; ++i) s += w[i] * in[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(j)] = last ? s : (s > 0 ? s : 0.0);
    }
    if (last) {
      double mx = *std::max_element(out.begin(), out.end());
      double sum = 0;
      for (auto& v : out) {
        v = std::exp(v - mx);
        sum += v;
      }
      for (auto& v : out) v /= sum;
    }
  }
}

// Forward pass up to the logits only (prediction fast path; softmax is
// monotone so argmax over logits equals argmax over probabilities).
inline void net_forward_logits(const DenseNetModel& m, const double* row,
                               NetWorkspace& ws) {
  std::copy(row, row + m.n_features(), ws.acts[0].begin());
  for (int l = 0; l < m.n_layers(); ++l) {
    const auto& W = m.weights[static_cast<std::size_t>(l)];
    const auto& b = m.biases[static_cast<std::size_t>(l)];
    const auto& in = ws.acts[static_cast<std::size_t>(l)];
    auto& out = ws.acts[static_cast<std::size_t>(l) + 1];
    const int ni = static_cast<int>(in.size());
    const int no = static_cast<int>(out.size());
    const bool last = l == m.n_layers() - 1;
    for (int j = 0; j < no; ++j) {
      const double* w = W.data() + static_cast<std::size_t>(j) * ni;
      double s = b[static_cast<std::size_t>(j)];
      for (int i = 0; i < ni; ++i) s += w[i] * in[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(j)] = last ? s : (s > 0 ? s : 0.0);
    }
  }
}

}  // namespace detail

// Mean cross-entropy over the dataset with the current weights.
inline double net_loss(const DenseNetModel& m, const Dataset& data) {
  detail::NetWorkspace ws(m);
  double loss = 0;
  for (std::int64_t r = 0; r < data.n_rows; ++r) {
    detail::net_forward(m, data.row(r), ws);
    double p = ws.acts.back()[static_cast<std::size_t>(
        data.labels[static_cast<std::size_t>(r)] - 1)];
    loss -= std::log(std::max(p, 1e-300));
  }
  return loss / static_cast<double>(data.n_rows);
}

// Accumulates mean-cross-entropy gradients for rows [begin, end) of `data`
// into gw/gb (flat per-layer arrays). Exposed so tests can check the
// analytic gradient against finite differences.
inline void net_gradient(const DenseNetModel& m, const Dataset& data,
                         std::int64_t begin, std::int64_t end,
                         std::vector<std::vector<double>>& gw,
                         std::vector<std::vector<double>>& gb) {
  detail::NetWorkspace ws(m);
  gw.resize(static_cast<std::size_t>(m.n_layers()));
  gb.resize(static_cast<std::size_t>(m.n_layers()));
  for (int l = 0; l < m.n_layers(); ++l) {
    gw[static_cast<std::size_t>(l)].assign(m.weights[static_cast<std::size_t>(l)].size(), 0.0);
    gb[static_cast<std::size_t>(l)].assign(m.biases[static_cast<std::size_t>(l)].size(), 0.0);
  }
  const double inv = 1.0 / static_cast<double>(end - begin);
  for (std::int64_t r = begin; r < end; ++r) {
    detail::net_forward(m, data.row(r), ws);
    int y = data.labels[static_cast<std::size_t>(r)] - 1;
    // Output delta: softmax + cross-entropy.
    auto& dout = ws.deltas[static_cast<std::size_t>(m.n_layers() - 1)];
    const auto& probs = ws.acts.back();
    for (std::size_t j = 0; j < dout.size(); ++j)
      dout[j] = (probs[j] - (static_cast<int>(j) == y ? 1.0 : 0.0)) * inv;
    for (int l = m.n_layers() - 1; l >= 0; --l) {
      const auto& in = ws.acts[static_cast<std::size_t>(l)];
      const auto& delta = ws.deltas[static_cast<std::size_t>(l)];
      auto& gwl = gw[static_cast<std::size_t>(l)];
      auto& gbl = gb[static_cast<std::size_t>(l)];
      const int ni = static_cast<int>(in.size());
      const int no = static_cast<int>(delta.size());
      for (int j = 0; j < no; ++j) {
        double d = delta[static_cast<std::size_t>(j)];
        double* g = gwl.data() + static_cast<std::size_t>(j) * ni;
        for (int i = 0; i < ni; ++i) g[i] += d * in[static_cast<std::size_t>(i)];
        gbl[static_cast<std::size_t>(j)] += d;
      }
      if (l > 0) {
        auto& dprev = ws.deltas[static_cast<std::size_t>(l - 1)];
        const auto& W = m.weights[static_cast<std::size_t>(l)];
        const auto& act = ws.acts[static_cast<std::size_t>(l)];
        for (int i = 0; i < ni; ++i) {
          double s = 0;
          for (int j = 0; j < no; ++j)
            s += W[static_cast<std::size_t>(j) * ni + i] *
                 delta[static_cast<std::size_t>(j)];
          dprev[static_cast<std::size_t>(i)] =
              act[static_cast<std::size_t>(i)] > 0 ? s : 0.0;  // ReLU'
        }
      }
    }
  }
}

// He-style initialization: N(0, sqrt(2/fan_in)), biases zero, seeded.
inline DenseNetModel net_init(const std::vector<int>& layer_sizes,
                              std::uint64_t seed) {
  if (layer_sizes.size() < 2)
    throw ConfigError("net_init: need at least input and output sizes");
  for (int s : layer_sizes)
    if (s < 1) throw ConfigError("net_init: layer sizes must be >= 1");
  DenseNetModel m;
  m.layer_sizes = layer_sizes;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  for (int l = 0; l + 1 < static_cast<int>(layer_sizes.size()); ++l) {
    int ni = layer_sizes[static_cast<std::size_t>(l)];
    int no = layer_sizes[static_cast<std::size_t>(l) + 1];
    std::normal_distribution<double> N(0.0, std::sqrt(2.0 / ni));
    std::vector<double> W(static_cast<std::size_t>(ni) * no);
    for (auto& w : W) w = N(rng);
    m.weights.push_back(std::move(W));
    m.biases.emplace_back(static_cast<std::size_t>(no), 0.0);
  }
  return m;
}

inline DenseNetModel net_fit(const Dataset& data,
                             const std::vector<int>& hidden_sizes,
                             int epochs = 30, double lr = 0.01,
                             int batch_size = 64, std::uint64_t seed = 0,
                             std::vector<double>* loss_curve = nullptr) {
  data.check();
  if (data.n_rows < 1 || !data.has_labels())
    throw DataError("net_fit: need a labeled, non-empty dataset");
  if (hidden_sizes.empty())
    throw ConfigError("net_fit: at least one hidden layer required");
  const int K = data.num_classes();
  std::vector<int> sizes;
  sizes.push_back(data.n_features);
  sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  sizes.push_back(K);
  DenseNetModel m = net_init(sizes, seed);
  m.epochs = epochs;
  m.learning_rate = lr;
  m.batch_size = batch_size;

  // Shuffled batches need contiguous rows for net_gradient: keep a
  // permuted copy refreshed per epoch.
  Dataset shuffled = data;
  std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ull);
  std::vector<std::vector<double>> gw, gb;
  for (int e = 0; e < epochs; ++e) {
    auto order = detail::epoch_order(data.n_rows, rng);
    for (std::int64_t i = 0; i < data.n_rows; ++i) {
      std::copy(data.row(order[static_cast<std::size_t>(i)]),
                data.row(order[static_cast<std::size_t>(i)]) + data.n_features,
                shuffled.values.begin() +
                    static_cast<std::size_t>(i) * data.n_features);
      shuffled.labels[static_cast<std::size_t>(i)] =
          data.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    }
    for (std::int64_t start = 0; start < data.n_rows; start += batch_size) {
      std::int64_t stop = std::min<std::int64_t>(data.n_rows, start + batch_size);
      net_gradient(m, shuffled, start, stop, gw, gb);
      for (int l = 0; l < m.n_layers(); ++l) {
        auto& W = m.weights[static_cast<std::size_t>(l)];
        auto& B = m.biases[static_cast<std::size_t>(l)];
        const auto& gwl = gw[static_cast<std::size_t>(l)];
        const auto& gbl = gb[static_cast<std::size_t>(l)];
        for (std::size_t i = 0; i < W.size(); ++i) W[i] -= lr * gwl[i];
        for (std::size_t i = 0; i < B.size(); ++i) B[i] -= lr * gbl[i];
      }
    }
    if (loss_curve) {
      loss_curve->push_back(net_loss(m, data));
      if (!std::isfinite(loss_curve->back()))
        throw AlgoError("net_fit: non-finite loss (learning rate too high?)");
    }
  }
  for (const auto& W : m.weights)
    for (double w : W)
      if (!std::isfinite(w)) throw AlgoError("net_fit: non-finite weights");
  return m;
}

inline std::vector<double> net_predict_proba(const DenseNetModel& m,
                                             const double* row) {
  detail::NetWorkspace ws(m);
  detail::net_forward(m, row, ws);
  return ws.acts.back();
}

inline std::vector<double> net_predict_proba(const DenseNetModel& m,
                                             const std::vector<double>& row) {
  if (static_cast<int>(row.size()) != m.n_features())
    throw DataError("net_predict_proba: row length != n_features");
  return net_predict_proba(m, row.data());
}

inline int net_predict(const DenseNetModel& m, const double* row) {
  detail::NetWorkspace ws(m);
  detail::net_forward_logits(m, row, ws);
  return argmax_class(ws.acts.back());
}

inline int net_predict(const DenseNetModel& m, const std::vector<double>& row) {
  if (static_cast<int>(row.size()) != m.n_features())
    throw DataError("net_predict: row length != n_features");
  return net_predict(m, row.data());
}

// Batch prediction partitioned across workers; per-row math is independent
// of the partitioning.
inline void net_predict_batch(const DenseNetModel& m, const double* rows,
                              std::int64_t n, int* out_labels, int workers = 1,
                              double* out_probs = nullptr) {
  auto run = [&](std::int64_t lo, std::int64_t hi) {
    detail::NetWorkspace ws(m);
    for (std::int64_t i = lo; i < hi; ++i) {
      const double* row = rows + static_cast<std::size_t>(i) * m.n_features();
      if (out_probs) {
        detail::net_forward(m, row, ws);
        const auto& p = ws.acts.back();
        std::copy(p.begin(), p.end(),
                  out_probs + static_cast<std::size_t>(i) * m.n_classes());
      } else {
        detail::net_forward_logits(m, row, ws);
      }
      out_labels[i] = argmax_class(ws.acts.back());
    }
  };
  if (workers <= 1 || n < 2 * workers) {
    run(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::int64_t lo = w * chunk, hi = std::min<std::int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(run, lo, hi);
  }
  for (auto& th : pool) th.join();
}

inline nlohmann::json net_to_json(const DenseNetModel& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["kind"] = "dense_net";
  j["layer_sizes"] = m.layer_sizes;
  j["weights"] = m.weights;
  j["biases"] = m.biases;
  j["epochs"] = m.epochs;
  j["learning_rate"] = m.learning_rate;
  j["batch_size"] = m.batch_size;
  j["seed"] = m.seed;
  return j;
}

inline DenseNetModel net_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1)
    throw DataError("dense net model: unknown version");
  if (j.at("kind").get<std::string>() != "dense_net")
    throw DataError("dense net model: wrong kind");
  DenseNetModel m;
  m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
  m.biases = j.at("biases").get<std::vector<std::vector<double>>>();
  m.epochs = j.at("epochs").get<int>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.batch_size = j.at("batch_size").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.check_shapes();
  return m;
}

}  // namespace voxseg
