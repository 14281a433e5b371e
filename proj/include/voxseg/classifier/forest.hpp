#pragma once

#include <algorithm>
#include <atomic>
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

// 1 - sum(p_c^2) over the class counts.
inline double gini_impurity(const std::vector<std::int64_t>& counts) {
  std::int64_t n = 0;
  for (auto c : counts) n += c;
  if (n == 0) return 0.0;
  double acc = 0;
  for (auto c : counts) {
    double p = static_cast<double>(c) / static_cast<double>(n);
    acc += p * p;
  }
  return 1.0 - acc;
}

struct ForestHyperparams {
  int n_trees = 100;
  int max_depth = 16;          // 0 = unlimited
  int min_samples_split = 2;
  int features_per_split = 0;  // 0 = floor(sqrt(n_features))
  bool bootstrap = true;
  double bootstrap_fraction = 1.0;

  void validate(int n_features) const {
    if (n_trees < 1) throw ConfigError("forest: n_trees must be >= 1");
    if (max_depth < 0) throw ConfigError("forest: max_depth must be >= 0");
    if (min_samples_split < 2)
      throw ConfigError("forest: min_samples_split must be >= 2");
    if (features_per_split < 0 || features_per_split > n_features)
      throw ConfigError("forest: features_per_split out of range");
    if (bootstrap && !(bootstrap_fraction > 0))
      throw ConfigError("forest: bootstrap_fraction must be > 0");
  }

  int effective_features_per_split(int n_features) const {
    if (features_per_split > 0) return features_per_split;
    int k = static_cast<int>(std::floor(std::sqrt(double(n_features))));
    return std::max(1, k);
  }
};

// Flat tree storage. A split node keeps child indices; a leaf keeps an
// offset into the per-tree leaf histogram arrays.
struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;     // split: child index; leaf: leaf slot
  std::int32_t right = -1;
};

struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<std::int64_t> leaf_counts;  // n_leaves x K
  std::vector<double> leaf_probs;         // per-leaf normalized histograms

  int walk(const double* row) const {
    std::int32_t cur = 0;
    while (true) {
      const TreeNode& nd = nodes[static_cast<std::size_t>(cur)];
      if (nd.feature < 0) return nd.left;
      cur = row[nd.feature] < nd.threshold ? nd.left : nd.right;
    }
  }
};

struct RandomForestModel {
  std::vector<Tree> trees;
  int n_features = 0;
  int n_classes = 0;
  ForestHyperparams hp;
  std::uint64_t seed = 0;
};

namespace detail {

struct TreeBuilder {
  const Dataset& data;
  const std::vector<std::int64_t>& sample;  // indices into data rows
  int n_classes;
  const ForestHyperparams& hp;
  std::mt19937_64& rng;

  TreeBuilder(const Dataset& d, const std::vector<std::int64_t>& s, int k,
              const ForestHyperparams& h, std::mt19937_64& r)
      : data(d), sample(s), n_classes(k), hp(h), rng(r) {}

  Tree tree;
  std::vector<std::int64_t> order;           // mutable working copy of sample
  std::vector<int> feature_pool;
  std::vector<std::pair<double, int>> scratch;  // (value, class) sorted per node

  Tree build() {
    order.assign(sample.begin(), sample.end());
    feature_pool.resize(static_cast<std::size_t>(data.n_features));
    std::iota(feature_pool.begin(), feature_pool.end(), 0);
    tree.nodes.reserve(64);
    grow(0, static_cast<std::int64_t>(order.size()), 0, alloc_node());
    return std::move(tree);
  }

 private:
  std::int32_t alloc_node() {
    tree.nodes.emplace_back();
    return static_cast<std::int32_t>(tree.nodes.size() - 1);
  }

  void make_leaf(std::int32_t slot, const std::vector<std::int64_t>& counts) {
    std::int32_t leaf_id =
        static_cast<std::int32_t>(tree.leaf_counts.size() / n_classes);
    tree.leaf_counts.insert(tree.leaf_counts.end(), counts.begin(),
                            counts.end());
    tree.nodes[static_cast<std::size_t>(slot)] = {-1, 0.0, leaf_id, -1};
  }

  void grow(std::int64_t begin, std::int64_t end, int depth,
            std::int32_t slot) {
    const std::int64_t n = end - begin;
    std::vector<std::int64_t> counts(static_cast<std::size_t>(n_classes), 0);
    for (std::int64_t i = begin; i < end; ++i)
      counts[static_cast<std::size_t>(
          data.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] - 1)]++;

    const bool pure =
        std::count_if(counts.begin(), counts.end(),
                      [](std::int64_t c) { return c > 0; }) <= 1;
    if (pure || n < hp.min_samples_split ||
        (hp.max_depth > 0 && depth >= hp.max_depth)) {
      make_leaf(slot, counts);
      return;
    }

    // Random candidate subset via partial Fisher-Yates; candidates are
    // examined in drawn order, first strictly-better gain wins.
    const int k = hp.effective_features_per_split(data.n_features);
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<int> pick(i, data.n_features - 1);
      std::swap(feature_pool[static_cast<std::size_t>(i)],
                feature_pool[static_cast<std::size_t>(pick(rng))]);
    }

    const double parent_gini = gini_impurity(counts);
    double best_gain = -1.0;
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<std::int64_t> left_counts(static_cast<std::size_t>(n_classes));
    for (int ci = 0; ci < k; ++ci) {
      const int f = feature_pool[static_cast<std::size_t>(ci)];
      scratch.clear();
      for (std::int64_t i = begin; i < end; ++i) {
        std::int64_t r = order[static_cast<std::size_t>(i)];
        scratch.emplace_back(data.at(r, f),
                             data.labels[static_cast<std::size_t>(r)] - 1);
      }
      std::sort(scratch.begin(), scratch.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      std::fill(left_counts.begin(), left_counts.end(), 0);
      std::int64_t nl = 0;
      for (std::int64_t i = 0; i + 1 < n; ++i) {
        left_counts[static_cast<std::size_t>(scratch[static_cast<std::size_t>(i)].second)]++;
        ++nl;
        double a = scratch[static_cast<std::size_t>(i)].first;
        double b = scratch[static_cast<std::size_t>(i + 1)].first;
        if (!(a < b)) continue;
        double mid = a + (b - a) / 2;
        if (!(mid > a)) continue;  // values adjacent in fp; cannot separate
        // Gini of both children from prefix counts.
        double gl = 0, gr = 0;
        std::int64_t nr = n - nl;
        for (int c = 0; c < n_classes; ++c) {
          double lc = static_cast<double>(left_counts[static_cast<std::size_t>(c)]);
          double rc = static_cast<double>(counts[static_cast<std::size_t>(c)]) - lc;
          gl += lc * lc;
          gr += rc * rc;
        }
        gl = 1.0 - gl / (static_cast<double>(nl) * nl);
        gr = 1.0 - gr / (static_cast<double>(nr) * nr);
        double gain = parent_gini - (nl * gl + nr * gr) / static_cast<double>(n);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = mid;
        }
      }
    }

    if (best_feature < 0) {  // all candidates constant on this node
      make_leaf(slot, counts);
      return;
    }

    auto* base = order.data();
    auto mid_it = std::partition(
        base + begin, base + end, [&](std::int64_t r) {
          return data.at(r, best_feature) < best_threshold;
        });
    std::int64_t mid = mid_it - base;

    std::int32_t left = alloc_node();
    std::int32_t right = alloc_node();
    tree.nodes[static_cast<std::size_t>(slot)] = {best_feature, best_threshold,
                                                  left, right};
    grow(begin, mid, depth + 1, left);
    grow(mid, end, depth + 1, right);
  }
};

inline void finalize_leaf_probs(Tree& t, int n_classes) {
  t.leaf_probs.resize(t.leaf_counts.size());
  const std::size_t n_leaves = t.leaf_counts.size() / n_classes;
  for (std::size_t l = 0; l < n_leaves; ++l) {
    std::int64_t total = 0;
    for (int c = 0; c < n_classes; ++c)
      total += t.leaf_counts[l * n_classes + c];
    for (int c = 0; c < n_classes; ++c)
      t.leaf_probs[l * n_classes + c] =
          static_cast<double>(t.leaf_counts[l * n_classes + c]) /
          static_cast<double>(total);
  }
}

}  // namespace detail

// Grows hp.n_trees trees, each on a bootstrap sample, by recursive
// best-Gini-gain splits over a random feature subset per node.
// Deterministic for a fixed seed: tree t uses generator seed + t, so
// parallel and sequential training agree.
inline RandomForestModel forest_fit(const Dataset& data,
                                    const ForestHyperparams& hp,
                                    std::uint64_t seed, int workers = 1) {
  data.check();
  if (data.n_rows < 1) throw DataError("forest_fit: empty dataset");
  if (!data.has_labels()) throw DataError("forest_fit: dataset has no labels");
  hp.validate(data.n_features);
  const int K = data.num_classes();
  for (int l : data.labels)
    if (l < 1) throw DataError("forest_fit: labels must be >= 1");

  RandomForestModel model;
  model.n_features = data.n_features;
  model.n_classes = K;
  model.hp = hp;
  model.seed = seed;
  model.trees.resize(static_cast<std::size_t>(hp.n_trees));

  auto fit_tree = [&](int t) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(t));
    std::vector<std::int64_t> sample;
    if (hp.bootstrap) {
      std::int64_t m = std::max<std::int64_t>(
          1, std::llround(hp.bootstrap_fraction * static_cast<double>(data.n_rows)));
      sample.resize(static_cast<std::size_t>(m));
      std::uniform_int_distribution<std::int64_t> pick(0, data.n_rows - 1);
      for (auto& s : sample) s = pick(rng);
    } else {
      sample.resize(static_cast<std::size_t>(data.n_rows));
      std::iota(sample.begin(), sample.end(), 0);
    }
    detail::TreeBuilder builder(data, sample, K, hp, rng);
    model.trees[static_cast<std::size_t>(t)] = builder.build();
    detail::finalize_leaf_probs(model.trees[static_cast<std::size_t>(t)], K);
  };

  if (workers <= 1) {
    for (int t = 0; t < hp.n_trees; ++t) fit_tree(t);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int t = next.fetch_add(1); t < hp.n_trees; t = next.fetch_add(1))
          fit_tree(t);
      });
    for (auto& th : pool) th.join();
  }
  return model;
}

// Average of per-tree leaf histograms, each normalized per tree.
inline void forest_predict_proba(const RandomForestModel& m, const double* row,
                                 double* out) {
  for (int c = 0; c < m.n_classes; ++c) out[c] = 0;
  for (const auto& t : m.trees) {
    int leaf = t.walk(row);
    const double* p = t.leaf_probs.data() +
                      static_cast<std::size_t>(leaf) * m.n_classes;
    for (int c = 0; c < m.n_classes; ++c) out[c] += p[c];
  }
  const double inv = 1.0 / static_cast<double>(m.trees.size());
  for (int c = 0; c < m.n_classes; ++c) out[c] *= inv;
}

inline std::vector<double> forest_predict_proba(const RandomForestModel& m,
                                                const std::vector<double>& row) {
  if (static_cast<int>(row.size()) != m.n_features)
    throw DataError("forest_predict_proba: row length != n_features");
  std::vector<double> out(static_cast<std::size_t>(m.n_classes));
  forest_predict_proba(m, row.data(), out.data());
  return out;
}

inline int forest_predict(const RandomForestModel& m, const double* row) {
  std::vector<double> proba(static_cast<std::size_t>(m.n_classes));
  forest_predict_proba(m, row, proba.data());
  return argmax_class(proba);
}

inline int forest_predict(const RandomForestModel& m,
                          const std::vector<double>& row) {
  if (static_cast<int>(row.size()) != m.n_features)
    throw DataError("forest_predict: row length != n_features");
  return forest_predict(m, row.data());
}

// Batch prediction over row-major features. Rows are partitioned across
// workers; per-row tree order is fixed, so results do not depend on the
// worker count.
inline void forest_predict_batch(const RandomForestModel& m,
                                 const double* rows, std::int64_t n,
                                 int* out_labels, int workers = 1,
                                 double* out_probs = nullptr) {
  auto run = [&](std::int64_t lo, std::int64_t hi) {
    std::vector<double> acc(static_cast<std::size_t>(m.n_classes));
    for (std::int64_t i = lo; i < hi; ++i) {
      const double* row = rows + static_cast<std::size_t>(i) * m.n_features;
      forest_predict_proba(m, row, acc.data());
      out_labels[i] = argmax_class(acc.data(), m.n_classes);
      if (out_probs)
        std::copy(acc.begin(), acc.end(),
                  out_probs + static_cast<std::size_t>(i) * m.n_classes);
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

// ---------------------------------------------------------------------------
// JSON serialization (nested nodes).

namespace detail {

inline nlohmann::json tree_node_to_json(const Tree& t, std::int32_t idx,
                                        int n_classes) {
  const TreeNode& nd = t.nodes[static_cast<std::size_t>(idx)];
  if (nd.feature < 0) {
    std::vector<std::int64_t> counts(
        t.leaf_counts.begin() + static_cast<std::size_t>(nd.left) * n_classes,
        t.leaf_counts.begin() + (static_cast<std::size_t>(nd.left) + 1) * n_classes);
    return {{"counts", counts}};
  }
  return {{"feature", nd.feature},
          {"threshold", nd.threshold},
          {"left", tree_node_to_json(t, nd.left, n_classes)},
          {"right", tree_node_to_json(t, nd.right, n_classes)}};
}

inline std::int32_t tree_node_from_json(const nlohmann::json& j, Tree& t,
                                        int n_classes) {
  std::int32_t slot = static_cast<std::int32_t>(t.nodes.size());
  t.nodes.emplace_back();
  if (j.contains("counts")) {
    auto counts = j.at("counts").get<std::vector<std::int64_t>>();
    if (static_cast<int>(counts.size()) != n_classes)
      throw DataError("forest model: leaf histogram size mismatch");
    std::int32_t leaf_id =
        static_cast<std::int32_t>(t.leaf_counts.size() / n_classes);
    t.leaf_counts.insert(t.leaf_counts.end(), counts.begin(), counts.end());
    t.nodes[static_cast<std::size_t>(slot)] = {-1, 0.0, leaf_id, -1};
    return slot;
  }
  std::int32_t left = tree_node_from_json(j.at("left"), t, n_classes);
  std::int32_t right = tree_node_from_json(j.at("right"), t, n_classes);
  t.nodes[static_cast<std::size_t>(slot)] = {j.at("feature").get<std::int32_t>(),
                                             j.at("threshold").get<double>(),
                                             left, right};
  return slot;
}

}  // namespace detail

inline nlohmann::json forest_to_json(const RandomForestModel& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["kind"] = "random_forest";
  j["n_features"] = m.n_features;
  j["n_classes"] = m.n_classes;
  j["hyperparams"] = {{"n_trees", m.hp.n_trees},
                      {"max_depth", m.hp.max_depth},
                      {"min_samples_split", m.hp.min_samples_split},
                      {"features_per_split", m.hp.features_per_split},
                      {"bootstrap", m.hp.bootstrap},
                      {"bootstrap_fraction", m.hp.bootstrap_fraction},
                      {"seed", m.seed}};
  j["trees"] = nlohmann::json::array();
  for (const auto& t : m.trees)
    j["trees"].push_back(detail::tree_node_to_json(t, 0, m.n_classes));
  return j;
}

inline RandomForestModel forest_from_json(const nlohmann::json& j) {
  if (!j.contains("version") || j.at("version").get<int>() != 1)
    throw DataError("forest model: unknown version");
  if (j.at("kind").get<std::string>() != "random_forest")
    throw DataError("forest model: wrong kind");
  RandomForestModel m;
  m.n_features = j.at("n_features").get<int>();
  m.n_classes = j.at("n_classes").get<int>();
  const auto& h = j.at("hyperparams");
  m.hp.n_trees = h.at("n_trees").get<int>();
  m.hp.max_depth = h.at("max_depth").get<int>();
  m.hp.min_samples_split = h.at("min_samples_split").get<int>();
  m.hp.features_per_split = h.at("features_per_split").get<int>();
  m.hp.bootstrap = h.at("bootstrap").get<bool>();
  m.hp.bootstrap_fraction = h.at("bootstrap_fraction").get<double>();
  m.seed = h.at("seed").get<std::uint64_t>();
  for (const auto& tj : j.at("trees")) {
    Tree t;
    detail::tree_node_from_json(tj, t, m.n_classes);
    detail::finalize_leaf_probs(t, m.n_classes);
    m.trees.push_back(std::move(t));
  }
  if (static_cast<int>(m.trees.size()) != m.hp.n_trees)
    throw DataError("forest model: tree count != n_trees");
  return m;
}

}  // namespace voxseg
