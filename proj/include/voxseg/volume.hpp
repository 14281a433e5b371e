#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "voxseg/errors.hpp"

namespace voxseg {

// 3D grid of 8-bit intensities, x-fastest ordering: index = x + nx*(y + ny*z).
struct GrayVolume {
  int nx = 0, ny = 0, nz = 0;
  std::vector<std::uint8_t> voxels;

  GrayVolume() = default;
  GrayVolume(int nx_, int ny_, int nz_, std::uint8_t fill = 0)
      : nx(nx_), ny(ny_), nz(nz_) {
    if (nx < 1 || ny < 1 || nz < 1)
      throw DataError("GrayVolume: dims must be >= 1");
    voxels.assign(static_cast<std::size_t>(count()), fill);
  }

  std::int64_t count() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }
  std::int64_t index(int x, int y, int z) const {
    return x + static_cast<std::int64_t>(nx) * (y + static_cast<std::int64_t>(ny) * z);
  }
  std::uint8_t at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
  std::uint8_t& at(int x, int y, int z) { return voxels[index(x, y, z)]; }

  bool operator==(const GrayVolume&) const = default;
};

// Per-voxel class labels; 0 means unlabeled. Same ordering as GrayVolume.
struct LabelVolume {
  int nx = 0, ny = 0, nz = 0;
  std::vector<std::int32_t> labels;

  LabelVolume() = default;
  LabelVolume(int nx_, int ny_, int nz_, std::int32_t fill = 0)
      : nx(nx_), ny(ny_), nz(nz_) {
    if (nx < 1 || ny < 1 || nz < 1)
      throw DataError("LabelVolume: dims must be >= 1");
    labels.assign(static_cast<std::size_t>(count()), fill);
  }

  std::int64_t count() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }
  std::int64_t index(int x, int y, int z) const {
    return x + static_cast<std::int64_t>(nx) * (y + static_cast<std::int64_t>(ny) * z);
  }
  std::int32_t at(int x, int y, int z) const { return labels[index(x, y, z)]; }
  std::int32_t& at(int x, int y, int z) { return labels[index(x, y, z)]; }

  bool same_dims(const GrayVolume& v) const {
    return nx == v.nx && ny == v.ny && nz == v.nz;
  }

  bool operator==(const LabelVolume&) const = default;
};

// Double-valued volume used for filter outputs; same layout as GrayVolume.
struct RealVolume {
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> values;

  RealVolume() = default;
  RealVolume(int nx_, int ny_, int nz_, double fill = 0.0)
      : nx(nx_), ny(ny_), nz(nz_) {
    values.assign(static_cast<std::size_t>(count()), fill);
  }
  explicit RealVolume(const GrayVolume& v) : nx(v.nx), ny(v.ny), nz(v.nz) {
    values.resize(v.voxels.size());
    for (std::size_t i = 0; i < v.voxels.size(); ++i)
      values[i] = static_cast<double>(v.voxels[i]);
  }

  std::int64_t count() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }
  std::int64_t index(int x, int y, int z) const {
    return x + static_cast<std::int64_t>(nx) * (y + static_cast<std::int64_t>(ny) * z);
  }
  double at(int x, int y, int z) const { return values[index(x, y, z)]; }
  double& at(int x, int y, int z) { return values[index(x, y, z)]; }
};

struct ClassEntry {
  int id = 0;
  std::string name;
  std::array<std::uint8_t, 3> rgb{0, 0, 0};

  bool operator==(const ClassEntry&) const = default;
};

// Ordered class list; ids must be contiguous 1..K with unique names.
struct ClassCatalog {
  std::vector<ClassEntry> entries;

  ClassCatalog() = default;
  explicit ClassCatalog(std::vector<ClassEntry> e) : entries(std::move(e)) {
    validate();
  }

  void validate() const {
    std::unordered_set<std::string> names;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].id != static_cast<int>(i) + 1)
        throw DataError("ClassCatalog: ids must be contiguous 1..K, got id " +
                        std::to_string(entries[i].id) + " at position " +
                        std::to_string(i));
      if (!names.insert(entries[i].name).second)
        throw DataError("ClassCatalog: duplicate class name '" +
                        entries[i].name + "'");
    }
  }

  int num_classes() const { return static_cast<int>(entries.size()); }
  bool contains(int id) const { return id >= 1 && id <= num_classes(); }

  const ClassEntry& entry(int id) const {
    if (!contains(id))
      throw DataError("ClassCatalog: id " + std::to_string(id) +
                      " out of range 1.." + std::to_string(num_classes()));
    return entries[static_cast<std::size_t>(id - 1)];
  }

  int id_of(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return e.id;
    return 0;
  }

  bool operator==(const ClassCatalog&) const = default;
};

// Tabular samples: row-major feature matrix with optional 1-based labels.
// `provenance` optionally keeps the source voxel linear index per row.
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<double> values;  // n_rows x n_features, row-major
  std::int64_t n_rows = 0;
  int n_features = 0;
  std::vector<int> labels;                 // empty or size n_rows
  std::vector<std::int64_t> provenance;    // empty or size n_rows

  bool has_labels() const { return !labels.empty(); }

  double at(std::int64_t r, int c) const {
    return values[static_cast<std::size_t>(r) * n_features + c];
  }
  const double* row(std::int64_t r) const {
    return values.data() + static_cast<std::size_t>(r) * n_features;
  }

  void check() const {
    if (values.size() != static_cast<std::size_t>(n_rows) * n_features)
      throw DataError("Dataset: value count does not match n_rows*n_features");
    if (!labels.empty() && static_cast<std::int64_t>(labels.size()) != n_rows)
      throw DataError("Dataset: label count does not match n_rows");
    if (!feature_names.empty() &&
        static_cast<int>(feature_names.size()) != n_features)
      throw DataError("Dataset: feature name count does not match n_features");
  }

  int num_classes() const {
    int k = 0;
    for (int l : labels) k = std::max(k, l);
    return k;
  }
};

}  // namespace voxseg
