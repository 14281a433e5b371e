#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "voxseg/errors.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// ---------------------------------------------------------------------------
// Tabular generator. Four classes over four features:
//   PhiXsectContin in {0,1}, PixelColor in [0,255],
//   NeighbColorGrad in [0,127], Betw2Amplify in {0,1}.

inline constexpr int kTabPore = 1;
inline constexpr int kTabThroat = 2;
inline constexpr int kTabSolid = 3;
inline constexpr int kTabNCVugs = 4;

inline ClassCatalog tabular_catalog() {
  return ClassCatalog({{kTabPore, "Pore", {60, 60, 60}},
                       {kTabThroat, "throat", {0, 128, 255}},
                       {kTabSolid, "Solid", {200, 200, 200}},
                       {kTabNCVugs, "NC_Vugs", {128, 0, 128}}});
}

inline std::vector<std::string> tabular_feature_names() {
  return {"PhiXsectContin", "PixelColor", "NeighbColorGrad", "Betw2Amplify"};
}

// Deterministic labeling rule; rules are checked in order and the first
// match wins, so the rule is total together with the centroid fallback.
//   Solid   : PixelColor >= 180, or PhiXsectContin = 1 and Betw2Amplify = 0
//             and PixelColor >= 130 and NeighbColorGrad >= 40
//   throat  : PhiXsectContin = 1 and Betw2Amplify = 1 and PixelColor < 130
//   NC_Vugs : PhiXsectContin = 0 and 100 <= PixelColor < 180
//   Pore    : PixelColor < 130 and NeighbColorGrad >= 60 and Betw2Amplify = 0
// Anything else maps to the nearest class centroid (raw feature units).
inline int label_function(double phi, double pixel, double grad, double betw) {
  if (phi < 0 || phi > 1 || pixel < 0 || pixel > 255 || grad < 0 ||
      grad > 127 || betw < 0 || betw > 1)
    throw DataError("label_function: feature out of range");
  const bool phi1 = phi >= 0.5;
  const bool betw1 = betw >= 0.5;
  if (pixel >= 180 || (phi1 && !betw1 && pixel >= 130 && grad >= 40))
    return kTabSolid;
  if (phi1 && betw1 && pixel < 130) return kTabThroat;
  if (!phi1 && pixel >= 100 && pixel < 180) return kTabNCVugs;
  if (pixel < 130 && grad >= 60 && !betw1) return kTabPore;

  static const double centroids[4][4] = {
      {0.5, 65.0, 94.0, 0.0},   // Pore
      {1.0, 65.0, 64.0, 1.0},   // throat
      {0.75, 200.0, 64.0, 0.25},  // Solid
      {0.0, 140.0, 64.0, 0.5},  // NC_Vugs
  };
  int best = 0;
  double best_d = 0;
  for (int c = 0; c < 4; ++c) {
    double d = 0;
    const double f[4] = {phi, pixel, grad, betw};
    for (int i = 0; i < 4; ++i) {
      double diff = f[i] - centroids[c][i];
      d += diff * diff;
    }
    if (c == 0 || d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best + 1;
}

inline int label_function(const double* f) {
  return label_function(f[0], f[1], f[2], f[3]);
}

struct SynthTabularConfig {
  std::int64_t n_rows = 10000;
  std::array<double, 4> class_mix = {0.25, 0.25, 0.25, 0.25};  // Pore, throat, Solid, NC_Vugs
  double noise_std = 4.0;  // gray levels, on the continuous columns
  std::uint64_t seed = 42;

  void validate() const {
    if (n_rows < 1) throw ConfigError("synth tabular: n_rows must be >= 1");
    double sum = 0;
    for (double p : class_mix) {
      if (p < 0) throw ConfigError("synth tabular: proportions must be >= 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("synth tabular: proportions must sum to 1");
    if (noise_std < 0) throw ConfigError("synth tabular: noise_std must be >= 0");
  }
};

namespace detail {

// Each class samples uniformly from its rule region, shrunk by kMargin on
// the PixelColor/NeighbColorGrad boundaries that separate classes, so small
// noise rarely flips the rule label.
inline constexpr double kTabMargin = 12.0;

inline void draw_tabular_features(int cls, std::mt19937_64& rng, double* f) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double m = kTabMargin;
  auto unif = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
  auto coin = [&] { return U(rng) < 0.5 ? 0.0 : 1.0; };
  switch (cls) {
    case kTabPore: {
      f[0] = coin();
      // Keep clear of the NC_Vugs band (PixelColor >= 100) when phi = 0.
      f[1] = f[0] < 0.5 ? unif(m, 100 - m) : unif(m, 130 - m);
      f[2] = unif(60 + m, 127);
      f[3] = 0;
      break;
    }
    case kTabThroat: {
      f[0] = 1;
      f[1] = unif(m, 130 - m);
      f[2] = unif(0, 127);
      f[3] = 1;
      break;
    }
    case kTabSolid: {
      if (U(rng) < 0.5) {  // bright disjunct
        f[0] = coin();
        f[1] = unif(180 + m, 255);
        f[2] = unif(0, 127);
        f[3] = coin();
      } else {  // mid-gray high-gradient disjunct
        f[0] = 1;
        f[1] = unif(130 + m, 255);
        f[2] = unif(40 + m, 127);
        f[3] = 0;
      }
      break;
    }
    case kTabNCVugs: {
      f[0] = 0;
      f[1] = unif(100 + m, 180 - m);
      f[2] = unif(0, 127);
      f[3] = coin();
      break;
    }
    default:
      throw AlgoError("draw_tabular_features: bad class");
  }
}

inline double clip(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace detail

// Emits the four Table-1-style feature columns plus a label drawn first from
// the class mix; features come from that class's rule region and the
// continuous columns then receive clipped Gaussian noise. label_function
// re-checks rows exactly when noise_std = 0.
inline Dataset generate_table1_dataset(const SynthTabularConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);

  Dataset ds;
  ds.feature_names = tabular_feature_names();
  ds.n_features = 4;
  ds.n_rows = cfg.n_rows;
  ds.values.resize(static_cast<std::size_t>(cfg.n_rows) * 4);
  ds.labels.resize(static_cast<std::size_t>(cfg.n_rows));

  double cum[4];
  double acc = 0;
  for (int c = 0; c < 4; ++c) {
    acc += cfg.class_mix[static_cast<std::size_t>(c)];
    cum[c] = acc;
  }
  for (std::int64_t r = 0; r < cfg.n_rows; ++r) {
    double u = U(rng);
    int cls = 4;
    for (int c = 0; c < 4; ++c)
      if (u < cum[c]) {
        cls = c + 1;
        break;
      }
    double* f = ds.values.data() + static_cast<std::size_t>(r) * 4;
    detail::draw_tabular_features(cls, rng, f);
    if (cfg.noise_std > 0) {
      f[1] = detail::clip(f[1] + cfg.noise_std * N(rng), 0, 255);
      f[2] = detail::clip(f[2] + cfg.noise_std * N(rng), 0, 127);
    }
    ds.labels[static_cast<std::size_t>(r)] = cls;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// 3D rock-like phantom with dense ground-truth labels.

inline constexpr int kRockBioclast = 1;
inline constexpr int kRockCement = 2;
inline constexpr int kRockVugs = 3;
inline constexpr int kRockPyrite = 4;
inline constexpr int kRockPore = 5;

inline ClassCatalog rock_catalog() {
  return ClassCatalog(
      {{kRockBioclast, "Isolated Bioclast", {0, 200, 0}},
       {kRockCement, "Carbonate Cement", {230, 200, 0}},
       {kRockVugs, "Intragranular Connected Vugs & Mini-Fractures", {140, 0, 200}},
       {kRockPyrite, "Pyrite", {0, 80, 255}},
       {kRockPore, "Intergranular Pore", {40, 40, 40}}});
}

struct ClassIntensity {
  double mean = 128;
  double std_dev = 8;
};

struct PhantomConfig {
  int nx = 64, ny = 64, nz = 64;
  double porosity = 0.45;          // target Intergranular Pore fraction
  double grain_radius_min = 5.0;   // voxels
  double grain_radius_max = 10.0;
  double vug_density = 0.6;        // expected vugs per grain
  double throat_density = 0.4;     // probability a vug grows a mini-fracture
  double bioclast_fraction = 0.5;  // probability a grain has a bioclast core
  double pyrite_fraction = 0.002;  // fraction of all voxels turned pyrite
  // Intensity map per class, indexed by class id - 1. Vugs render at pore
  // brightness (they are geometry, not a brighter phase).
  std::array<ClassIntensity, 5> intensity = {{{120, 10},  // Isolated Bioclast
                                              {150, 10},  // Carbonate Cement
                                              {30, 8},    // Vugs & fractures
                                              {245, 5},   // Pyrite
                                              {30, 8}}};  // Intergranular Pore
  std::uint64_t seed = 1;

  void validate() const {
    if (nx < 8 || ny < 8 || nz < 8)
      throw ConfigError("phantom: dims must be >= 8 (>= 32 recommended)");
    if (porosity < 0 || porosity > 1)
      throw ConfigError("phantom: porosity must be in [0,1]");
    if (!(grain_radius_min > 0) || grain_radius_max < grain_radius_min)
      throw ConfigError("phantom: bad grain radius range");
    if (vug_density < 0 || throat_density < 0 || throat_density > 1 ||
        bioclast_fraction < 0 || bioclast_fraction > 1 ||
        pyrite_fraction < 0 || pyrite_fraction > 1)
      throw ConfigError("phantom: densities/fractions out of range");
    for (const auto& ci : intensity)
      if (ci.mean < 0 || ci.mean > 255 || ci.std_dev < 0)
        throw ConfigError("phantom: intensity means must be in [0,255]");
  }
};

struct Phantom {
  GrayVolume gray;
  LabelVolume labels;
  ClassCatalog catalog;
};

namespace detail {

struct Sphere {
  double x, y, z, r;
};

// Grain centers sit on a jittered FCC lattice so high solid fractions stay
// reachable with non-overlapping spheres (random sequential placement jams
// near 38% solid, far below typical rock).
inline std::vector<Sphere> place_grains(const PhantomConfig& cfg,
                                        std::mt19937_64& rng,
                                        double radius_scale) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double rmax = cfg.grain_radius_max * radius_scale;
  const double rmin = cfg.grain_radius_min * radius_scale;
  const double a = 2.0 * std::sqrt(2.0) * cfg.grain_radius_max;  // touching FCC
  const double jitter = 0.04 * a;

  std::vector<Sphere> grains;
  // FCC = cubic lattice + three face-centered offsets.
  const double offsets[4][3] = {
      {0, 0, 0}, {0.5, 0.5, 0}, {0.5, 0, 0.5}, {0, 0.5, 0.5}};
  for (int k = -1; k * a <= cfg.nz + a; ++k)
    for (int j = -1; j * a <= cfg.ny + a; ++j)
      for (int i = -1; i * a <= cfg.nx + a; ++i)
        for (const auto& off : offsets) {
          Sphere s;
          s.x = (i + off[0]) * a + jitter * (2 * U(rng) - 1);
          s.y = (j + off[1]) * a + jitter * (2 * U(rng) - 1);
          s.z = (k + off[2]) * a + jitter * (2 * U(rng) - 1);
          s.r = rmin + (rmax - rmin) * U(rng);
          if (s.x < -rmax || s.x > cfg.nx + rmax || s.y < -rmax ||
              s.y > cfg.ny + rmax || s.z < -rmax || s.z > cfg.nz + rmax)
            continue;
          grains.push_back(s);
        }

  // Enforce pairwise non-overlap by shrinking later grains against earlier
  // ones (neighbor search over the short lattice range).
  const double reach = a * 1.3;
  for (std::size_t i = 0; i < grains.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dx = grains[i].x - grains[j].x;
      double dy = grains[i].y - grains[j].y;
      double dz = grains[i].z - grains[j].z;
      if (std::abs(dx) > reach || std::abs(dy) > reach || std::abs(dz) > reach)
        continue;
      double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      double allowed = d - grains[j].r - 0.05;
      if (allowed < grains[i].r) grains[i].r = allowed;
    }
  }
  std::erase_if(grains, [&](const Sphere& s) { return s.r < rmin * 0.5; });
  return grains;
}

inline void rasterize_sphere(LabelVolume& lv, const Sphere& s,
                             std::int32_t label) {
  int x0 = std::max(0, static_cast<int>(std::floor(s.x - s.r)));
  int x1 = std::min(lv.nx - 1, static_cast<int>(std::ceil(s.x + s.r)));
  int y0 = std::max(0, static_cast<int>(std::floor(s.y - s.r)));
  int y1 = std::min(lv.ny - 1, static_cast<int>(std::ceil(s.y + s.r)));
  int z0 = std::max(0, static_cast<int>(std::floor(s.z - s.r)));
  int z1 = std::min(lv.nz - 1, static_cast<int>(std::ceil(s.z + s.r)));
  double rr = s.r * s.r;
  for (int z = z0; z <= z1; ++z)
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double dx = x - s.x, dy = y - s.y, dz = z - s.z;
        if (dx * dx + dy * dy + dz * dz <= rr) lv.at(x, y, z) = label;
      }
}

// Rasterize a sphere but only overwrite voxels currently labeled `inside`.
inline void rasterize_sphere_within(LabelVolume& lv, const Sphere& s,
                                    std::int32_t label, std::int32_t inside_a,
                                    std::int32_t inside_b) {
  int x0 = std::max(0, static_cast<int>(std::floor(s.x - s.r)));
  int x1 = std::min(lv.nx - 1, static_cast<int>(std::ceil(s.x + s.r)));
  int y0 = std::max(0, static_cast<int>(std::floor(s.y - s.r)));
  int y1 = std::min(lv.ny - 1, static_cast<int>(std::ceil(s.y + s.r)));
  int z0 = std::max(0, static_cast<int>(std::floor(s.z - s.r)));
  int z1 = std::min(lv.nz - 1, static_cast<int>(std::ceil(s.z + s.r)));
  double rr = s.r * s.r;
  for (int z = z0; z <= z1; ++z)
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double dx = x - s.x, dy = y - s.y, dz = z - s.z;
        auto& l = lv.at(x, y, z);
        if ((l == inside_a || l == inside_b) &&
            dx * dx + dy * dy + dz * dz <= rr)
          l = label;
      }
}

inline double pore_fraction(const LabelVolume& lv) {
  std::int64_t pore = 0;
  for (auto l : lv.labels)
    if (l == kRockPore) ++pore;
  return static_cast<double>(pore) / static_cast<double>(lv.count());
}

}  // namespace detail

// Builds the labeled phantom: non-overlapping spherical grains of carbonate
// cement (optionally with bioclast cores), carved vugs plus cylindrical
// mini-fractures, pyrite speckles, and intergranular pore elsewhere. The
// gray volume renders each class's configured intensity with clipped
// Gaussian noise. Sequential by design; deterministic per seed.
inline Phantom generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);

  Phantom out;
  out.catalog = rock_catalog();
  out.labels = LabelVolume(cfg.nx, cfg.ny, cfg.nz, kRockPore);

  // Binary-search a global radius scale to hit the porosity target.
  // Scale 1.0 is maximum packing; if even that is too porous, give up.
  const double tol = 0.015;
  std::vector<detail::Sphere> grains;
  {
    std::mt19937_64 probe_rng(cfg.seed);
    grains = detail::place_grains(cfg, probe_rng, 1.0);
    LabelVolume probe(cfg.nx, cfg.ny, cfg.nz, kRockPore);
    for (const auto& g : grains) detail::rasterize_sphere(probe, g, kRockCement);
    double f = detail::pore_fraction(probe);
    if (f > cfg.porosity + tol)
      throw DataError("phantom: porosity target " + std::to_string(cfg.porosity) +
                      " unreachable; densest packing achieves " +
                      std::to_string(f));
    if (f < cfg.porosity - tol) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 12; ++it) {
        double mid = 0.5 * (lo + hi);
        std::mt19937_64 r2(cfg.seed);
        auto trial = detail::place_grains(cfg, r2, mid);
        LabelVolume lv2(cfg.nx, cfg.ny, cfg.nz, kRockPore);
        for (const auto& g : trial) detail::rasterize_sphere(lv2, g, kRockCement);
        double fr = detail::pore_fraction(lv2);
        if (std::abs(fr - cfg.porosity) <= tol) {
          grains = std::move(trial);
          f = fr;
          break;
        }
        if (fr > cfg.porosity)
          lo = mid;  // too porous: grow grains
        else
          hi = mid;
        grains = std::move(trial);
        f = fr;
      }
      if (std::abs(f - cfg.porosity) > 0.02)
        throw DataError("phantom: porosity target " + std::to_string(cfg.porosity) +
                        " not met; achieved " + std::to_string(f));
    }
    out.labels = LabelVolume(cfg.nx, cfg.ny, cfg.nz, kRockPore);
    for (const auto& g : grains)
      detail::rasterize_sphere(out.labels, g, kRockCement);
  }

  // Bioclast cores, vugs, and mini-fractures, all confined to their grain.
  for (const auto& g : grains) {
    if (cfg.bioclast_fraction > 0 && U(rng) < cfg.bioclast_fraction) {
      detail::Sphere core{g.x, g.y, g.z, g.r * (0.45 + 0.15 * U(rng))};
      detail::rasterize_sphere_within(out.labels, core, kRockBioclast,
                                      kRockCement, kRockCement);
    }
    int n_vugs = static_cast<int>(std::floor(cfg.vug_density));
    if (U(rng) < cfg.vug_density - n_vugs) ++n_vugs;
    for (int v = 0; v < n_vugs; ++v) {
      // Vug center stays well inside the grain so a cement/bioclast shell
      // always surrounds it.
      double rv = g.r * (0.18 + 0.10 * U(rng));
      double max_off = g.r - rv - 2.0;
      if (max_off <= 0) continue;
      double theta = 2 * 3.14159265358979323846 * U(rng);
      double cphi = 2 * U(rng) - 1;
      double sphi = std::sqrt(std::max(0.0, 1 - cphi * cphi));
      double off = max_off * std::cbrt(U(rng));
      detail::Sphere vug{g.x + off * sphi * std::cos(theta),
                         g.y + off * sphi * std::sin(theta),
                         g.z + off * cphi, rv};
      detail::rasterize_sphere_within(out.labels, vug, kRockVugs, kRockCement,
                                      kRockBioclast);
      if (U(rng) < cfg.throat_density) {
        // Mini-fracture: a thin run of spheres from the vug outward,
        // stopping short of the grain surface.
        double dx = 2 * U(rng) - 1, dy = 2 * U(rng) - 1, dz = 2 * U(rng) - 1;
        double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (norm < 1e-9) continue;
        dx /= norm;
        dy /= norm;
        dz /= norm;
        double len = g.r * 0.5;
        for (double t = 0; t <= len; t += 0.5) {
          detail::Sphere bead{vug.x + t * dx, vug.y + t * dy, vug.z + t * dz,
                              1.2};
          double gx = bead.x - g.x, gy = bead.y - g.y, gz = bead.z - g.z;
          if (std::sqrt(gx * gx + gy * gy + gz * gz) > g.r - 2.5) break;
          detail::rasterize_sphere_within(out.labels, bead, kRockVugs,
                                          kRockCement, kRockBioclast);
        }
      }
    }
  }

  // Pyrite speckles over solid phases.
  if (cfg.pyrite_fraction > 0) {
    std::int64_t target =
        static_cast<std::int64_t>(cfg.pyrite_fraction * out.labels.count());
    std::int64_t placed = 0;
    std::int64_t attempts = 0;
    const std::int64_t max_attempts = 50 * std::max<std::int64_t>(target, 1);
    std::uniform_int_distribution<int> PX(0, cfg.nx - 1), PY(0, cfg.ny - 1),
        PZ(0, cfg.nz - 1);
    while (placed < target && attempts < max_attempts) {
      ++attempts;
      int x = PX(rng), y = PY(rng), z = PZ(rng);
      auto l = out.labels.at(x, y, z);
      if (l != kRockCement && l != kRockBioclast) continue;
      detail::Sphere sp{static_cast<double>(x), static_cast<double>(y),
                        static_cast<double>(z), 1.0 + 0.6 * U(rng)};
      // Count before/after to track the placed budget.
      std::int64_t before = 0;
      for (auto ll : out.labels.labels)
        if (ll == kRockPyrite) ++before;
      detail::rasterize_sphere_within(out.labels, sp, kRockPyrite, kRockCement,
                                      kRockBioclast);
      std::int64_t after = 0;
      for (auto ll : out.labels.labels)
        if (ll == kRockPyrite) ++after;
      placed += after - before;
    }
  }

  // Render intensities.
  out.gray = GrayVolume(cfg.nx, cfg.ny, cfg.nz);
  for (std::int64_t i = 0; i < out.labels.count(); ++i) {
    const auto& ci =
        cfg.intensity[static_cast<std::size_t>(out.labels.labels[static_cast<std::size_t>(i)] - 1)];
    double v = ci.mean + ci.std_dev * N(rng);
    out.gray.voxels[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(std::lround(detail::clip(v, 0, 255)));
  }
  return out;
}

}  // namespace voxseg
