#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "voxseg/errors.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

// ---------------------------------------------------------------------------
// Feature descriptors. Sigmas are in voxels.

struct Identity {};
struct Gaussian {
  double sigma = 1.0;
};
struct DoG {
  double sigma1 = 1.0, sigma2 = 2.0;
};
struct GradientMagnitude {
  double sigma = 0.0;
};
struct LocalMean {
  int radius = 2;
};
struct LocalVariance {
  int radius = 2;
};

using FeatureDescriptor = std::variant<Identity, Gaussian, DoG,
                                       GradientMagnitude, LocalMean,
                                       LocalVariance>;

namespace detail {

inline std::string trim_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace detail

inline std::string descriptor_name(const FeatureDescriptor& d) {
  struct V {
    std::string operator()(const Identity&) const { return "identity"; }
    std::string operator()(const Gaussian& g) const {
      return "gaussian_" + detail::trim_num(g.sigma);
    }
    std::string operator()(const DoG& g) const {
      return "dog_" + detail::trim_num(g.sigma1) + "_" + detail::trim_num(g.sigma2);
    }
    std::string operator()(const GradientMagnitude& g) const {
      return "gradmag_" + detail::trim_num(g.sigma);
    }
    std::string operator()(const LocalMean& g) const {
      return "localmean_" + std::to_string(g.radius);
    }
    std::string operator()(const LocalVariance& g) const {
      return "localvar_" + std::to_string(g.radius);
    }
  };
  return std::visit(V{}, d);
}

// Ordered filter bank. Text form: one descriptor per line,
//   identity | gaussian S | dog S1 S2 | gradmag S | localmean R | localvar R
// '#' starts a comment.
struct FeatureSpec {
  std::vector<FeatureDescriptor> descriptors;

  void validate() const {
    if (descriptors.empty())
      throw ConfigError("FeatureSpec: at least one descriptor required");
    for (const auto& d : descriptors) {
      if (const auto* g = std::get_if<Gaussian>(&d)) {
        if (!(g->sigma > 0) || !std::isfinite(g->sigma))
          throw ConfigError("gaussian: sigma must be finite and > 0");
      } else if (const auto* dg = std::get_if<DoG>(&d)) {
        if (!(dg->sigma1 > 0) || !(dg->sigma2 > 0) ||
            !std::isfinite(dg->sigma1) || !std::isfinite(dg->sigma2))
          throw ConfigError("dog: sigmas must be finite and > 0");
        if (!(dg->sigma1 < dg->sigma2))
          throw ConfigError("dog: requires sigma1 < sigma2");
      } else if (const auto* gm = std::get_if<GradientMagnitude>(&d)) {
        if (gm->sigma < 0 || !std::isfinite(gm->sigma))
          throw ConfigError("gradmag: sigma must be finite and >= 0");
      } else if (const auto* lm = std::get_if<LocalMean>(&d)) {
        if (lm->radius < 1) throw ConfigError("localmean: radius must be >= 1");
      } else if (const auto* lv = std::get_if<LocalVariance>(&d)) {
        if (lv->radius < 1) throw ConfigError("localvar: radius must be >= 1");
      }
    }
  }

  int size() const { return static_cast<int>(descriptors.size()); }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> names;
    names.reserve(descriptors.size());
    for (const auto& d : descriptors) names.push_back(descriptor_name(d));
    return names;
  }

  std::string to_text() const {
    std::ostringstream os;
    for (const auto& d : descriptors) {
      struct V {
        std::ostringstream& os;
        void operator()(const Identity&) { os << "identity"; }
        void operator()(const Gaussian& g) { os << "gaussian " << g.sigma; }
        void operator()(const DoG& g) {
          os << "dog " << g.sigma1 << " " << g.sigma2;
        }
        void operator()(const GradientMagnitude& g) {
          os << "gradmag " << g.sigma;
        }
        void operator()(const LocalMean& g) { os << "localmean " << g.radius; }
        void operator()(const LocalVariance& g) { os << "localvar " << g.radius; }
      };
      std::visit(V{os}, d);
      os << "\n";
    }
    return os.str();
  }

  static FeatureSpec from_text(const std::string& text) {
    FeatureSpec spec;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::istringstream ls(line);
      std::string kw;
      if (!(ls >> kw)) continue;
      auto want = [&](int n, double* a, double* b) {
        if (n >= 1 && !(ls >> *a))
          throw ConfigError("feature spec line " + std::to_string(line_no) +
                            ": '" + kw + "' needs a numeric parameter");
        if (n >= 2 && !(ls >> *b))
          throw ConfigError("feature spec line " + std::to_string(line_no) +
                            ": '" + kw + "' needs two numeric parameters");
        std::string extra;
        if (ls >> extra)
          throw ConfigError("feature spec line " + std::to_string(line_no) +
                            ": unexpected trailing token '" + extra + "'");
      };
      double a = 0, b = 0;
      if (kw == "identity") {
        want(0, &a, &b);
        spec.descriptors.push_back(Identity{});
      } else if (kw == "gaussian") {
        want(1, &a, &b);
        spec.descriptors.push_back(Gaussian{a});
      } else if (kw == "dog") {
        want(2, &a, &b);
        spec.descriptors.push_back(DoG{a, b});
      } else if (kw == "gradmag") {
        want(1, &a, &b);
        spec.descriptors.push_back(GradientMagnitude{a});
      } else if (kw == "localmean") {
        want(1, &a, &b);
        spec.descriptors.push_back(LocalMean{static_cast<int>(a)});
      } else if (kw == "localvar") {
        want(1, &a, &b);
        spec.descriptors.push_back(LocalVariance{static_cast<int>(a)});
      } else {
        throw ConfigError("feature spec line " + std::to_string(line_no) +
                          ": unknown descriptor '" + kw + "'");
      }
    }
    spec.validate();
    return spec;
  }

  static FeatureSpec from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open feature spec: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
  }

  // The 12-feature default bank.
  static FeatureSpec default_bank() {
    FeatureSpec s;
    s.descriptors = {Identity{},           Gaussian{1},  Gaussian{2},
                     Gaussian{4},          DoG{1, 2},    DoG{2, 4},
                     DoG{1, 4},            GradientMagnitude{0},
                     GradientMagnitude{1}, GradientMagnitude{2},
                     LocalMean{2},         LocalVariance{2}};
    return s;
  }
};

// ---------------------------------------------------------------------------
// Filters. All math in double; borders clamp to the edge voxel except the
// local statistics, whose window is clipped (truncated) at borders.

namespace detail {

// Sampled Gaussian, half-width ceil(3*sigma), renormalized to sum 1.
inline std::vector<double> gaussian_kernel(double sigma) {
  int h = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * h + 1));
  double sum = 0;
  for (int i = -h; i <= h; ++i) {
    double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
    k[static_cast<std::size_t>(i + h)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

inline int clampi(int v, int lo, int hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

// One separable pass along `axis` (0=x, 1=y, 2=z) with edge clamping.
// `z0` is the slab's global z offset; clamping in z uses the full-volume
// extent `global_nz` so slab-batched results match whole-volume results.
inline void blur_axis(const RealVolume& src, RealVolume& dst,
                      const std::vector<double>& kernel, int axis,
                      int z0 = 0, int global_nz = -1) {
  const int h = (static_cast<int>(kernel.size()) - 1) / 2;
  const int nx = src.nx, ny = src.ny, nz = src.nz;
  if (global_nz < 0) global_nz = nz;
  dst.nx = nx;
  dst.ny = ny;
  dst.nz = nz;
  dst.values.resize(src.values.size());
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      const std::int64_t base = src.index(0, y, z);
      for (int x = 0; x < nx; ++x) {
        double acc = 0;
        if (axis == 0) {
          for (int i = -h; i <= h; ++i)
            acc += kernel[static_cast<std::size_t>(i + h)] *
                   src.values[base + clampi(x + i, 0, nx - 1)];
        } else if (axis == 1) {
          for (int i = -h; i <= h; ++i)
            acc += kernel[static_cast<std::size_t>(i + h)] *
                   src.values[src.index(x, clampi(y + i, 0, ny - 1), z)];
        } else {
          for (int i = -h; i <= h; ++i) {
            int gz = clampi(z0 + z + i, 0, global_nz - 1);
            // Second clamp keeps halo-slice reads in the slab; halo outputs
            // are discarded by the caller, target slices never clamp here.
            int sz = clampi(gz - z0, 0, nz - 1);
            acc += kernel[static_cast<std::size_t>(i + h)] *
                   src.values[src.index(x, y, sz)];
          }
        }
        dst.values[dst.index(x, y, z)] = acc;
      }
    }
  }
}

}  // namespace detail

// Separable Gaussian blur: x, then y, then z. sigma = 0 copies the input.
// `two_d` restricts filtering to the xy plane (per-slice mode).
inline RealVolume gaussian_blur_real(const RealVolume& v, double sigma,
                                     bool two_d = false, int z0 = 0,
                                     int global_nz = -1) {
  if (sigma < 0 || !std::isfinite(sigma))
    throw ConfigError("gaussian_blur: sigma must be finite and >= 0");
  if (sigma == 0) return v;
  auto kernel = detail::gaussian_kernel(sigma);
  RealVolume a, b;
  detail::blur_axis(v, a, kernel, 0);
  detail::blur_axis(a, b, kernel, 1);
  if (two_d) return b;
  detail::blur_axis(b, a, kernel, 2, z0, global_nz);
  return a;
}

inline RealVolume gaussian_blur(const GrayVolume& v, double sigma) {
  return gaussian_blur_real(RealVolume(v), sigma);
}

inline RealVolume difference_of_gaussians_real(const RealVolume& v,
                                               double sigma1, double sigma2,
                                               bool two_d = false, int z0 = 0,
                                               int global_nz = -1) {
  if (!(sigma1 > 0) || !(sigma1 < sigma2))
    throw ConfigError("difference_of_gaussians: requires 0 < sigma1 < sigma2");
  RealVolume a = gaussian_blur_real(v, sigma1, two_d, z0, global_nz);
  RealVolume b = gaussian_blur_real(v, sigma2, two_d, z0, global_nz);
  for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] -= b.values[i];
  return a;
}

inline RealVolume difference_of_gaussians(const GrayVolume& v, double sigma1,
                                          double sigma2) {
  return difference_of_gaussians_real(RealVolume(v), sigma1, sigma2);
}

// Blur at sigma (0 = none), central differences per axis (one-sided at
// borders), Euclidean norm of the partials.
inline RealVolume gradient_magnitude_real(const RealVolume& v, double sigma,
                                          bool two_d = false, int z0 = 0,
                                          int global_nz = -1) {
  if (sigma < 0 || !std::isfinite(sigma))
    throw ConfigError("gradient_magnitude: sigma must be finite and >= 0");
  RealVolume s = gaussian_blur_real(v, sigma, two_d, z0, global_nz);
  if (global_nz < 0) global_nz = v.nz;
  RealVolume out(s.nx, s.ny, s.nz);
  const int nx = s.nx, ny = s.ny, nz = s.nz;
  auto diff1d = [](double lo, double hi, int span) {
    return (hi - lo) / span;
  };
  for (int z = 0; z < nz; ++z) {
    // One-sided only at true volume borders; slab-interior edges use halo.
    // Clamps keep halo-slice reads in the slab (their outputs are unused).
    const int gz = z0 + z;
    const int zlo = detail::clampi(gz > 0 ? z - 1 : z, 0, nz - 1);
    const int zhi = detail::clampi(gz < global_nz - 1 ? z + 1 : z, 0, nz - 1);
    const int zspan = (zhi - zlo == 0) ? 1 : zhi - zlo;
    for (int y = 0; y < ny; ++y) {
      const int ylo = y > 0 ? y - 1 : y;
      const int yhi = y < ny - 1 ? y + 1 : y;
      const int yspan = (yhi - ylo == 0) ? 1 : yhi - ylo;
      for (int x = 0; x < nx; ++x) {
        const int xlo = x > 0 ? x - 1 : x;
        const int xhi = x < nx - 1 ? x + 1 : x;
        const int xspan = (xhi - xlo == 0) ? 1 : xhi - xlo;
        double gx = diff1d(s.at(xlo, y, z), s.at(xhi, y, z), xspan);
        double gy = diff1d(s.at(x, ylo, z), s.at(x, yhi, z), yspan);
        double gzv = two_d ? 0.0 : diff1d(s.at(x, y, zlo), s.at(x, y, zhi), zspan);
        out.at(x, y, z) = std::sqrt(gx * gx + gy * gy + gzv * gzv);
      }
    }
  }
  return out;
}

inline RealVolume gradient_magnitude(const GrayVolume& v, double sigma) {
  return gradient_magnitude_real(RealVolume(v), sigma);
}

// Mean and population variance over the cubic window of side 2*radius+1,
// clipped at borders (the window excludes out-of-volume voxels).
inline std::pair<RealVolume, RealVolume> local_stats_real(
    const RealVolume& v, int radius, bool two_d = false, int z0 = 0,
    int global_nz = -1) {
  if (radius < 1) throw ConfigError("local_stats: radius must be >= 1");
  if (global_nz < 0) global_nz = v.nz;
  const int nx = v.nx, ny = v.ny, nz = v.nz;

  // Separable box sums with clipped (zero-contribution) borders; counts
  // multiply per axis because the window is an axis-aligned box.
  RealVolume sum = v, sq(nx, ny, nz);
  for (std::size_t i = 0; i < sq.values.size(); ++i)
    sq.values[i] = v.values[i] * v.values[i];

  auto box_axis = [&](RealVolume& vol, int axis) {
    RealVolume tmp(nx, ny, nz);
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
          double acc = 0;
          if (axis == 0) {
            int lo = std::max(0, x - radius), hi = std::min(nx - 1, x + radius);
            for (int i = lo; i <= hi; ++i) acc += vol.at(i, y, z);
          } else if (axis == 1) {
            int lo = std::max(0, y - radius), hi = std::min(ny - 1, y + radius);
            for (int i = lo; i <= hi; ++i) acc += vol.at(x, i, z);
          } else {
            // Clip against the full volume; halo slices supply interior data.
            // The slab-range clamp only fires for halo outputs (discarded).
            int glo = std::max(0, z0 + z - radius);
            int ghi = std::min(global_nz - 1, z0 + z + radius);
            for (int g = glo; g <= ghi; ++g)
              acc += vol.at(x, y, detail::clampi(g - z0, 0, nz - 1));
          }
          tmp.at(x, y, z) = acc;
        }
    vol = std::move(tmp);
  };
  box_axis(sum, 0);
  box_axis(sum, 1);
  box_axis(sq, 0);
  box_axis(sq, 1);
  if (!two_d) {
    box_axis(sum, 2);
    box_axis(sq, 2);
  }

  RealVolume mean(nx, ny, nz), var(nx, ny, nz);
  for (int z = 0; z < nz; ++z) {
    int cz = 1;
    if (!two_d) {
      int glo = std::max(0, z0 + z - radius);
      int ghi = std::min(global_nz - 1, z0 + z + radius);
      cz = ghi - glo + 1;
    }
    for (int y = 0; y < ny; ++y) {
      int cy = std::min(ny - 1, y + radius) - std::max(0, y - radius) + 1;
      for (int x = 0; x < nx; ++x) {
        int cx = std::min(nx - 1, x + radius) - std::max(0, x - radius) + 1;
        double count = static_cast<double>(cx) * cy * cz;
        double m = sum.at(x, y, z) / count;
        double vv = sq.at(x, y, z) / count - m * m;
        mean.at(x, y, z) = m;
        var.at(x, y, z) = vv > 0 ? vv : 0.0;
      }
    }
  }
  return {std::move(mean), std::move(var)};
}

inline std::pair<RealVolume, RealVolume> local_stats(const GrayVolume& v,
                                                     int radius) {
  return local_stats_real(RealVolume(v), radius);
}

// ---------------------------------------------------------------------------
// Feature stack construction.

// Halo (in z slices) a descriptor needs for slab-batched evaluation.
inline int descriptor_halo(const FeatureDescriptor& d) {
  struct V {
    int operator()(const Identity&) const { return 0; }
    int operator()(const Gaussian& g) const {
      return static_cast<int>(std::ceil(3.0 * g.sigma));
    }
    int operator()(const DoG& g) const {
      return static_cast<int>(std::ceil(3.0 * g.sigma2));
    }
    int operator()(const GradientMagnitude& g) const {
      return static_cast<int>(std::ceil(3.0 * g.sigma)) + 1;
    }
    int operator()(const LocalMean& g) const { return g.radius; }
    int operator()(const LocalVariance& g) const { return g.radius; }
  };
  return std::visit(V{}, d);
}

inline int spec_halo(const FeatureSpec& spec) {
  int h = 0;
  for (const auto& d : spec.descriptors) h = std::max(h, descriptor_halo(d));
  return h;
}

// Evaluates one descriptor over a slab. The slab spans global slices
// [z0, z0+src.nz); only results for [out_z0, out_z0+out_nz) are meaningful
// to the caller (the rest is halo). Caching of shared blurs is the caller's
// concern; this stays a pure function.
inline RealVolume eval_descriptor(const FeatureDescriptor& d,
                                  const RealVolume& src, bool two_d = false,
                                  int z0 = 0, int global_nz = -1) {
  struct V {
    const RealVolume& src;
    bool two_d;
    int z0, global_nz;
    RealVolume operator()(const Identity&) const { return src; }
    RealVolume operator()(const Gaussian& g) const {
      return gaussian_blur_real(src, g.sigma, two_d, z0, global_nz);
    }
    RealVolume operator()(const DoG& g) const {
      return difference_of_gaussians_real(src, g.sigma1, g.sigma2, two_d, z0,
                                          global_nz);
    }
    RealVolume operator()(const GradientMagnitude& g) const {
      return gradient_magnitude_real(src, g.sigma, two_d, z0, global_nz);
    }
    RealVolume operator()(const LocalMean& g) const {
      return local_stats_real(src, g.radius, two_d, z0, global_nz).first;
    }
    RealVolume operator()(const LocalVariance& g) const {
      return local_stats_real(src, g.radius, two_d, z0, global_nz).second;
    }
  };
  return std::visit(V{src, two_d, z0, global_nz}, d);
}

// Materializes the full per-voxel feature matrix: one row per voxel in
// linear-index order, column j from descriptor j.
inline Dataset build_feature_stack(const GrayVolume& v, const FeatureSpec& spec,
                                   bool two_d = false) {
  spec.validate();
  RealVolume src(v);
  Dataset fm;
  fm.n_rows = v.count();
  fm.n_features = spec.size();
  fm.feature_names = spec.feature_names();
  fm.values.resize(static_cast<std::size_t>(fm.n_rows) * fm.n_features);
  for (int j = 0; j < spec.size(); ++j) {
    RealVolume col = eval_descriptor(spec.descriptors[static_cast<std::size_t>(j)],
                                     src, two_d);
    for (std::int64_t i = 0; i < fm.n_rows; ++i)
      fm.values[static_cast<std::size_t>(i) * fm.n_features + j] =
          col.values[static_cast<std::size_t>(i)];
  }
  return fm;
}

// Keeps exactly the rows with nonzero labels; original voxel linear indices
// are retained in `provenance`.
inline Dataset extract_labeled_rows(const Dataset& fm, const LabelVolume& lv) {
  if (fm.n_rows != lv.count())
    throw DataError("extract_labeled_rows: feature rows " +
                    std::to_string(fm.n_rows) + " != voxel count " +
                    std::to_string(lv.count()));
  Dataset out;
  out.feature_names = fm.feature_names;
  out.n_features = fm.n_features;
  for (std::int64_t i = 0; i < fm.n_rows; ++i) {
    std::int32_t l = lv.labels[static_cast<std::size_t>(i)];
    if (l == 0) continue;
    const double* r = fm.row(i);
    out.values.insert(out.values.end(), r, r + fm.n_features);
    out.labels.push_back(l);
    out.provenance.push_back(i);
    ++out.n_rows;
  }
  return out;
}

}  // namespace voxseg
