#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxseg/errors.hpp"
#include "voxseg/volume.hpp"

namespace voxseg {

namespace detail {

inline std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  in.seekg(0, std::ios::end);
  auto n = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(n));
  if (n > 0) in.read(reinterpret_cast<char*>(buf.data()), n);
  if (!in) throw DataError("short read: " + path);
  return buf;
}

inline void write_all_bytes(const std::string& path, const void* data,
                            std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw DataError("write failed: " + path);
}

// Shortest exact decimal form; strtod round-trips it bit-for-bit.
inline std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// RAW volume: headerless u8 payload + "<path>.json" sidecar.

inline void save_raw_volume(const GrayVolume& v, const std::string& path) {
  detail::write_all_bytes(path, v.voxels.data(), v.voxels.size());
  nlohmann::json meta = {{"nx", v.nx}, {"ny", v.ny}, {"nz", v.nz},
                         {"dtype", "u8"}, {"order", "x-fastest"}};
  std::ofstream out(path + ".json", std::ios::trunc);
  if (!out) throw DataError("cannot write sidecar: " + path + ".json");
  out << meta.dump(2) << "\n";
  if (!out) throw DataError("write failed: " + path + ".json");
}

inline GrayVolume load_raw_volume(const std::string& path) {
  const std::string sidecar = path + ".json";
  std::ifstream meta_in(sidecar);
  if (!meta_in) throw DataError("missing sidecar: " + sidecar);
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("ill-formed sidecar " + sidecar + ": " + e.what());
  }
  if (!meta.contains("nx") || !meta.contains("ny") || !meta.contains("nz") ||
      !meta.contains("dtype"))
    throw DataError("sidecar missing nx/ny/nz/dtype: " + sidecar);
  if (meta["dtype"].get<std::string>() != "u8")
    throw DataError("unsupported dtype in sidecar (want u8): " + sidecar);
  GrayVolume v;
  v.nx = meta["nx"].get<int>();
  v.ny = meta["ny"].get<int>();
  v.nz = meta["nz"].get<int>();
  if (v.nx < 1 || v.ny < 1 || v.nz < 1)
    throw DataError("sidecar dims must be >= 1: " + sidecar);
  v.voxels = detail::read_all_bytes(path);
  if (static_cast<std::int64_t>(v.voxels.size()) != v.count())
    throw DataError("payload size " + std::to_string(v.voxels.size()) +
                    " != nx*ny*nz = " + std::to_string(v.count()) + ": " + path);
  return v;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5) / PPM (P6), maxval 255.

namespace detail {

struct PnmHeader {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

inline PnmHeader parse_pnm_header(const std::vector<std::uint8_t>& buf,
                                  const std::string& path) {
  PnmHeader h;
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < buf.size()) {
      if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(buf[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&]() -> std::string {
    skip_ws();
    std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(buf[pos])) ++pos;
    if (start == pos) throw DataError("truncated PNM header: " + path);
    return std::string(buf.begin() + start, buf.begin() + pos);
  };
  auto int_token = [&]() -> int {
    std::string t = token();
    int v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size())
      throw DataError("bad integer '" + t + "' in PNM header: " + path);
    return v;
  };
  h.magic = token();
  h.width = int_token();
  h.height = int_token();
  h.maxval = int_token();
  if (pos >= buf.size() || !std::isspace(buf[pos]))
    throw DataError("malformed PNM header: " + path);
  h.data_offset = pos + 1;  // single whitespace after maxval
  return h;
}

inline std::vector<std::string> sorted_files_with_suffix(
    const std::string& dir, const std::string& suffix) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string n = e.path().filename().string();
    if (n.size() >= suffix.size() &&
        n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0)
      names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace detail

// Reads one P5 slice; checks maxval 255.
inline void load_pgm_slice(const std::string& path, int& w, int& h,
                           std::vector<std::uint8_t>& pixels) {
  auto buf = detail::read_all_bytes(path);
  auto hd = detail::parse_pnm_header(buf, path);
  if (hd.magic != "P5") throw DataError("not a binary PGM (P5): " + path);
  if (hd.maxval != 255) throw DataError("PGM maxval must be 255: " + path);
  w = hd.width;
  h = hd.height;
  std::size_t need = static_cast<std::size_t>(w) * h;
  if (buf.size() - hd.data_offset < need)
    throw DataError("PGM payload truncated: " + path);
  pixels.assign(buf.begin() + hd.data_offset,
                buf.begin() + hd.data_offset + need);
}

inline void save_pgm_slice(const std::string& path, int w, int h,
                           const std::uint8_t* pixels) {
  std::ostringstream head;
  head << "P5\n" << w << " " << h << "\n255\n";
  std::string hs = head.str();
  std::vector<std::uint8_t> buf(hs.begin(), hs.end());
  buf.insert(buf.end(), pixels, pixels + static_cast<std::size_t>(w) * h);
  detail::write_all_bytes(path, buf.data(), buf.size());
}

inline void save_ppm_slice(const std::string& path, int w, int h,
                           const std::uint8_t* rgb) {
  std::ostringstream head;
  head << "P6\n" << w << " " << h << "\n255\n";
  std::string hs = head.str();
  std::vector<std::uint8_t> buf(hs.begin(), hs.end());
  buf.insert(buf.end(), rgb, rgb + static_cast<std::size_t>(w) * h * 3);
  detail::write_all_bytes(path, buf.data(), buf.size());
}

// Loads a directory of P5 slices (sorted by filename) into a volume;
// slice i fills z = i.
inline GrayVolume load_pgm_stack(const std::string& dir) {
  auto names = detail::sorted_files_with_suffix(dir, ".pgm");
  if (names.empty()) throw DataError("no .pgm slices in directory: " + dir);
  GrayVolume v;
  v.nz = static_cast<int>(names.size());
  std::vector<std::uint8_t> slice;
  for (int z = 0; z < v.nz; ++z) {
    int w = 0, h = 0;
    load_pgm_slice(dir + "/" + names[static_cast<std::size_t>(z)], w, h, slice);
    if (z == 0) {
      v.nx = w;
      v.ny = h;
      v.voxels.resize(static_cast<std::size_t>(w) * h * names.size());
    } else if (w != v.nx || h != v.ny) {
      throw DataError("slice " + names[static_cast<std::size_t>(z)] +
                      " dims " + std::to_string(w) + "x" + std::to_string(h) +
                      " do not match first slice " + std::to_string(v.nx) +
                      "x" + std::to_string(v.ny));
    }
    std::copy(slice.begin(), slice.end(),
              v.voxels.begin() + static_cast<std::size_t>(z) * v.nx * v.ny);
  }
  return v;
}

inline void save_gray_stack(const GrayVolume& v, const std::string& dir,
                            const std::string& prefix = "slice_") {
  std::filesystem::create_directories(dir);
  char name[64];
  for (int z = 0; z < v.nz; ++z) {
    std::snprintf(name, sizeof(name), "%s%04d.pgm", prefix.c_str(), z);
    save_pgm_slice(dir + "/" + name, v.nx, v.ny,
                   v.voxels.data() + static_cast<std::size_t>(z) * v.nx * v.ny);
  }
}

// Writes per-slice class-id PGMs (labels_####.pgm) and color PPMs
// (color_####.ppm) using the catalog display colors; label 0 renders black.
inline void save_label_stack(const LabelVolume& lv, const ClassCatalog& catalog,
                             const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t plane = static_cast<std::size_t>(lv.nx) * lv.ny;
  std::vector<std::uint8_t> ids(plane);
  std::vector<std::uint8_t> rgb(plane * 3);
  char name[64];
  for (int z = 0; z < lv.nz; ++z) {
    const std::int32_t* src = lv.labels.data() + static_cast<std::size_t>(z) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      std::int32_t l = src[i];
      if (l < 0 || (l != 0 && !catalog.contains(l)))
        throw DataError("label " + std::to_string(l) +
                        " outside catalog at slice " + std::to_string(z));
      ids[i] = static_cast<std::uint8_t>(l);
      if (l == 0) {
        rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = 0;
      } else {
        const auto& c = catalog.entry(l).rgb;
        rgb[3 * i] = c[0];
        rgb[3 * i + 1] = c[1];
        rgb[3 * i + 2] = c[2];
      }
    }
    std::snprintf(name, sizeof(name), "labels_%04d.pgm", z);
    save_pgm_slice(dir + "/" + name, lv.nx, lv.ny, ids.data());
    std::snprintf(name, sizeof(name), "color_%04d.ppm", z);
    save_ppm_slice(dir + "/" + name, lv.nx, lv.ny, rgb.data());
  }
}

// Inverse of save_label_stack's class-id PGMs.
inline LabelVolume load_label_stack(const std::string& dir) {
  GrayVolume g = load_pgm_stack(dir);
  LabelVolume lv(g.nx, g.ny, g.nz);
  for (std::size_t i = 0; i < g.voxels.size(); ++i)
    lv.labels[i] = g.voxels[i];
  return lv;
}

// ---------------------------------------------------------------------------
// CSV datasets. Header row required; label column selected by name.

inline void save_csv_dataset(const Dataset& ds, const ClassCatalog& catalog,
                             const std::string& path,
                             const std::string& label_column = "Label") {
  ds.check();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (int c = 0; c < ds.n_features; ++c) {
    if (c) out << ",";
    out << (ds.feature_names.empty() ? "f" + std::to_string(c)
                                     : ds.feature_names[static_cast<std::size_t>(c)]);
  }
  if (ds.has_labels()) {
    if (ds.n_features) out << ",";
    out << label_column;
  }
  out << "\n";
  for (std::int64_t r = 0; r < ds.n_rows; ++r) {
    for (int c = 0; c < ds.n_features; ++c) {
      if (c) out << ",";
      out << detail::format_double(ds.at(r, c));
    }
    if (ds.has_labels()) {
      if (ds.n_features) out << ",";
      out << catalog.entry(ds.labels[static_cast<std::size_t>(r)]).name;
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

// Parses features as reals in column order, excluding the label column.
// Labels map through `catalog` when supplied, else ids are assigned in
// first-seen order and the grown catalog is returned via *out_catalog.
inline Dataset load_csv_dataset(const std::string& path,
                                const std::string& label_column,
                                const ClassCatalog* catalog = nullptr,
                                ClassCatalog* out_catalog = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV (no header): " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      std::size_t p = s.find(',', start);
      if (p == std::string::npos) {
        out.push_back(s.substr(start));
        break;
      }
      out.push_back(s.substr(start, p - start));
      start = p + 1;
    }
    return out;
  };

  auto header = split(line);
  int label_idx = -1;
  Dataset ds;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) {
      label_idx = static_cast<int>(i);
    } else {
      ds.feature_names.push_back(header[i]);
    }
  }
  ds.n_features = static_cast<int>(ds.feature_names.size());

  ClassCatalog grown;
  const bool fixed_catalog = catalog != nullptr;
  if (fixed_catalog) grown = *catalog;

  std::int64_t row_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size())
      throw DataError("ragged row " + std::to_string(row_no) + " in " + path +
                      ": expected " + std::to_string(header.size()) +
                      " cells, got " + std::to_string(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (static_cast<int>(i) == label_idx) {
        const std::string& name = cells[i];
        int id = grown.id_of(name);
        if (id == 0) {
          if (fixed_catalog)
            throw DataError("unknown label '" + name + "' at row " +
                            std::to_string(row_no) + " in " + path);
          grown.entries.push_back(
              {grown.num_classes() + 1, name, {0, 0, 0}});
          id = grown.num_classes();
        }
        ds.labels.push_back(id);
      } else {
        const char* begin = cells[i].c_str();
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin || *end != '\0')
          throw DataError("unparseable numeric cell at row " +
                          std::to_string(row_no) + ", column '" +
                          header[i] + "' in " + path + ": '" + cells[i] + "'");
        ds.values.push_back(v);
      }
    }
    ++row_no;
  }
  ds.n_rows = row_no;
  if (label_idx < 0) ds.labels.clear();
  ds.check();
  if (out_catalog) *out_catalog = grown;
  return ds;
}

// ---------------------------------------------------------------------------
// IDX (MNIST encoding): big-endian, magic 0x803 for images, 0x801 for labels.
// Features are flattened pixels scaled to [0,1]; labels become digit+1.

namespace detail {

inline std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

}  // namespace detail

inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  auto img = detail::read_all_bytes(images_path);
  auto lab = detail::read_all_bytes(labels_path);
  if (img.size() < 16 || detail::read_be32(img.data()) != 0x00000803u)
    throw DataError("bad IDX image magic (want 0x00000803): " + images_path);
  if (lab.size() < 8 || detail::read_be32(lab.data()) != 0x00000801u)
    throw DataError("bad IDX label magic (want 0x00000801): " + labels_path);
  std::uint32_t n = detail::read_be32(img.data() + 4);
  std::uint32_t rows = detail::read_be32(img.data() + 8);
  std::uint32_t cols = detail::read_be32(img.data() + 12);
  std::uint32_t nl = detail::read_be32(lab.data() + 4);
  if (n != nl)
    throw DataError("image count " + std::to_string(n) + " != label count " +
                    std::to_string(nl));
  std::size_t pix = static_cast<std::size_t>(rows) * cols;
  if (img.size() != 16 + static_cast<std::size_t>(n) * pix)
    throw DataError("IDX image payload size mismatch: " + images_path);
  if (lab.size() != 8 + n)
    throw DataError("IDX label payload size mismatch: " + labels_path);

  Dataset ds;
  ds.n_rows = n;
  ds.n_features = static_cast<int>(pix);
  ds.values.resize(static_cast<std::size_t>(n) * pix);
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint8_t* src = img.data() + 16 + static_cast<std::size_t>(i) * pix;
    double* dst = ds.values.data() + static_cast<std::size_t>(i) * pix;
    for (std::size_t j = 0; j < pix; ++j) dst[j] = src[j] / 255.0;
    ds.labels[i] = lab[8 + i] + 1;  // internal ids are 1-based
  }
  for (std::size_t j = 0; j < pix; ++j)
    ds.feature_names.push_back("px" + std::to_string(j));
  return ds;
}

// ---------------------------------------------------------------------------
// Catalog JSON file: {"classes":[{"id":1,"name":...,"rgb":[r,g,b]},...]}

inline void save_catalog(const ClassCatalog& catalog, const std::string& path) {
  nlohmann::json j;
  j["classes"] = nlohmann::json::array();
  for (const auto& e : catalog.entries)
    j["classes"].push_back({{"id", e.id},
                            {"name", e.name},
                            {"rgb", {e.rgb[0], e.rgb[1], e.rgb[2]}}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write catalog: " + path);
  out << j.dump(2) << "\n";
}

inline ClassCatalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open catalog: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("ill-formed catalog " + path + ": " + e.what());
  }
  std::vector<ClassEntry> entries;
  for (const auto& c : j.at("classes")) {
    ClassEntry e;
    e.id = c.at("id").get<int>();
    e.name = c.at("name").get<std::string>();
    auto rgb = c.at("rgb");
    e.rgb = {rgb.at(0).get<std::uint8_t>(), rgb.at(1).get<std::uint8_t>(),
             rgb.at(2).get<std::uint8_t>()};
    entries.push_back(e);
  }
  return ClassCatalog(std::move(entries));
}

}  // namespace voxseg
