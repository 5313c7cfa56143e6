#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "ota/common.hpp"
#include "ota/tensor.hpp"

namespace ota {

// A finite point set standing for the target distribution: flattened rows
// in [0,1]^d for images, free coordinates for synthetic 2-D data.
struct Dataset {
  std::string name;
  Tensor points;                 // (M, d)
  std::vector<std::int32_t> labels;  // optional; empty when absent
  std::size_t image_h = 0, image_w = 0;  // 0,0 for non-image data

  std::size_t size() const { return points.rows(); }
  std::size_t dim() const { return points.cols(); }
  bool is_image() const { return image_h > 0 && image_w > 0; }

  void validate() const {
    if (!points.finite()) throw NumericError("dataset contains nonfinite values");
    if (is_image()) {
      if (image_h * image_w != dim())
        throw DimensionError("dataset image shape does not match dimension");
      for (double v : points.values())
        if (v < 0.0 || v > 1.0)
          throw NumericError("image dataset values must lie in [0,1]");
    }
    if (!labels.empty() && labels.size() != size())
      throw DimensionError("dataset labels length mismatch");
  }
};

// Mode centers equally spaced on a circle; points drawn round-robin across
// modes with isotropic gaussian jitter. labels hold the mode of each point.
inline Dataset ring_of_gaussians(std::size_t n_modes, std::size_t n_points, double radius,
                                 double sigma, std::uint64_t seed) {
  if (n_modes < 1 || n_points < 1)
    throw DimensionError("ring_of_gaussians: need at least one mode and one point");
  Dataset ds;
  ds.name = "ring";
  ds.points = Tensor({n_points, 2});
  ds.labels.resize(n_points);
  Rng rng(seed);
  const double step = 2.0 * std::numbers::pi / static_cast<double>(n_modes);
  for (std::size_t i = 0; i < n_points; ++i) {
    const std::size_t mode = i % n_modes;
    const double angle = step * static_cast<double>(mode);
    ds.points.at(i, 0) = radius * std::cos(angle) + sigma * rng.normal();
    ds.points.at(i, 1) = radius * std::sin(angle) + sigma * rng.normal();
    ds.labels[i] = static_cast<std::int32_t>(mode);
  }
  return ds;
}

// ---- IDX files ------------------------------------------------------------
// Big-endian IDX layout: magic, dimension sizes (4 bytes each), raw bytes.
// 0x00000803 = unsigned-byte rank-3 (images), 0x00000801 = rank-1 (labels).

namespace idx_detail {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

inline std::uint32_t read_u32_be(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw ParseError("idx: truncated file while reading " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_u32_be(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace idx_detail

// Directory prefix for relative dataset paths, settable via environment.
inline std::filesystem::path resolve_data_path(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute() || std::filesystem::exists(p)) return p;
  if (const char* env = std::getenv("OTASSIGN_DATA_DIR")) {
    const auto joined = std::filesystem::path(env) / p;
    if (std::filesystem::exists(joined)) return joined;
  }
  return p;
}

// Loads an IDX image file (pixels scaled to [0,1]) and, optionally, the
// matching label file. Validates magics, dimensions and the image/label
// count agreement.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path = "") {
  using namespace idx_detail;
  const auto ipath = resolve_data_path(images_path);
  std::ifstream is(ipath, std::ios::binary);
  if (!is) throw ParseError("idx: cannot open " + ipath.string());

  const std::uint32_t magic = read_u32_be(is, "image magic");
  if (magic != kImagesMagic)
    throw ParseError("idx: bad image magic (expected 0x00000803)");
  const std::uint32_t count = read_u32_be(is, "image count");
  const std::uint32_t rows = read_u32_be(is, "image rows");
  const std::uint32_t cols = read_u32_be(is, "image cols");

  Dataset ds;
  ds.name = ipath.stem().string();
  ds.image_h = rows;
  ds.image_w = cols;
  ds.points = Tensor({count, static_cast<std::size_t>(rows) * cols});

  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw ParseError("idx: truncated image data at image " + std::to_string(i));
    auto row = ds.points.row_span(i);
    for (std::size_t k = 0; k < buf.size(); ++k)
      row[k] = static_cast<double>(buf[k]) / 255.0;
  }

  if (!labels_path.empty()) {
    const auto lpath = resolve_data_path(labels_path);
    std::ifstream ls(lpath, std::ios::binary);
    if (!ls) throw ParseError("idx: cannot open " + lpath.string());
    const std::uint32_t lmagic = read_u32_be(ls, "label magic");
    if (lmagic != kLabelsMagic)
      throw ParseError("idx: bad label magic (expected 0x00000801)");
    const std::uint32_t lcount = read_u32_be(ls, "label count");
    if (lcount != count)
      throw ParseError("idx: image/label count mismatch");
    std::vector<unsigned char> lbuf(count);
    if (!ls.read(reinterpret_cast<char*>(lbuf.data()), count))
      throw ParseError("idx: truncated label data");
    ds.labels.assign(lbuf.begin(), lbuf.end());
  }
  return ds;
}

// Writers for fixtures and the round-trip property. Pixel doubles are
// rounded to the nearest byte.
inline void write_idx_images(const std::string& path, const Tensor& points,
                             std::size_t h, std::size_t w) {
  using namespace idx_detail;
  if (points.cols() != h * w) throw DimensionError("write_idx_images: shape mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("idx: cannot write " + path);
  write_u32_be(os, kImagesMagic);
  write_u32_be(os, static_cast<std::uint32_t>(points.rows()));
  write_u32_be(os, static_cast<std::uint32_t>(h));
  write_u32_be(os, static_cast<std::uint32_t>(w));
  std::vector<unsigned char> buf(points.cols());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto row = points.row_span(i);
    for (std::size_t k = 0; k < buf.size(); ++k) {
      const double v = std::clamp(row[k], 0.0, 1.0) * 255.0;
      buf[k] = static_cast<unsigned char>(std::lround(v));
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
}

inline void write_idx_labels(const std::string& path, const std::vector<std::int32_t>& labels) {
  using namespace idx_detail;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("idx: cannot write " + path);
  write_u32_be(os, kLabelsMagic);
  write_u32_be(os, static_cast<std::uint32_t>(labels.size()));
  for (std::int32_t l : labels) {
    const unsigned char b = static_cast<unsigned char>(l);
    os.write(reinterpret_cast<const char*>(&b), 1);
  }
}

// Bilinear resample of one image row; convex weights, so constants and the
// [0,1] range survive.
inline void bilinear_resize(std::span<const double> src, std::size_t sh, std::size_t sw,
                            std::span<double> dst, std::size_t th, std::size_t tw) {
  const double rscale = th > 1 ? static_cast<double>(sh - 1) / static_cast<double>(th - 1) : 0.0;
  const double cscale = tw > 1 ? static_cast<double>(sw - 1) / static_cast<double>(tw - 1) : 0.0;
  for (std::size_t r = 0; r < th; ++r) {
    const double sr = static_cast<double>(r) * rscale;
    const std::size_t r0 = std::min(static_cast<std::size_t>(sr), sh - 1);
    const std::size_t r1 = std::min(r0 + 1, sh - 1);
    const double fr = sr - static_cast<double>(r0);
    for (std::size_t c = 0; c < tw; ++c) {
      const double sc = static_cast<double>(c) * cscale;
      const std::size_t c0 = std::min(static_cast<std::size_t>(sc), sw - 1);
      const std::size_t c1 = std::min(c0 + 1, sw - 1);
      const double fc = sc - static_cast<double>(c0);
      const double top = src[r0 * sw + c0] * (1.0 - fc) + src[r0 * sw + c1] * fc;
      const double bot = src[r1 * sw + c0] * (1.0 - fc) + src[r1 * sw + c1] * fc;
      dst[r * tw + c] = top * (1.0 - fr) + bot * fr;
    }
  }
}

struct PreprocessOptions {
  std::size_t subset = 5000;
  std::size_t target_h = 32, target_w = 32;
  bool shuffle = true;
  std::uint64_t shuffle_seed = 0;
};

// Subset selection (optionally after a seeded shuffle) followed by bilinear
// upscaling; rows stay flattened in [0,1].
inline Dataset preprocess(const Dataset& src, const PreprocessOptions& opts) {
  if (!src.is_image()) throw DimensionError("preprocess: source must be an image dataset");
  if (opts.subset > src.size())
    throw DimensionError("preprocess: subset larger than the dataset");

  std::vector<std::size_t> order(src.size());
  std::iota(order.begin(), order.end(), 0);
  if (opts.shuffle) {
    Rng rng(opts.shuffle_seed);
    rng.shuffle(order);
  }

  Dataset out;
  out.name = src.name;
  out.image_h = opts.target_h;
  out.image_w = opts.target_w;
  out.points = Tensor({opts.subset, opts.target_h * opts.target_w});
  if (!src.labels.empty()) out.labels.resize(opts.subset);

  const bool same_shape = src.image_h == opts.target_h && src.image_w == opts.target_w;
  for (std::size_t i = 0; i < opts.subset; ++i) {
    const std::size_t s = order[i];
    if (same_shape) {
      auto from = src.points.row_span(s);
      std::copy(from.begin(), from.end(), out.points.row_span(i).begin());
    } else {
      bilinear_resize(src.points.row_span(s), src.image_h, src.image_w,
                      out.points.row_span(i), opts.target_h, opts.target_w);
    }
    if (!src.labels.empty()) out.labels[i] = src.labels[s];
  }
  out.validate();
  return out;
}

}  // namespace ota
