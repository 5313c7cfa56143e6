#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "ota/common.hpp"
#include "ota/ssim.hpp"
#include "ota/tensor.hpp"

namespace ota {

enum class CostKind { Euclidean, SquaredEuclidean, SsimCost, PsnrCost };

inline const char* to_string(CostKind k) {
  switch (k) {
    case CostKind::Euclidean: return "euclidean";
    case CostKind::SquaredEuclidean: return "squared_euclidean";
    case CostKind::SsimCost: return "ssim";
    case CostKind::PsnrCost: return "psnr";
  }
  return "?";
}

inline CostKind cost_kind_from_string(const std::string& s) {
  if (s == "euclidean") return CostKind::Euclidean;
  if (s == "squared_euclidean") return CostKind::SquaredEuclidean;
  if (s == "ssim" || s == "ssim_cost") return CostKind::SsimCost;
  if (s == "psnr" || s == "psnr_cost") return CostKind::PsnrCost;
  throw ParseError("unknown cost kind: " + s);
}

// A transport cost c(x, y) with a positive multiplier. Image costs
// (ssim/psnr) additionally carry the (H, W) the flat vectors encode.
struct CostSpec {
  CostKind kind = CostKind::SquaredEuclidean;
  double scale = 1.0;
  std::optional<std::pair<std::size_t, std::size_t>> image_shape;

  void validate(std::size_t dim) const {
    if (!(scale > 0.0)) throw NumericError("cost scale must be positive");
    if (kind == CostKind::SsimCost || kind == CostKind::PsnrCost) {
      if (!image_shape)
        throw DimensionError("image cost requires an image_shape");
      if (image_shape->first * image_shape->second != dim)
        throw DimensionError("image_shape does not match point dimension");
    }
  }
};

inline CostSpec squared_euclidean_cost(double scale = 1.0) {
  return {CostKind::SquaredEuclidean, scale, std::nullopt};
}
inline CostSpec euclidean_cost(double scale = 1.0) {
  return {CostKind::Euclidean, scale, std::nullopt};
}

// c(spec; x, y). Throws SingularCostError for psnr at x == y, where the
// peak signal-to-noise ratio is infinite.
inline double cost(const CostSpec& spec, std::span<const double> x,
                   std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("cost: point dimensions differ");
  spec.validate(x.size());
  switch (spec.kind) {
    case CostKind::Euclidean:
      return spec.scale * std::sqrt(squared_distance(x, y));
    case CostKind::SquaredEuclidean:
      return spec.scale * squared_distance(x, y);
    case CostKind::SsimCost:
      return spec.scale *
             (1.0 - ssim(x, y, spec.image_shape->first, spec.image_shape->second));
    case CostKind::PsnrCost: {
      const double mse = squared_distance(x, y) / static_cast<double>(x.size());
      if (mse == 0.0)
        throw SingularCostError("psnr cost undefined at identical images (infinite PSNR)");
      // -PSNR = -10*log10(1/MSE); monotone increasing in MSE
      return spec.scale * 10.0 * std::log10(mse);
    }
  }
  throw NumericError("unreachable cost kind");
}

// Gradient of c in its first argument, written into grad (size = dim).
inline void cost_grad_x(const CostSpec& spec, std::span<const double> x,
                        std::span<const double> y, std::span<double> grad) {
  if (x.size() != y.size() || grad.size() != x.size())
    throw DimensionError("cost_grad_x: dimension mismatch");
  spec.validate(x.size());
  switch (spec.kind) {
    case CostKind::Euclidean: {
      const double d = std::sqrt(squared_distance(x, y));
      if (d == 0.0)
        throw SingularCostError("euclidean gradient undefined at x == y");
      const double f = spec.scale / d;
      for (std::size_t i = 0; i < x.size(); ++i) grad[i] = f * (x[i] - y[i]);
      return;
    }
    case CostKind::SquaredEuclidean: {
      const double f = 2.0 * spec.scale;
      for (std::size_t i = 0; i < x.size(); ++i) grad[i] = f * (x[i] - y[i]);
      return;
    }
    case CostKind::SsimCost: {
      ssim(x, y, spec.image_shape->first, spec.image_shape->second, grad);
      for (auto& g : grad) g *= -spec.scale;
      return;
    }
    case CostKind::PsnrCost: {
      const double n = static_cast<double>(x.size());
      const double mse = squared_distance(x, y) / n;
      if (mse == 0.0)
        throw SingularCostError("psnr gradient undefined at x == y");
      // d/dx [10*log10(mse)] = 10/(ln10 * mse) * 2(x-y)/n
      const double f = spec.scale * 20.0 / (std::log(10.0) * mse * n);
      for (std::size_t i = 0; i < x.size(); ++i) grad[i] = f * (x[i] - y[i]);
      return;
    }
  }
}

// Axis-aligned bounding box, one (lo, hi) range per coordinate.
struct BoundingBox {
  std::vector<double> lo, hi;

  static BoundingBox cube(std::size_t dim, double l, double h) {
    BoundingBox b;
    b.lo.assign(dim, l);
    b.hi.assign(dim, h);
    return b;
  }
  static BoundingBox of_points(const Tensor& pts) {
    BoundingBox b;
    b.lo.assign(pts.cols(), std::numeric_limits<double>::infinity());
    b.hi.assign(pts.cols(), -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < pts.rows(); ++r)
      for (std::size_t c = 0; c < pts.cols(); ++c) {
        b.lo[c] = std::min(b.lo[c], pts.at(r, c));
        b.hi[c] = std::max(b.hi[c], pts.at(r, c));
      }
    return b;
  }
};

// Multiplier that makes the cost diameter of the box ~1. For the metric
// kinds this is exact (opposite corners realize the max). ssim is already
// O(1)-bounded and psnr only matters through its ordering, so both return
// 1.
inline double unit_diameter_scale(const CostSpec& spec, const BoundingBox& box) {
  if (box.lo.size() != box.hi.size() || box.lo.empty())
    throw DimensionError("unit_diameter_scale: bad bounding box");
  double sq = 0.0;
  for (std::size_t i = 0; i < box.lo.size(); ++i) {
    const double r = box.hi[i] - box.lo[i];
    if (!std::isfinite(r)) throw NumericError("unit_diameter_scale: unbounded domain");
    sq += r * r;
  }
  switch (spec.kind) {
    case CostKind::Euclidean:
      if (sq == 0.0) throw NumericError("unit_diameter_scale: degenerate domain");
      return 1.0 / std::sqrt(sq);
    case CostKind::SquaredEuclidean:
      if (sq == 0.0) throw NumericError("unit_diameter_scale: degenerate domain");
      return 1.0 / sq;
    case CostKind::SsimCost:
    case CostKind::PsnrCost:
      return 1.0;
  }
  return 1.0;
}

}  // namespace ota
