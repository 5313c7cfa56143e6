#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ota/common.hpp"

namespace ota {

// Windowed structural similarity over [0,1] images. Gaussian 11x11 mask
// with sigma 1.5, stabilizers (0.01)^2 and (0.03)^2 for unit data range,
// mean-pooled over all fully-interior window positions.
struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double c1 = 1e-4;  // (0.01 * L)^2, L = 1
  double c2 = 9e-4;  // (0.03 * L)^2
};

namespace ssim_detail {

inline std::vector<double> gaussian_mask(std::size_t win, double sigma) {
  std::vector<double> m(win * win);
  const double half = (static_cast<double>(win) - 1.0) / 2.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < win; ++r)
    for (std::size_t c = 0; c < win; ++c) {
      const double dr = static_cast<double>(r) - half;
      const double dc = static_cast<double>(c) - half;
      m[r * win + c] = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      sum += m[r * win + c];
    }
  for (auto& v : m) v /= sum;
  return m;
}

}  // namespace ssim_detail

// Mean SSIM. If grad_x is non-null it receives d(ssim)/dx (same length as
// x) accumulated over every window containing the pixel.
inline double ssim(std::span<const double> x, std::span<const double> y,
                   std::size_t height, std::size_t width,
                   std::span<double> grad_x = {}, const SsimOptions& opts = {}) {
  if (x.size() != y.size() || x.size() != height * width)
    throw DimensionError("ssim: images must share the given shape");
  if (height < opts.window || width < opts.window)
    throw DimensionError("ssim: image smaller than the 11x11 window");
  const bool want_grad = !grad_x.empty();
  if (want_grad && grad_x.size() != x.size())
    throw DimensionError("ssim: gradient buffer size mismatch");

  const std::size_t win = opts.window;
  const std::vector<double> mask = ssim_detail::gaussian_mask(win, opts.sigma);
  if (want_grad) std::fill(grad_x.begin(), grad_x.end(), 0.0);

  const std::size_t wr = height - win + 1;
  const std::size_t wc = width - win + 1;
  const double n_windows = static_cast<double>(wr * wc);

  double total = 0.0;
  for (std::size_t r0 = 0; r0 < wr; ++r0) {
    for (std::size_t c0 = 0; c0 < wc; ++c0) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t r = 0; r < win; ++r) {
        const std::size_t base = (r0 + r) * width + c0;
        const double* mrow = &mask[r * win];
        for (std::size_t c = 0; c < win; ++c) {
          const double m = mrow[c];
          const double xv = x[base + c];
          const double yv = y[base + c];
          mx += m * xv;
          my += m * yv;
          sxx += m * xv * xv;
          syy += m * yv * yv;
          sxy += m * xv * yv;
        }
      }
      const double vx = sxx - mx * mx;
      const double vy = syy - my * my;
      const double cov = sxy - mx * my;

      const double a1 = 2.0 * mx * my + opts.c1;
      const double a2 = 2.0 * cov + opts.c2;
      const double b1 = mx * mx + my * my + opts.c1;
      const double b2 = vx + vy + opts.c2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;

      if (want_grad) {
        const double inv_b1b2 = 1.0 / (b1 * b2);
        for (std::size_t r = 0; r < win; ++r) {
          const std::size_t base = (r0 + r) * width + c0;
          const double* mrow = &mask[r * win];
          for (std::size_t c = 0; c < win; ++c) {
            const double m = mrow[c];
            const double xd = x[base + c] - mx;
            const double yd = y[base + c] - my;
            const double ds = m * ((2.0 * my * a2 + 2.0 * a1 * yd) * inv_b1b2 -
                                   s * (2.0 * mx / b1 + 2.0 * xd / b2));
            grad_x[base + c] += ds / n_windows;
          }
        }
      }
    }
  }
  return total / n_windows;
}

}  // namespace ota
