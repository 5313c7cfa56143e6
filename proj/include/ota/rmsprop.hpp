#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ota/common.hpp"
#include "ota/net.hpp"

namespace ota {

struct RmsPropOptions {
  double alpha = 0.00005;
  double rho = 0.9;
  double eps = 1e-8;
};

// Running mean-square accumulators, one per parameter, flat in the net's
// fixed parameter order.
struct RmsPropState {
  RmsPropOptions opt;
  std::vector<double> acc;

  RmsPropState() = default;
  explicit RmsPropState(const DenseNet& net, RmsPropOptions o = {})
      : opt(o), acc(net.num_params(), 0.0) {
    if (!(opt.alpha > 0.0) || !(opt.rho > 0.0) || !(opt.rho < 1.0))
      throw NumericError("rmsprop needs alpha>0 and 0<rho<1");
  }
};

// acc <- rho*acc + (1-rho)*g^2 ; p <- p - alpha * g / (sqrt(acc)+eps)
// Flat-span core shared by the net-level wrapper and tests.
inline void rmsprop_update(std::span<double> params, std::span<const double> grads,
                           std::span<double> acc, const RmsPropOptions& opt) {
  if (params.size() != grads.size() || params.size() != acc.size())
    throw DimensionError("rmsprop: params/grads/state sizes differ");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("rmsprop: nonfinite gradient, update rejected");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    acc[i] = opt.rho * acc[i] + (1.0 - opt.rho) * g * g;
    params[i] -= opt.alpha * g / (std::sqrt(acc[i]) + opt.eps);
  }
}

// One optimizer step over a whole net. The gradient is validated before
// any parameter is touched, so a rejected update leaves the net intact.
inline void rmsprop_step(DenseNet& net, const Grads& grads, RmsPropState& state) {
  if (!grads.finite()) throw NumericError("rmsprop: nonfinite gradient, update rejected");
  std::size_t off = 0;
  std::size_t li = 0, part = 0;  // walks (layer, weights|bias) in visit order
  net.visit_params([&](std::span<double> p) {
    std::span<const double> g = (part == 0)
        ? std::span<const double>(grads.w[li].values())
        : std::span<const double>(grads.b[li]);
    if (g.size() != p.size()) throw DimensionError("rmsprop: gradient shape mismatch");
    rmsprop_update(p, g, std::span<double>(state.acc).subspan(off, p.size()), state.opt);
    off += p.size();
    if (++part == 2) {
      part = 0;
      ++li;
    }
  });
}

}  // namespace ota
