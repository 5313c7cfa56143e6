#pragma once

#include <cstdint>
#include <limits>
#include <ostream>
#include <vector>

#include "ota/common.hpp"
#include "ota/costs.hpp"
#include "ota/net.hpp"
#include "ota/tensor.hpp"

namespace ota {

constexpr std::uint64_t kNoCacheVersion = ~std::uint64_t{0};

// The finite support of the target measure: M real points plus the cached
// potential values at them. The cache is keyed on the potential net's
// parameter revision; every consumer checks freshness before trusting it.
struct RealSet {
  Tensor points;                  // (M, d)
  std::vector<double> psi_cache;  // M
  std::uint64_t cache_version = kNoCacheVersion;

  explicit RealSet(Tensor pts = {}) : points(std::move(pts)) {
    psi_cache.assign(points.rows(), 0.0);
  }

  std::size_t size() const { return points.rows(); }
  std::size_t dim() const { return points.cols(); }

  bool fresh_for(const DenseNet& assigner) const {
    return cache_version == assigner.revision();
  }

  // Treat the current cache (often all-zero) as authoritative without an
  // assigner. Used by plain nearest-point queries.
  void pin_cache(std::uint64_t version = 0) { cache_version = version; }
};

// Result of assigning a batch of generated points: per-point argmin index
// and attained minimum of cost + psi, plus per-real assignment counts.
struct AssignmentBatch {
  std::vector<std::int32_t> indices;  // N, in [0, M)
  std::vector<double> values;         // N, min_j cost(x_i,y_j) + psi[j]
  std::vector<std::int64_t> counts;   // M, counts[j] = #{i : indices[i]==j}
  std::uint64_t psi_version = kNoCacheVersion;

  std::size_t size() const { return indices.size(); }
};

struct DualEstimate {
  double value = 0.0;
  std::size_t n_samples = 0;
};

// psi_cache[j] <- psi(y_j); one batched forward over the reals only.
inline void refresh_psi_cache(const DenseNet& assigner, RealSet& reals,
                              unsigned threads = 0) {
  if (reals.size() == 0) throw DimensionError("refresh_psi_cache: empty real set");
  if (assigner.input_dim() != reals.dim() || assigner.output_dim() != 1)
    throw DimensionError("assigner must map real-point dimension to a scalar");
  Tensor out = assigner.forward(reals.points, threads);
  reals.psi_cache.assign(out.values().begin(), out.values().end());
  reals.cache_version = assigner.revision();
}

namespace assign_detail {

// One scan over the reals. Tie-break: lowest index (strict < while
// scanning in order). A psnr exact match is treated as cost 0.
inline void scan(std::span<const double> x, const Tensor& reals_pts,
                 const std::vector<double>& psi, const CostSpec& spec,
                 std::int32_t& best_index, double& best_value) {
  const std::size_t m = reals_pts.rows();
  best_index = -1;
  best_value = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m; ++j) {
    const auto y = reals_pts.row_span(j);
    double c;
    switch (spec.kind) {
      case CostKind::Euclidean:
        c = spec.scale * std::sqrt(squared_distance(x, y));
        break;
      case CostKind::SquaredEuclidean:
        c = spec.scale * squared_distance(x, y);
        break;
      case CostKind::PsnrCost: {
        const double mse = squared_distance(x, y) / static_cast<double>(x.size());
        c = mse == 0.0 ? 0.0
                       : spec.scale * 10.0 * std::log10(mse);
        break;
      }
      case CostKind::SsimCost:
        c = spec.scale *
            (1.0 - ssim(x, y, spec.image_shape->first, spec.image_shape->second));
        break;
      default:
        throw NumericError("unreachable cost kind");
    }
    const double v = c + psi[j];
    if (v < best_value) {
      best_value = v;
      best_index = static_cast<std::int32_t>(j);
    }
  }
}

}  // namespace assign_detail

// The c-transform argmin for one point:
//   index = argmin_j { cost(x, y_j) + psi[j] },  value = the attained min.
inline std::pair<std::int32_t, double> c_transform_assign(std::span<const double> x,
                                                          const RealSet& reals,
                                                          const CostSpec& spec) {
  if (reals.size() == 0) throw DimensionError("c_transform_assign: empty real set");
  if (x.size() != reals.dim()) throw DimensionError("c_transform_assign: dimension mismatch");
  spec.validate(x.size());
  std::int32_t idx;
  double val;
  assign_detail::scan(x, reals.points, reals.psi_cache, spec, idx, val);
  return {idx, val};
}

// Element-wise c-transform over a batch, fanned out over points. The scan
// kernel is shared with the serial path, so any thread count produces the
// identical batch.
inline AssignmentBatch batch_assign(const Tensor& xs, const RealSet& reals,
                                    const CostSpec& spec, unsigned threads = 0) {
  if (reals.size() == 0) throw DimensionError("batch_assign: empty real set");
  if (xs.rows() > 0 && xs.cols() != reals.dim())
    throw DimensionError("batch_assign: dimension mismatch");
  spec.validate(reals.dim());

  const std::size_t n = xs.rows();
  AssignmentBatch batch;
  batch.indices.assign(n, -1);
  batch.values.assign(n, 0.0);
  batch.counts.assign(reals.size(), 0);
  batch.psi_version = reals.cache_version;

  parallel_for(n, [&](std::size_t i) {
    assign_detail::scan(xs.row_span(i), reals.points, reals.psi_cache, spec,
                        batch.indices[i], batch.values[i]);
  }, threads);

  for (std::size_t i = 0; i < n; ++i) ++batch.counts[batch.indices[i]];
  return batch;
}

// The counts-weighted training objective for the potential net, negated so
// that a minimizer performs dual ascent:
//   loss = - sum_j (counts[j]/N - 1/M) * psi[j]
// Over-assigned reals push psi up, under-assigned pull it down.
inline double assigner_loss(const AssignmentBatch& batch,
                            std::span<const double> psi_at_reals) {
  const std::size_t m = batch.counts.size();
  if (psi_at_reals.size() != m)
    throw DimensionError("assigner_loss: psi/counts length mismatch");
  const std::size_t n = batch.size();
  if (n == 0) throw DimensionError("assigner_loss: empty batch");
  double loss = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double coeff = static_cast<double>(batch.counts[j]) / static_cast<double>(n) -
                         1.0 / static_cast<double>(m);
    loss -= coeff * psi_at_reals[j];
  }
  return loss;
}

// Gradient of assigner_loss w.r.t. the potential net's parameters, with
// the assignments held fixed:
//   d(loss)/dw = sum_j (1/M - counts[j]/N) * D_w psi(y_j).
// Rows whose coefficient is exactly zero are dropped before the backward
// pass; with fully balanced counts every row drops and the gradient is the
// +0.0 vector bit for bit.
inline Grads assigner_gradient(const AssignmentBatch& batch, const DenseNet& assigner,
                               const RealSet& reals, unsigned threads = 0) {
  if (!reals.fresh_for(assigner) || batch.psi_version != reals.cache_version)
    throw StaleCacheError("assigner_gradient: psi cache is stale for these weights");
  const std::size_t m = reals.size();
  if (batch.counts.size() != m)
    throw DimensionError("assigner_gradient: counts/reals size mismatch");
  const std::size_t n = batch.size();
  if (n == 0) throw DimensionError("assigner_gradient: empty batch");

  std::vector<std::size_t> rows;
  std::vector<double> coeffs;
  rows.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double coeff = 1.0 / static_cast<double>(m) -
                         static_cast<double>(batch.counts[j]) / static_cast<double>(n);
    if (coeff != 0.0) {
      rows.push_back(j);
      coeffs.push_back(coeff);
    }
  }

  if (rows.empty()) return assigner.make_grads();

  Tensor sub({rows.size(), reals.dim()});
  Tensor upstream({rows.size(), 1});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = reals.points.row_span(rows[r]);
    std::copy(src.begin(), src.end(), sub.row_span(r).begin());
    upstream.at(r, 0) = coeffs[r];
  }
  return assigner.backward_params(sub, upstream, threads);
}

// Monte-Carlo estimate of the dual objective
//   (1/N) sum_i psi^{supp,c}(x_i) - (1/M) sum_j psi(y_j).
// Refreshes the psi cache if the weights moved since it was filled.
inline DualEstimate dual_estimate(const Tensor& xs, RealSet& reals, const CostSpec& spec,
                                  const DenseNet& assigner, unsigned threads = 0) {
  if (xs.rows() == 0 || reals.size() == 0)
    throw DimensionError("dual_estimate: empty point sets");
  if (!reals.fresh_for(assigner)) refresh_psi_cache(assigner, reals, threads);
  const AssignmentBatch batch = batch_assign(xs, reals, spec, threads);

  double mean_ctrans = 0.0;
  for (double v : batch.values) mean_ctrans += v;
  mean_ctrans /= static_cast<double>(batch.size());

  double mean_psi = 0.0;
  for (double p : reals.psi_cache) mean_psi += p;
  mean_psi /= static_cast<double>(reals.size());

  DualEstimate est;
  est.value = mean_ctrans - mean_psi;
  est.n_samples = xs.rows();
  if (!std::isfinite(est.value)) throw NumericError("dual_estimate: nonfinite value");
  return est;
}

// ---- optimality / stability checks ---------------------------------------

struct OptimalityOptions {
  double margin_tol = 1e-9;      // unique-minimizer gap per point
  std::int64_t count_tol = -1;   // max |counts - N/M|; -1 = ceil(0.05*N/M)
};

struct OptimalityReport {
  bool optimal = false;
  bool unique_minimizers = false;
  bool uniform_counts = false;
  double min_margin = 0.0;                // smallest best/second-best gap
  std::int64_t max_count_deviation = 0;
  std::vector<std::int32_t> map;          // the induced map when optimal
};

// Checks the two optimal-plan conditions for the induced map x -> argmin:
// every point has a strict unique minimizer (margin > tol) and the
// pushforward counts are uniform within count_tol. When both hold the map
// itself is the witness.
inline OptimalityReport optimality_check(const Tensor& xs, RealSet& reals,
                                         const CostSpec& spec, const DenseNet& assigner,
                                         const OptimalityOptions& opts = {},
                                         unsigned threads = 0) {
  if (!reals.fresh_for(assigner)) refresh_psi_cache(assigner, reals, threads);
  const std::size_t n = xs.rows();
  const std::size_t m = reals.size();
  if (n == 0 || m == 0) throw DimensionError("optimality_check: empty point sets");

  const AssignmentBatch batch = batch_assign(xs, reals, spec, threads);

  // second-best values, one extra scan per point
  std::vector<double> margins(n, std::numeric_limits<double>::infinity());
  parallel_for(n, [&](std::size_t i) {
    const auto x = xs.row_span(i);
    double second = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (static_cast<std::int32_t>(j) == batch.indices[i]) continue;
      double c = cost(spec, x, reals.points.row_span(j));
      const double v = c + reals.psi_cache[j];
      second = std::min(second, v);
    }
    margins[i] = second - batch.values[i];
  }, threads);

  OptimalityReport rep;
  rep.min_margin = m == 1 ? std::numeric_limits<double>::infinity()
                          : *std::min_element(margins.begin(), margins.end());
  rep.unique_minimizers = rep.min_margin > opts.margin_tol;

  const std::int64_t tol =
      opts.count_tol >= 0
          ? opts.count_tol
          : static_cast<std::int64_t>(
                std::ceil(0.05 * static_cast<double>(n) / static_cast<double>(m)));
  const double expected = static_cast<double>(n) / static_cast<double>(m);
  double max_dev = 0.0;
  for (std::int64_t c : batch.counts)
    max_dev = std::max(max_dev, std::abs(static_cast<double>(c) - expected));
  rep.max_count_deviation = static_cast<std::int64_t>(std::ceil(max_dev));
  rep.uniform_counts = max_dev <= static_cast<double>(tol);

  rep.optimal = rep.unique_minimizers && rep.uniform_counts;
  if (rep.optimal) rep.map = batch.indices;
  return rep;
}

struct StabilityReport {
  bool stable = false;
  std::size_t changed = 0;          // points whose argmin moved
  std::int64_t first_changed = -1;  // witness index, -1 if none
};

// Perturbs every assigner parameter by iid uniform noise in [-delta, delta]
// and reports whether all N assignments survive. delta = 0 is trivially
// stable.
inline StabilityReport stability_check(const Tensor& xs, const RealSet& reals,
                                       const CostSpec& spec, const DenseNet& assigner,
                                       double delta, std::uint64_t seed,
                                       unsigned threads = 0) {
  if (delta < 0.0) throw NumericError("stability_check: delta must be >= 0");
  if (!reals.fresh_for(assigner))
    throw StaleCacheError("stability_check: refresh the psi cache first");

  const AssignmentBatch before = batch_assign(xs, reals, spec, threads);

  DenseNet perturbed = assigner;
  Rng rng(seed);
  perturbed.visit_params([&](std::span<double> p) {
    for (auto& v : p) v += rng.uniform(-delta, delta);
  });

  RealSet shifted = reals;
  refresh_psi_cache(perturbed, shifted, threads);
  const AssignmentBatch after = batch_assign(xs, shifted, spec, threads);

  StabilityReport rep;
  for (std::size_t i = 0; i < before.indices.size(); ++i) {
    if (before.indices[i] != after.indices[i]) {
      ++rep.changed;
      if (rep.first_changed < 0) rep.first_changed = static_cast<std::int64_t>(i);
    }
  }
  rep.stable = rep.changed == 0;
  return rep;
}

// Assignment snapshot rows: generated point id, assigned real index, plain
// cost part and potential part of the attained minimum.
inline void export_assignments_csv(std::ostream& os, const AssignmentBatch& batch,
                                   const RealSet& reals) {
  os << "id,real_index,cost,psi\n";
  char buf[64];
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::int32_t j = batch.indices[i];
    const double psi = reals.psi_cache[j];
    os << i << ',' << j << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", batch.values[i] - psi);
    os << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", psi);
    os << buf << '\n';
  }
}

}  // namespace ota
