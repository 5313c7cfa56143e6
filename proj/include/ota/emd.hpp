#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <vector>

#include "ota/assignment.hpp"
#include "ota/common.hpp"
#include "ota/costs.hpp"
#include "ota/tensor.hpp"

namespace ota {

// Weighted point set standing for a discrete probability measure.
struct DiscreteMeasure {
  Tensor points;                // (n, d)
  std::vector<double> weights;  // n, nonnegative, sums to 1

  static DiscreteMeasure uniform(Tensor pts) {
    DiscreteMeasure mu;
    const std::size_t n = pts.rows();
    mu.points = std::move(pts);
    mu.weights.assign(n, n ? 1.0 / static_cast<double>(n) : 0.0);
    return mu;
  }

  std::size_t size() const { return points.rows(); }

  void validate() const {
    if (size() == 0) throw DimensionError("discrete measure needs at least one atom");
    if (weights.size() != size())
      throw DimensionError("discrete measure: weights/points length mismatch");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw NumericError("discrete measure: negative weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw NumericError("discrete measure: weights must sum to 1");
  }
};

struct PlanEntry {
  std::int32_t i, j;
  double mass;
};

// Sparse optimal coupling; an optimal basic solution of the transportation
// problem has at most n+m-1 nonzeros. Entries are sorted by (i, j).
struct TransportPlan {
  std::size_t n = 0, m = 0;
  std::vector<PlanEntry> entries;
  double cost_value = 0.0;

  std::vector<double> row_sums() const {
    std::vector<double> r(n, 0.0);
    for (const auto& e : entries) r[e.i] += e.mass;
    return r;
  }
  std::vector<double> col_sums() const {
    std::vector<double> c(m, 0.0);
    for (const auto& e : entries) c[e.j] += e.mass;
    return c;
  }
  double mass_at(std::size_t i, std::size_t j) const {
    for (const auto& e : entries)
      if (e.i == static_cast<std::int32_t>(i) && e.j == static_cast<std::int32_t>(j))
        return e.mass;
    return 0.0;
  }
};

struct EmdOptions {
  std::size_t max_pairs = 30'000'000;  // documented budget, >= 5000x5000
  std::size_t max_pivots = 0;          // 0 = automatic cap
  double cert_tol = 1e-9;              // certificate tolerance, scaled by max |cost|
};

namespace emd_detail {

// Primal network simplex on the complete bipartite transportation problem.
// Uncapacitated arcs source i -> sink j with cost C[i*m+j]; an artificial
// root ties the initial basis together. Block pivot search; potentials
// maintained exactly on the spanning tree.
class TransportSimplex {
 public:
  TransportSimplex(std::size_t n, std::size_t m, const std::vector<double>& cost,
                   const std::vector<double>& supply, const std::vector<double>& demand,
                   std::size_t max_pivots)
      : n_(n), m_(m), V_(n + m + 1), root_(static_cast<int>(n + m)), cost_(cost) {
    cscale_ = 1.0;
    for (double c : cost_) cscale_ = std::max(cscale_, std::abs(c));
    big_ = (cscale_ + 1.0) * static_cast<double>(V_);
    max_pivots_ = max_pivots ? max_pivots
                             : std::max<std::size_t>(200000, 40 * (n_ + m_));

    parent_.assign(V_, -1);
    first_child_.assign(V_, -1);
    next_sib_.assign(V_, -1);
    prev_sib_.assign(V_, -1);
    depth_.assign(V_, 0);
    flow_.assign(V_, 0.0);
    pi_.assign(V_, 0.0);
    pred_cost_.assign(V_, 0.0);
    pred_dir_.assign(V_, 0);
    pred_real_.assign(V_, -1);
    state_.assign(n_ * m_, 0);  // 0 = lower, 1 = tree

    // initial basis: every node hangs off the root through its artificial arc
    for (std::size_t i = 0; i < n_; ++i) {
      const int v = static_cast<int>(i);
      attach(v, root_);
      depth_[v] = 1;
      flow_[v] = supply[i];
      pred_cost_[v] = big_;
      pred_dir_[v] = +1;  // source -> root
      pi_[v] = big_;
    }
    for (std::size_t j = 0; j < m_; ++j) {
      const int v = static_cast<int>(n_ + j);
      attach(v, root_);
      depth_[v] = 1;
      flow_[v] = demand[j];
      pred_cost_[v] = big_;
      pred_dir_[v] = -1;  // root -> sink
      pi_[v] = -big_;
    }
  }

  void run() {
    const std::size_t arcs = n_ * m_;
    const std::size_t block =
        std::max<std::size_t>(64, static_cast<std::size_t>(std::sqrt(static_cast<double>(arcs))));
    const double eps = 1e-11 * cscale_;

    std::size_t pivots = 0;
    std::size_t pos = 0;
    while (true) {
      // block search for the most negative reduced cost
      int enter = -1;
      double best = -eps;
      std::size_t scanned = 0;
      while (scanned < arcs) {
        const std::size_t stop = std::min(arcs, scanned + block);
        for (; scanned < stop; ++scanned) {
          const std::size_t a = pos;
          pos = pos + 1 == arcs ? 0 : pos + 1;
          if (state_[a]) continue;
          const double rc = cost_[a] - pi_[a / m_] + pi_[n_ + a % m_];
          if (rc < best) {
            best = rc;
            enter = static_cast<int>(a);
          }
        }
        if (enter >= 0) break;
      }
      if (enter < 0) return;  // dual feasible: optimal

      pivot(static_cast<std::size_t>(enter));
      if (++pivots > max_pivots_) throw SolverError("emd: pivot budget exceeded");
    }
  }

  double flow_on(std::size_t arc) const {
    // only tree arcs carry flow; everything else is at its lower bound 0
    const int child = tree_child_of(arc);
    return child >= 0 ? flow_[child] : 0.0;
  }

  // (node, flow, arc) triples for every real tree arc with positive flow
  template <typename Fn>
  void for_each_basic_flow(Fn&& fn) const {
    for (int v = 0; v < static_cast<int>(V_); ++v) {
      if (v == root_ || pred_real_[v] < 0) continue;
      fn(static_cast<std::size_t>(pred_real_[v]), flow_[v]);
    }
  }

  double artificial_flow() const {
    double total = 0.0;
    for (int v = 0; v < static_cast<int>(V_); ++v) {
      if (v == root_ || parent_[v] < 0) continue;
      if (pred_real_[v] < 0) total += std::abs(flow_[v]);
    }
    return total;
  }

  double reduced_cost(std::size_t a) const {
    return cost_[a] - pi_[a / m_] + pi_[n_ + a % m_];
  }
  bool in_tree(std::size_t a) const { return state_[a] != 0; }
  double cost_scale() const { return cscale_; }

 private:
  int tree_child_of(std::size_t arc) const {
    if (!state_[arc]) return -1;
    const int u = static_cast<int>(arc / m_);
    const int v = static_cast<int>(n_ + arc % m_);
    if (parent_[u] == v && pred_real_[u] == static_cast<int>(arc)) return u;
    if (parent_[v] == u && pred_real_[v] == static_cast<int>(arc)) return v;
    return -1;
  }

  void attach(int x, int p) {
    parent_[x] = p;
    prev_sib_[x] = -1;
    next_sib_[x] = first_child_[p];
    if (first_child_[p] >= 0) prev_sib_[first_child_[p]] = x;
    first_child_[p] = x;
  }

  void detach(int x) {
    const int pr = prev_sib_[x], nx = next_sib_[x];
    if (pr >= 0)
      next_sib_[pr] = nx;
    else
      first_child_[parent_[x]] = nx;
    if (nx >= 0) prev_sib_[nx] = pr;
    parent_[x] = -1;
  }

  void pivot(std::size_t a) {
    const int u = static_cast<int>(a / m_);
    const int v = static_cast<int>(n_ + a % m_);

    // apex of the cycle closed by (u, v)
    int x = u, y = v;
    while (x != y) {
      if (depth_[x] >= depth_[y])
        x = parent_[x];
      else
        y = parent_[y];
    }
    const int apex = x;

    // flow circulates u ->(a) v -> ... -> apex -> ... -> u
    double t = std::numeric_limits<double>::infinity();
    int leave = -1;
    bool leave_on_u_side = false;
    for (int z = v; z != apex; z = parent_[z]) {
      if (pred_dir_[z] == -1 && flow_[z] < t) {
        t = flow_[z];
        leave = z;
        leave_on_u_side = false;
      }
    }
    for (int z = u; z != apex; z = parent_[z]) {
      if (pred_dir_[z] == +1 && flow_[z] < t) {
        t = flow_[z];
        leave = z;
        leave_on_u_side = true;
      }
    }
    if (leave < 0) throw SolverError("emd: unbounded pivot (corrupt basis)");

    // augment along the cycle
    for (int z = v; z != apex; z = parent_[z])
      flow_[z] += pred_dir_[z] == +1 ? t : -t;
    for (int z = u; z != apex; z = parent_[z])
      flow_[z] += pred_dir_[z] == +1 ? -t : t;

    // rehang the detached subtree at the entering arc's inside endpoint
    const int q = leave_on_u_side ? u : v;
    const int p = leave_on_u_side ? v : u;
    const int w = leave;

    if (pred_real_[w] >= 0) state_[pred_real_[w]] = 0;
    state_[a] = 1;

    std::vector<int> path;
    for (int z = q;; z = parent_[z]) {
      path.push_back(z);
      if (z == w) break;
    }
    struct Saved {
      double cost, flow;
      signed char dir;
      int real;
    };
    std::vector<Saved> sv(path.size());
    for (std::size_t l = 0; l < path.size(); ++l)
      sv[l] = {pred_cost_[path[l]], flow_[path[l]], pred_dir_[path[l]], pred_real_[path[l]]};

    const double delta = leave_on_u_side ? (pi_[v] + cost_[a]) - pi_[u]
                                         : (pi_[u] - cost_[a]) - pi_[v];

    for (int z : path) detach(z);
    attach(q, p);
    pred_cost_[q] = cost_[a];
    pred_real_[q] = static_cast<int>(a);
    pred_dir_[q] = leave_on_u_side ? +1 : -1;  // u: child->parent, v: parent->child
    flow_[q] = t;
    for (std::size_t l = 0; l + 1 < path.size(); ++l) {
      const int child = path[l + 1];
      attach(child, path[l]);
      pred_cost_[child] = sv[l].cost;
      pred_dir_[child] = static_cast<signed char>(-sv[l].dir);
      flow_[child] = sv[l].flow;
      pred_real_[child] = sv[l].real;
    }

    // refresh potentials and depths over the rehung subtree
    stack_.clear();
    stack_.push_back(q);
    while (!stack_.empty()) {
      const int z = stack_.back();
      stack_.pop_back();
      pi_[z] += delta;
      depth_[z] = depth_[parent_[z]] + 1;
      for (int c = first_child_[z]; c >= 0; c = next_sib_[c]) stack_.push_back(c);
    }
  }

  std::size_t n_, m_, V_;
  int root_;
  const std::vector<double>& cost_;
  double cscale_ = 1.0, big_ = 0.0;
  std::size_t max_pivots_ = 0;

  std::vector<int> parent_, first_child_, next_sib_, prev_sib_, depth_;
  std::vector<double> flow_, pi_, pred_cost_;
  std::vector<signed char> pred_dir_;
  std::vector<int> pred_real_;
  std::vector<char> state_;
  std::vector<int> stack_;
};

}  // namespace emd_detail

// Exact optimal transport between two discrete measures. Solves the
// transportation problem by network simplex and certifies the result by
// dual feasibility plus complementary slackness before returning.
inline TransportPlan emd(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                         const CostSpec& spec, const EmdOptions& opts = {}) {
  mu.validate();
  nu.validate();
  if (mu.points.cols() != nu.points.cols())
    throw DimensionError("emd: point dimensions differ");
  const std::size_t n = mu.size(), m = nu.size();
  if (n * m > opts.max_pairs)
    throw SolverError("emd: instance exceeds the pair budget");
  spec.validate(mu.points.cols());

  // dense cost matrix, row-major over (i, j)
  std::vector<double> cost_mat(n * m);
  parallel_for(n, [&](std::size_t i) {
    const auto x = mu.points.row_span(i);
    for (std::size_t j = 0; j < m; ++j)
      cost_mat[i * m + j] = cost(spec, x, nu.points.row_span(j));
  });

  // force exact mass balance; the residual rounding lands on the root arcs
  std::vector<double> supply = mu.weights;
  std::vector<double> demand = nu.weights;
  double sa = 0.0, sb = 0.0;
  for (double w : supply) sa += w;
  for (double w : demand) sb += w;
  const double ratio = sa / sb;
  for (auto& w : demand) w *= ratio;

  emd_detail::TransportSimplex simplex(n, m, cost_mat, supply, demand, opts.max_pivots);
  simplex.run();

  const double tol = opts.cert_tol * std::max(1.0, simplex.cost_scale());
  if (simplex.artificial_flow() > tol)
    throw SolverError("emd: infeasible (artificial flow remains)");

  TransportPlan plan;
  plan.n = n;
  plan.m = m;
  simplex.for_each_basic_flow([&](std::size_t arc, double f) {
    if (f > 0.0)
      plan.entries.push_back({static_cast<std::int32_t>(arc / m),
                              static_cast<std::int32_t>(arc % m), f});
  });
  std::sort(plan.entries.begin(), plan.entries.end(), [](const PlanEntry& a, const PlanEntry& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  for (const auto& e : plan.entries)
    plan.cost_value += e.mass * cost_mat[static_cast<std::size_t>(e.i) * m + e.j];

  // certificate: dual feasibility everywhere, complementary slackness on
  // the support, and marginals matching the inputs
  for (std::size_t a = 0; a < n * m; ++a) {
    const double rc = simplex.reduced_cost(a);
    if (rc < -tol) throw SolverError("emd: certificate failed (dual infeasible arc)");
  }
  for (const auto& e : plan.entries) {
    const std::size_t a = static_cast<std::size_t>(e.i) * m + e.j;
    if (std::abs(simplex.reduced_cost(a)) > tol)
      throw SolverError("emd: certificate failed (slackness violated)");
  }
  const auto rows = plan.row_sums();
  const auto cols = plan.col_sums();
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(rows[i] - supply[i]) > 1e-9)
      throw SolverError("emd: certificate failed (source marginal)");
  for (std::size_t j = 0; j < m; ++j)
    if (std::abs(cols[j] - demand[j]) > 1e-9)
      throw SolverError("emd: certificate failed (target marginal)");

  return plan;
}

// Wasserstein-1 evaluation: draw k * M generated points, couple the uniform
// empirical measures, return the exact plan cost under the euclidean ground
// metric.
inline double w1_eval(const std::function<Tensor(std::size_t)>& generated_sampler,
                      const Tensor& dataset, std::size_t oversample_k = 10,
                      const EmdOptions& opts = {}) {
  if (oversample_k < 1) throw DimensionError("w1_eval: oversample_k must be >= 1");
  const std::size_t m = dataset.rows();
  if (m == 0) throw DimensionError("w1_eval: empty dataset");
  Tensor generated = generated_sampler(oversample_k * m);
  if (generated.cols() != dataset.cols())
    throw DimensionError("w1_eval: generated dimension mismatch");
  const auto mu = DiscreteMeasure::uniform(std::move(generated));
  const auto nu = DiscreteMeasure::uniform(dataset);
  return emd(mu, nu, euclidean_cost(), opts).cost_value;
}

// Mean absolute deviation of per-real assignment counts from the
// oversampling factor k (the mode-collapse score; 0 means a perfect spread
// of k generated points per real).
inline double assignment_variance(std::span<const std::int64_t> counts, std::int64_t k) {
  if (counts.empty()) throw DimensionError("assignment_variance: empty counts");
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  const std::int64_t m = static_cast<std::int64_t>(counts.size());
  if (total != k * m)
    throw DimensionError("assignment_variance: counts must sum to k*M");
  double acc = 0.0;
  for (auto c : counts)
    acc += std::sqrt(static_cast<double>((c - k) * (c - k)));
  return acc / static_cast<double>(m);
}

// Per-real counts of nearest-real assignments under the plain cost
// (zero potential), as the variance metric prescribes.
inline std::vector<std::int64_t> nearest_counts(const Tensor& generated,
                                                const Tensor& reals, const CostSpec& spec,
                                                unsigned threads = 0) {
  RealSet rs(reals);
  rs.pin_cache();
  return batch_assign(generated, rs, spec, threads).counts;
}

}  // namespace ota
