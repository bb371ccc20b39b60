// Structure scoring, Gibbs sampling over parent assignments, marginal
// accumulation, and maximum-spanning-arborescence decoding.
#pragma once

#include "taxo/core.hpp"
#include "taxo/features.hpp"

#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace taxo {

using Rng = std::mt19937_64;

/// Estimated p(z_n = m) per node, from averaged samples.
struct MarginalTable {
  Mat p;  // N rows, N+1 columns (column 0 = pseudo-root)
  std::size_t samples = 0;
  std::size_t burn_in = 0;

  int size() const { return static_cast<int>(p.rows()); }
  double at(int n, int m) const { return p(n - 1, m); }
};

enum class Init { kStar, kRandomTree, kGiven };

struct SamplerConfig {
  std::size_t burn_in = 1000;
  std::size_t samples = 5000;
  std::uint64_t seed = 0;
  Init init = Init::kStar;
  Taxonomy given;                 // used when init == kGiven
  std::vector<int> resample_set;  // empty = resample every node
};

/// log g_w for the edge (n -> child) in tree t: depth-clamped layer
/// weights dotted with the assembled features.
inline double edge_score(const Model& model, const FeatureContext& ctx, const Taxonomy& t,
                         int n, int child) {
  std::vector<int> sibs;
  for (int c : t.children(n))
    if (c != child) sibs.push_back(c);
  const SparseFeatures f = assemble_sparse(ctx, n, child, sibs);
  return sparse_dot(model.weights_for_depth(t.depth(child)), f, model.layout.bias_offset);
}

/// Collapsed log joint up to the structure-independent normalizer:
/// sum over candidate parents of lgamma(q + alpha) plus all edge scores.
inline double log_joint(const Model& model, const FeatureContext& ctx, const Taxonomy& t) {
  const int n = t.size();
  if (model.alpha.size() != static_cast<std::size_t>(n) + 1)
    throw std::invalid_argument("log_joint: model alpha not bound to dataset size");
  double acc = 0;
  for (int m = 0; m <= n; ++m)
    acc += std::lgamma(t.child_count(m) + model.alpha[static_cast<std::size_t>(m)]);
  for (int c = 1; c <= n; ++c) acc += edge_score(model, ctx, t, t.parent(c), c);
  return acc;
}

namespace detail {

inline double edge_g(const Model& model, const FeatureContext& ctx, int parent, int child,
                     std::span<const int> sibs, int child_depth) {
  const SparseFeatures f = assemble_sparse(ctx, parent, child, sibs);
  return sparse_dot(model.weights_for_depth(child_depth), f, model.layout.bias_offset);
}

}  // namespace detail

struct ParentWeights {
  std::vector<int> candidates;
  std::vector<double> log_w;  // unnormalized conditional, log scale
};

/// Unnormalized log conditional of z_n over the tree-safe candidate set
/// {0..N} minus n and its descendants. Depth-weight changes inside n's
/// subtree are included, so the conditional is exact for the collapsed
/// joint, not just the sibling-ratio shortcut.
inline ParentWeights parent_log_weights(const Model& model, const FeatureContext& ctx,
                                        const Taxonomy& t, int n) {
  const int total = t.size();
  assert(n >= 1 && n <= total);
  const std::set<int> below = t.descendants(n);

  // Subtree-internal edges keep their features but change layer with the
  // attachment depth; pre-dot them against every layer once.
  struct SubEdge {
    int rel_depth;             // child depth minus n's depth
    std::vector<double> dots;  // per layer
  };
  std::vector<SubEdge> sub_edges;
  std::vector<int> sib_buf;
  for (int c : below) {
    const int p = t.parent(c);
    sib_buf.clear();
    for (int s : t.children(p))
      if (s != c) sib_buf.push_back(s);
    const SparseFeatures f = assemble_sparse(ctx, p, c, sib_buf);
    SubEdge e;
    e.rel_depth = t.depth(c) - t.depth(n);
    e.dots.resize(model.weights.size());
    for (std::size_t l = 0; l < model.weights.size(); ++l)
      e.dots[l] = sparse_dot(model.weights[l], f, model.layout.bias_offset);
    sub_edges.push_back(std::move(e));
  }
  auto subtree_score = [&](int n_depth) {
    double acc = 0;
    for (const SubEdge& e : sub_edges)
      acc += e.dots[static_cast<std::size_t>(model.layer_for_depth(n_depth + e.rel_depth))];
    return acc;
  };

  ParentWeights out;
  std::vector<int> sibs, with_n;
  for (int m = 0; m <= total; ++m) {
    if (m == n || below.count(m)) continue;
    sibs.clear();
    for (int c : t.children(m))
      if (c != n) sibs.push_back(c);
    const double alpha_m = model.alpha[static_cast<std::size_t>(m)];
    const int child_depth = t.depth(m) + 1;
    double lw = std::log(static_cast<double>(sibs.size()) + alpha_m);
    // sibling-set change for m's existing children
    for (std::size_t i = 0; i < sibs.size(); ++i) {
      const int c = sibs[i];
      with_n.clear();
      for (std::size_t j = 0; j < sibs.size(); ++j)
        if (j != i) with_n.push_back(sibs[j]);
      const double without = detail::edge_g(model, ctx, m, c, with_n, child_depth);
      with_n.push_back(n);
      const double with = detail::edge_g(model, ctx, m, c, with_n, child_depth);
      lw += with - without;
    }
    lw += detail::edge_g(model, ctx, m, n, sibs, child_depth);
    lw += subtree_score(child_depth);
    out.candidates.push_back(m);
    out.log_w.push_back(lw);
  }
  return out;
}

/// One Gibbs step for z_n: draws from the exact conditional and
/// reattaches n. Returns the drawn parent. When `conditional` is given it
/// receives the normalized conditional over parents 0..N (zero elsewhere),
/// for Rao-Blackwellized marginal accumulation.
inline int sample_parent(const Model& model, const FeatureContext& ctx, Taxonomy& t, int n,
                         Rng& rng, Vec* conditional = nullptr) {
  const int old_parent = t.parent(n);
  ParentWeights w = parent_log_weights(model, ctx, t, n);
  std::vector<int>& candidates = w.candidates;
  std::vector<double>& log_w = w.log_w;

  double best = -std::numeric_limits<double>::infinity();
  for (double v : log_w) best = std::max(best, v);
  double total_w = 0;
  for (double& v : log_w) {
    v = std::exp(v - best);
    total_w += v;
  }
  if (conditional) {
    *conditional = Vec::Zero(t.size() + 1);
    for (std::size_t i = 0; i < candidates.size(); ++i)
      (*conditional)[candidates[i]] = log_w[i] / total_w;
  }
  std::uniform_real_distribution<double> unif(0.0, total_w);
  double r = unif(rng);
  int chosen = candidates.back();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    r -= log_w[i];
    if (r <= 0) {
      chosen = candidates[i];
      break;
    }
  }
  if (chosen != old_parent) t.structure_op(n, chosen);
  assert(t.valid());
  return chosen;
}

/// Normalized per-candidate conditional for z_n, in candidate order
/// matching {0..N} \ ({n} + descendants). Test/diagnostic companion of
/// sample_parent; shares its scoring path.
inline std::vector<std::pair<int, double>> parent_conditional(const Model& model,
                                                              const FeatureContext& ctx,
                                                              Taxonomy t, int n) {
  // Reuse sample_parent's math by brute force over candidates via log_joint.
  const std::set<int> below = t.descendants(n);
  std::vector<std::pair<int, double>> out;
  double best = -std::numeric_limits<double>::infinity();
  for (int m = 0; m <= t.size(); ++m) {
    if (m == n || below.count(m)) continue;
    Taxonomy u = t;
    u.structure_op(n, m);
    const double lj = log_joint(model, ctx, u);
    out.emplace_back(m, lj);
    best = std::max(best, lj);
  }
  double z = 0;
  for (auto& [m, lj] : out) {
    lj = std::exp(lj - best);
    z += lj;
  }
  for (auto& [m, lj] : out) lj /= z;
  return out;
}

inline Taxonomy random_tree(int n, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 1);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> parent(static_cast<std::size_t>(n), 0);
  std::vector<int> placed{0};
  for (int node : order) {
    std::uniform_int_distribution<std::size_t> pick(0, placed.size() - 1);
    parent[static_cast<std::size_t>(node - 1)] = placed[pick(rng)];
    placed.push_back(node);
  }
  return Taxonomy(std::move(parent));
}

/// Run one seeded chain; burn-in sweeps, then sample sweeps accumulating
/// parent indicators. `observe` (optional) sees the state after every
/// retained sweep.
inline MarginalTable run_chain(const Model& model, const FeatureContext& ctx,
                               const SamplerConfig& cfg,
                               const std::function<void(const Taxonomy&)>& observe = {}) {
  const int n = static_cast<int>(ctx.data->size());
  if (n == 0) throw std::invalid_argument("run_chain: empty dataset");
  if (model.alpha.size() != static_cast<std::size_t>(n) + 1)
    throw std::invalid_argument("run_chain: model alpha not bound to dataset size");
  Rng rng(cfg.seed);
  Taxonomy t;
  switch (cfg.init) {
    case Init::kStar: t = Taxonomy::star(n); break;
    case Init::kRandomTree: t = random_tree(n, rng); break;
    case Init::kGiven:
      if (cfg.given.size() != n) throw std::invalid_argument("run_chain: init tree size mismatch");
      t = cfg.given;
      break;
  }
  std::vector<int> scan = cfg.resample_set;
  if (scan.empty()) {
    scan.resize(static_cast<std::size_t>(n));
    std::iota(scan.begin(), scan.end(), 1);
  }
  std::sort(scan.begin(), scan.end());

  std::vector<bool> scanned(static_cast<std::size_t>(n) + 1, false);
  for (int node : scan) scanned[static_cast<std::size_t>(node)] = true;

  MarginalTable table;
  table.p = Mat::Zero(n, n + 1);
  table.burn_in = cfg.burn_in;
  Vec conditional;
  for (std::size_t sweep = 0; sweep < cfg.burn_in + cfg.samples; ++sweep) {
    const bool record = sweep >= cfg.burn_in;
    for (int node : scan) {
      // Rao-Blackwellized rows: average the exact conditional at each
      // node's update instead of the drawn indicator
      sample_parent(model, ctx, t, node, rng, record ? &conditional : nullptr);
      if (record) table.p.row(node - 1) += conditional;
    }
    if (!record) continue;
    for (int node = 1; node <= n; ++node)
      if (!scanned[static_cast<std::size_t>(node)])
        table.p(node - 1, t.parent(node)) += 1.0;
    ++table.samples;
    if (observe) observe(t);
  }
  if (table.samples > 0) table.p /= static_cast<double>(table.samples);
  return table;
}

/// Count-weighted merge of independently seeded chains.
inline MarginalTable merge_marginals(const std::vector<MarginalTable>& tables) {
  if (tables.empty()) throw std::invalid_argument("merge_marginals: no tables");
  MarginalTable out;
  out.p = Mat::Zero(tables.front().p.rows(), tables.front().p.cols());
  for (const MarginalTable& t : tables) {
    out.p += t.p * static_cast<double>(t.samples);
    out.samples += t.samples;
    out.burn_in += t.burn_in;
  }
  if (out.samples > 0) out.p /= static_cast<double>(out.samples);
  return out;
}

namespace detail {

// Recursive Chu-Liu/Edmonds on a dense weight matrix. w(m, v) is the
// weight of edge m -> v over node ids 0..n (0 = root). Returns the best
// incoming edge source per node. Ties go to the smaller source id.
inline std::vector<int> chu_liu_edmonds(Mat w) {
  const int n = static_cast<int>(w.rows());  // nodes 0..n-1, 0 is root
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<int> best_in(static_cast<std::size_t>(n), -1);
  for (int v = 1; v < n; ++v) {
    double best = kNegInf;
    for (int u = 0; u < n; ++u) {
      if (u == v) continue;
      if (w(u, v) > best) {
        best = w(u, v);
        best_in[static_cast<std::size_t>(v)] = u;
      }
    }
    if (best_in[static_cast<std::size_t>(v)] < 0)
      throw std::invalid_argument("chu_liu_edmonds: node with no incoming edge");
  }

  // find a cycle among the greedy picks
  std::vector<int> color(static_cast<std::size_t>(n), 0);
  std::vector<int> cycle;
  color[0] = 2;
  for (int start = 1; start < n && cycle.empty(); ++start) {
    if (color[static_cast<std::size_t>(start)]) continue;
    int v = start;
    while (v != 0 && color[static_cast<std::size_t>(v)] == 0) {
      color[static_cast<std::size_t>(v)] = 1;
      v = best_in[static_cast<std::size_t>(v)];
    }
    if (v != 0 && color[static_cast<std::size_t>(v)] == 1) {
      int c = v;
      do {
        cycle.push_back(c);
        c = best_in[static_cast<std::size_t>(c)];
      } while (c != v);
    }
    int u = start;
    while (u != 0 && color[static_cast<std::size_t>(u)] == 1) {
      color[static_cast<std::size_t>(u)] = 2;
      u = best_in[static_cast<std::size_t>(u)];
    }
  }
  if (cycle.empty()) return best_in;

  std::vector<bool> in_cycle(static_cast<std::size_t>(n), false);
  for (int v : cycle) in_cycle[static_cast<std::size_t>(v)] = true;

  // contract the cycle into a single node (reuse cycle.front()'s slot)
  const int super = cycle.front();
  std::vector<int> keep;  // old ids of the contracted graph, in order
  for (int v = 0; v < n; ++v)
    if (!in_cycle[static_cast<std::size_t>(v)] || v == super) keep.push_back(v);
  const int k = static_cast<int>(keep.size());
  std::vector<int> new_id(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < k; ++i) new_id[static_cast<std::size_t>(keep[static_cast<std::size_t>(i)])] = i;
  const int super_new = new_id[static_cast<std::size_t>(super)];

  Mat wc = Mat::Constant(k, k, kNegInf);
  // which original endpoint each contracted edge stands for
  std::vector<std::vector<int>> into_cycle(static_cast<std::size_t>(k), std::vector<int>());
  std::vector<int> enter_via(static_cast<std::size_t>(k), -1);   // u -> super: cycle node entered
  std::vector<int> leave_via(static_cast<std::size_t>(k), -1);   // super -> u: cycle node left from
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      if (u == v || w(u, v) == kNegInf) continue;
      const bool uc = in_cycle[static_cast<std::size_t>(u)];
      const bool vc = in_cycle[static_cast<std::size_t>(v)];
      if (!uc && !vc) {
        wc(new_id[static_cast<std::size_t>(u)], new_id[static_cast<std::size_t>(v)]) = w(u, v);
      } else if (!uc && vc) {
        const double adj = w(u, v) - w(best_in[static_cast<std::size_t>(v)], v);
        const int nu = new_id[static_cast<std::size_t>(u)];
        if (adj > wc(nu, super_new)) {
          wc(nu, super_new) = adj;
          enter_via[static_cast<std::size_t>(nu)] = v;
        }
      } else if (uc && !vc) {
        const int nv = new_id[static_cast<std::size_t>(v)];
        if (w(u, v) > wc(super_new, nv)) {
          wc(super_new, nv) = w(u, v);
          leave_via[static_cast<std::size_t>(nv)] = u;
        }
      }
    }
  }

  std::vector<int> sub = chu_liu_edmonds(std::move(wc));

  std::vector<int> result(static_cast<std::size_t>(n), -1);
  // edges fully outside the cycle, and edges leaving the super node
  for (int v = 1; v < k; ++v) {
    const int old_v = keep[static_cast<std::size_t>(v)];
    if (v == super_new) continue;
    const int src = sub[static_cast<std::size_t>(v)];
    result[static_cast<std::size_t>(old_v)] =
        (src == super_new) ? leave_via[static_cast<std::size_t>(v)]
                           : keep[static_cast<std::size_t>(src)];
  }
  // the edge entering the super node breaks the cycle at its entry point
  const int entry_src_new = sub[static_cast<std::size_t>(super_new)];
  const int entry = enter_via[static_cast<std::size_t>(entry_src_new)];
  for (int v : cycle)
    result[static_cast<std::size_t>(v)] = best_in[static_cast<std::size_t>(v)];
  result[static_cast<std::size_t>(entry)] = keep[static_cast<std::size_t>(entry_src_new)];
  return result;
}

}  // namespace detail

inline constexpr double kMarginalEps = 1e-12;

/// Maximum spanning arborescence rooted at the pseudo-root, with edge
/// weight log(marginal + eps).
inline Taxonomy mst_decode(const MarginalTable& marginals) {
  const int n = marginals.size();
  Mat w = Mat::Constant(n + 1, n + 1, -std::numeric_limits<double>::infinity());
  for (int v = 1; v <= n; ++v)
    for (int m = 0; m <= n; ++m)
      if (m != v) w(m, v) = std::log(marginals.at(v, m) + kMarginalEps);
  const std::vector<int> pick = detail::chu_liu_edmonds(std::move(w));
  std::vector<int> parent(static_cast<std::size_t>(n));
  for (int v = 1; v <= n; ++v) parent[static_cast<std::size_t>(v - 1)] = pick[static_cast<std::size_t>(v)];
  return Taxonomy(std::move(parent));
}

}  // namespace taxo
