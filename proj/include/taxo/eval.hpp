// Ancestor-F1 scoring, BFS subtree extraction, and the hierarchy
// completion / construction protocols.
#pragma once

#include "taxo/core.hpp"
#include "taxo/inference.hpp"
#include "taxo/training.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

namespace taxo {

struct EvalReport {
  double precision = 0, recall = 0, f1 = 0;
  std::size_t predicted_pairs = 0, gold_pairs = 0, intersection = 0;
  std::string task;
  int height = 0;
};

/// All (descendant, proper ancestor) pairs, pseudo-root excluded.
inline std::set<std::pair<int, int>> ancestor_pairs(const Taxonomy& t) {
  std::set<std::pair<int, int>> out;
  for (int n = 1; n <= t.size(); ++n)
    for (int a = t.parent(n); a != 0; a = t.parent(a)) out.emplace(n, a);
  return out;
}

namespace detail {

inline EvalReport score_pairs(const std::set<std::pair<int, int>>& pred,
                              const std::set<std::pair<int, int>>& gold,
                              bool identical_trees) {
  EvalReport r;
  r.predicted_pairs = pred.size();
  r.gold_pairs = gold.size();
  for (const auto& p : pred) r.intersection += gold.count(p);
  if (pred.empty() && gold.empty()) {
    // both stars: the ratio is 0/0, so fall back to tree identity
    r.precision = r.recall = r.f1 = identical_trees ? 1.0 : 0.0;
    return r;
  }
  r.precision = pred.empty() ? 0.0 : static_cast<double>(r.intersection) / pred.size();
  r.recall = gold.empty() ? 0.0 : static_cast<double>(r.intersection) / gold.size();
  if (r.precision + r.recall > 0)
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

}  // namespace detail

inline EvalReport ancestor_f1(const Taxonomy& pred, const Taxonomy& gold) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("ancestor_f1: node-set mismatch");
  return detail::score_pairs(ancestor_pairs(pred), ancestor_pairs(gold), pred == gold);
}

/// Nodes within h BFS levels of `root` (root at level 1), densely
/// reindexed; the subtree root becomes a child of the pseudo-root.
/// `index_map[new_id] = old_id` is returned alongside.
struct Subtree {
  Dataset data;
  Taxonomy tree;
  std::vector<int> index_map;  // 1-based new id -> old id
};

inline Subtree bfs_subtree(const Dataset& data, const Taxonomy& full, int root, int h) {
  if (root < 1 || root > full.size()) throw std::invalid_argument("bfs_subtree: root not found");
  if (h < 1) throw std::invalid_argument("bfs_subtree: height must be >= 1");
  std::vector<int> nodes{root};
  std::vector<int> level{1};
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (level[i] >= h) continue;
    for (int c : full.children(nodes[i])) {
      nodes.push_back(c);
      level.push_back(level[i] + 1);
    }
  }
  Subtree out;
  out.index_map.assign(nodes.size() + 1, 0);
  std::vector<int> new_of(static_cast<std::size_t>(full.size()) + 1, 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    out.index_map[i + 1] = nodes[i];
    new_of[static_cast<std::size_t>(nodes[i])] = static_cast<int>(i) + 1;
  }
  std::vector<int> parent(nodes.size(), 0);
  for (std::size_t i = 1; i < nodes.size(); ++i)
    parent[i] = new_of[static_cast<std::size_t>(full.parent(nodes[i]))];
  out.tree = Taxonomy(std::move(parent));
  out.data.image_dim = data.image_dim;
  out.data.word_dim = data.word_dim;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    LabelItem it = data.item(nodes[i]);
    it.id = static_cast<int>(i) + 1;
    out.data.items.push_back(std::move(it));
  }
  return out;
}

// ---- model fitting pipeline ----------------------------------------------

struct FitOptions {
  int layers = 6;
  double lambda = 1e-3;
  std::size_t pc_v1_top_k = 0;  // 0 = all
  std::array<bool, kNumBlocks> enabled_blocks{true, true, true, true, true, true};
  TrainConfig train;
};

namespace detail {

inline std::vector<double> finite_entries(const Mat& m) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (!std::isnan(m(i, j))) out.push_back(m(i, j));
  return out;
}

inline BinSpec bins_or_default(std::vector<double> values, const std::string& name) {
  if (values.size() >= 19) return build_bins(std::move(values), name);
  // block never fires with real values; any valid edges will do
  std::vector<double> fallback;
  for (int i = 0; i < 19; ++i) fallback.push_back(-1.0 + static_cast<double>(i) / 9.0);
  return build_bins(std::move(fallback), name);
}

}  // namespace detail

/// Fit projections, bins, alpha and (via EM) the layer weights on the
/// training trees. Nothing about held-out data is consulted.
inline Model fit_model(const std::vector<TrainInstance>& instances, const FitOptions& opts,
                       std::vector<TrainLogRow>* train_log = nullptr) {
  if (instances.empty()) throw std::invalid_argument("fit_model: no training data");
  Model model = Model::zero(opts.layers);
  model.pc_v1_top_k = opts.pc_v1_top_k;
  model.enabled_blocks = opts.enabled_blocks;

  std::vector<std::pair<Vec, Vec>> img_word_pairs, word_word_pairs;
  for (const TrainInstance& inst : instances) {
    const Dataset& data = *inst.data;
    const Vec fallback = global_fallback_variance(data);
    for (int c = 1; c <= inst.gold->size(); ++c) {
      const int p = inst.gold->parent(c);
      if (p == 0) continue;
      const LabelItem& child = data.item(c);
      const LabelItem& parent = data.item(p);
      if (!parent.has_word()) continue;
      if (child.has_images()) {
        const GaussianSummary g = fit_gaussian(child.image_vecs, kVarianceFloor, fallback);
        img_word_pairs.emplace_back(g.mean, *parent.word_vec);
      }
      if (child.has_word()) word_word_pairs.emplace_back(*child.word_vec, *parent.word_vec);
    }
  }
  if (!img_word_pairs.empty())
    model.proj_image_word = learn_projection(img_word_pairs, opts.lambda).phi;
  if (!word_word_pairs.empty())
    model.proj_word_word = learn_projection(word_word_pairs, opts.lambda).phi;

  std::array<std::vector<double>, kNumBinnedBlocks> block_values;
  for (const TrainInstance& inst : instances) {
    const FeatureContext ctx = build_feature_context(model, *inst.data);
    const Mat* mats[kNumBinnedBlocks] = {&ctx.vis, &ctx.pcv1, &ctx.pcv2, &ctx.st1, &ctx.pct1};
    for (int b = 0; b < kNumBinnedBlocks; ++b) {
      std::vector<double> vals = detail::finite_entries(*mats[b]);
      auto& dst = block_values[static_cast<std::size_t>(b)];
      dst.insert(dst.end(), vals.begin(), vals.end());
    }
  }
  for (int b = 0; b < kNumBinnedBlocks; ++b)
    model.bins[static_cast<std::size_t>(b)] =
        detail::bins_or_default(std::move(block_values[static_cast<std::size_t>(b)]),
                                kBlockNames[b]);

  estimate_alpha(model, instances);
  const std::vector<TrainLogRow> log = em_train(model, instances, opts.train);
  if (train_log) *train_log = log;
  return model;
}

// ---- protocols -----------------------------------------------------------

/// Hierarchy completion: hold out a fraction of nodes, train on the
/// re-parented remainder, Gibbs-sample the held-out parents with the
/// training edges frozen, decode, and score pairs touching test nodes.
inline EvalReport run_completion(const Dataset& data, const Taxonomy& gold,
                                 const FitOptions& opts, std::uint64_t split_seed,
                                 double test_fraction = 0.3,
                                 const SamplerConfig& test_sampler = {}) {
  const int n = gold.size();
  if (n < 10 && test_fraction > 0)
    throw std::invalid_argument("run_completion: gold tree too small");

  Rng rng(split_seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 1);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(test_fraction * n);
  std::vector<bool> is_test(static_cast<std::size_t>(n) + 1, false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[static_cast<std::size_t>(order[i])] = true;

  // nearest retained ancestor, for re-parenting orphaned training nodes
  auto retained_ancestor = [&](int node) {
    int a = gold.parent(node);
    while (a != 0 && is_test[static_cast<std::size_t>(a)]) a = gold.parent(a);
    return a;
  };

  EvalReport report;
  report.task = "completion";
  if (n_test == 0) {
    report.precision = report.recall = report.f1 = 1.0;
    return report;
  }

  // training view: retained nodes, densely reindexed
  Dataset train_data;
  train_data.image_dim = data.image_dim;
  train_data.word_dim = data.word_dim;
  std::vector<int> new_of(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> old_of{0};
  for (int i = 1; i <= n; ++i) {
    if (is_test[static_cast<std::size_t>(i)]) continue;
    LabelItem it = data.item(i);
    it.id = static_cast<int>(old_of.size());
    new_of[static_cast<std::size_t>(i)] = it.id;
    old_of.push_back(i);
    train_data.items.push_back(std::move(it));
  }
  std::vector<int> train_parent(train_data.size());
  for (std::size_t i = 1; i < old_of.size(); ++i)
    train_parent[i - 1] = new_of[static_cast<std::size_t>(retained_ancestor(old_of[i]))];
  const Taxonomy train_gold(std::move(train_parent));

  TrainInstance inst{&train_data, &train_gold};
  Model model = fit_model({inst}, opts);

  // test phase on the full node set: frozen training edges, free test nodes
  model.bind_alpha(data.size());
  const FeatureContext ctx = build_feature_context(model, data);
  std::vector<int> init_parent(static_cast<std::size_t>(n), 0);
  std::vector<int> test_nodes;
  for (int i = 1; i <= n; ++i) {
    if (is_test[static_cast<std::size_t>(i)])
      test_nodes.push_back(i);
    else
      init_parent[static_cast<std::size_t>(i - 1)] = retained_ancestor(i);
  }
  SamplerConfig scfg = test_sampler;
  scfg.init = Init::kGiven;
  scfg.given = Taxonomy(std::move(init_parent));
  scfg.resample_set = test_nodes;
  const MarginalTable marg = run_chain(model, ctx, scfg);

  // decode with training edges pinned; MST repairs conflicts among
  // test-node argmaxes
  MarginalTable pinned = marg;
  for (int i = 1; i <= n; ++i) {
    if (is_test[static_cast<std::size_t>(i)]) continue;
    pinned.p.row(i - 1).setZero();
    pinned.p(i - 1, retained_ancestor(i)) = 1.0;
  }
  const Taxonomy pred = mst_decode(pinned);

  auto touches_test = [&](const std::pair<int, int>& pr) {
    return is_test[static_cast<std::size_t>(pr.first)] || is_test[static_cast<std::size_t>(pr.second)];
  };
  std::set<std::pair<int, int>> pred_pairs, gold_pairs;
  for (const auto& pr : ancestor_pairs(pred))
    if (touches_test(pr)) pred_pairs.insert(pr);
  for (const auto& pr : ancestor_pairs(gold))
    if (touches_test(pr)) gold_pairs.insert(pr);
  EvalReport scored = detail::score_pairs(pred_pairs, gold_pairs, pred == gold);
  scored.task = "completion";
  return scored;
}

/// Hierarchy construction: fit on the training trees, build the test tree
/// from scratch, score against the held-out gold.
inline EvalReport run_construction(const std::vector<TrainInstance>& train,
                                   const Dataset& test_data, const Taxonomy& test_gold,
                                   const FitOptions& opts,
                                   const SamplerConfig& test_sampler = {}) {
  Model model = fit_model(train, opts);
  model.bind_alpha(test_data.size());
  const FeatureContext ctx = build_feature_context(model, test_data);
  SamplerConfig scfg = test_sampler;
  scfg.init = Init::kStar;
  scfg.resample_set.clear();
  const MarginalTable marg = run_chain(model, ctx, scfg);
  const Taxonomy pred = mst_decode(marg);
  EvalReport r = ancestor_f1(pred, test_gold);
  r.task = "construction";
  return r;
}

}  // namespace taxo
