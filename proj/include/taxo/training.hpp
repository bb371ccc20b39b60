// EM training of the layer-wise weights: gold feature sums against
// sampled expectations, one ascent step per EM iteration, plus
// Dirichlet-prior estimation from gold trees.
#pragma once

#include "taxo/core.hpp"
#include "taxo/features.hpp"
#include "taxo/inference.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace taxo {

struct TrainConfig {
  int em_iterations = 200;
  double initial_learning_rate = 0.1;  // divided by 10 every 100 EM iterations
  SamplerConfig sampler{/*burn_in=*/30, /*samples=*/50};
  std::uint64_t seed = 0;
  // stop when the surrogate objective has not improved by plateau_tol over
  // this many iterations; 0 disables
  int plateau_window = 0;
  double plateau_tol = 1e-6;

  double learning_rate(int iteration) const {
    // divide rather than multiply by a negative power so the decades land
    // on exact 0.1/0.01/0.001 doubles
    return initial_learning_rate / std::pow(10.0, iteration / 100);
  }
};

struct TrainLogRow {
  int iteration = 0;
  double learning_rate = 0;
  double surrogate = 0;               // gold edge scores + lgamma terms
  std::vector<double> grad_norms;     // per layer
};

struct TrainInstance {
  const Dataset* data = nullptr;
  const Taxonomy* gold = nullptr;
};

/// Per-layer sums of assembled feature vectors over gold edges, grouped
/// by the (clamped) gold depth of the child.
inline std::vector<Vec> gold_feature_sums(const Model& model, const FeatureContext& ctx,
                                          const Taxonomy& gold) {
  std::vector<Vec> sums(model.weights.size(), Vec::Zero(model.layout.dim));
  for (int c = 1; c <= gold.size(); ++c) {
    const int p = gold.parent(c);
    std::vector<int> sibs;
    for (int s : gold.children(p))
      if (s != c) sibs.push_back(s);
    const FeatureVector f = assemble(ctx, p, c, sibs);
    sums[static_cast<std::size_t>(model.layer_for_depth(gold.depth(c)))] += f.values;
  }
  return sums;
}

/// Monte-Carlo estimate of the per-layer expected feature sums under the
/// current model, attributing each edge to the sampled depth of the child.
inline std::vector<Vec> expected_feature_sums(const Model& model, const FeatureContext& ctx,
                                              const SamplerConfig& cfg) {
  std::vector<Vec> sums(model.weights.size(), Vec::Zero(model.layout.dim));
  std::size_t sweeps = 0;
  run_chain(model, ctx, cfg, [&](const Taxonomy& t) {
    for (int c = 1; c <= t.size(); ++c) {
      const int p = t.parent(c);
      std::vector<int> sibs;
      for (int s : t.children(p))
        if (s != c) sibs.push_back(s);
      const FeatureVector f = assemble(ctx, p, c, sibs);
      sums[static_cast<std::size_t>(model.layer_for_depth(t.depth(c)))] += f.values;
    }
    ++sweeps;
  });
  for (Vec& v : sums) v /= static_cast<double>(sweeps);
  return sums;
}

/// delta w_l = gold sums minus expected sums.
inline std::vector<Vec> gradient(const Model& model, const FeatureContext& ctx,
                                 const Taxonomy& gold, const SamplerConfig& cfg) {
  std::vector<Vec> g = gold_feature_sums(model, ctx, gold);
  const std::vector<Vec> e = expected_feature_sums(model, ctx, cfg);
  for (std::size_t l = 0; l < g.size(); ++l) g[l] -= e[l];
  return g;
}

/// Gold-structure score under the current weights; cheap stand-in for the
/// (intractable) normalized log-likelihood, logged per iteration.
inline double surrogate_objective(const Model& model, const FeatureContext& ctx,
                                  const Taxonomy& gold) {
  return log_joint(model, ctx, gold);
}

/// Depth-bucketed Dirichlet estimates: 1 + mean observed child count per
/// gold depth; the pseudo-root gets 1 + mean root fan-out.
inline void estimate_alpha(Model& model, const std::vector<TrainInstance>& instances) {
  if (instances.empty()) throw std::invalid_argument("estimate_alpha: no training trees");
  double root_sum = 0;
  std::vector<double> count_sum(static_cast<std::size_t>(model.max_depth), 0);
  std::vector<double> node_count(static_cast<std::size_t>(model.max_depth), 0);
  for (const TrainInstance& inst : instances) {
    const Taxonomy& t = *inst.gold;
    root_sum += t.child_count(0);
    for (int n = 1; n <= t.size(); ++n) {
      const std::size_t l = static_cast<std::size_t>(model.layer_for_depth(t.depth(n)));
      count_sum[l] += t.child_count(n);
      node_count[l] += 1;
    }
  }
  model.alpha_root = 1.0 + root_sum / static_cast<double>(instances.size());
  model.alpha_by_depth.assign(static_cast<std::size_t>(model.max_depth), 1.0);
  for (std::size_t l = 0; l < count_sum.size(); ++l)
    if (node_count[l] > 0) model.alpha_by_depth[l] = 1.0 + count_sum[l] / node_count[l];
}

/// Stochastic EM: per iteration one sampled-expectation gradient step per
/// training tree, with the step-decay schedule. Weights start at zero.
/// Bins, projections and alpha must already be fitted on `model`.
inline std::vector<TrainLogRow> em_train(Model& model,
                                         const std::vector<TrainInstance>& instances,
                                         const TrainConfig& cfg) {
  if (instances.empty()) throw std::invalid_argument("em_train: empty training set");
  for (Vec& w : model.weights) w.setZero();

  std::vector<FeatureContext> ctxs;
  ctxs.reserve(instances.size());
  for (const TrainInstance& inst : instances)
    ctxs.push_back(build_feature_context(model, *inst.data));

  std::vector<TrainLogRow> log;
  double best = -std::numeric_limits<double>::infinity();
  int best_iter = 0;
  for (int iter = 0; iter < cfg.em_iterations; ++iter) {
    const double eta = cfg.learning_rate(iter);
    std::vector<Vec> total(model.weights.size(), Vec::Zero(model.layout.dim));
    double surrogate = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      model.bind_alpha(instances[i].data->size());
      SamplerConfig scfg = cfg.sampler;
      scfg.seed = cfg.seed ^ (static_cast<std::uint64_t>(iter) * 0x9e3779b97f4a7c15ull + i);
      const std::vector<Vec> g = gradient(model, ctxs[i], *instances[i].gold, scfg);
      for (std::size_t l = 0; l < total.size(); ++l) total[l] += g[l];
      surrogate += surrogate_objective(model, ctxs[i], *instances[i].gold);
    }
    TrainLogRow row;
    row.iteration = iter;
    row.learning_rate = eta;
    row.surrogate = surrogate;
    for (std::size_t l = 0; l < total.size(); ++l) {
      row.grad_norms.push_back(total[l].norm());
      model.weights[l] += eta * total[l];
    }
    log.push_back(std::move(row));
    if (surrogate > best + cfg.plateau_tol) {
      best = surrogate;
      best_iter = iter;
    } else if (cfg.plateau_window > 0 && iter - best_iter >= cfg.plateau_window) {
      break;
    }
  }
  return log;
}

inline std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "iteration,learning_rate,surrogate";
  if (!log.empty())
    for (std::size_t l = 0; l < log.front().grad_norms.size(); ++l)
      out += ",grad_norm_l" + std::to_string(l + 1);
  out += "\n";
  char buf[64];
  for (const TrainLogRow& r : log) {
    out += std::to_string(r.iteration);
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g", r.learning_rate, r.surrogate);
    out += buf;
    for (double g : r.grad_norms) {
      std::snprintf(buf, sizeof buf, ",%.17g", g);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace taxo
