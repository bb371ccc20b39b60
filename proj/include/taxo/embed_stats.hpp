// Diagonal-Gaussian summaries of image-embedding sets and the visual
// similarity kernels built on them. Everything stays in log space;
// raw densities underflow once the embedding dimension grows.
#pragma once

#include "taxo/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace taxo {

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr std::size_t kFewImageThreshold = 5;

struct GaussianSummary {
  Vec mean;
  Vec var;  // diagonal covariance, every entry >= floor
  std::size_t count = 0;
};

/// Mean + population variance, floored. Below `few_threshold` samples the
/// variance is unreliable, so `fallback_var` (dataset-level) is used instead.
inline GaussianSummary fit_gaussian(const std::vector<Vec>& vecs, double floor,
                                    const Vec& fallback_var,
                                    std::size_t few_threshold = kFewImageThreshold) {
  if (vecs.empty()) throw std::invalid_argument("fit_gaussian: empty input");
  const Eigen::Index dim = vecs.front().size();
  for (const Vec& v : vecs)
    if (v.size() != dim) throw std::invalid_argument("fit_gaussian: inconsistent dimensions");

  GaussianSummary g;
  g.count = vecs.size();
  g.mean = Vec::Zero(dim);
  for (const Vec& v : vecs) g.mean += v;
  g.mean /= static_cast<double>(vecs.size());

  if (vecs.size() < few_threshold) {
    if (fallback_var.size() != dim)
      throw std::invalid_argument("fit_gaussian: fallback variance dimension mismatch");
    g.var = fallback_var.cwiseMax(floor);
    return g;
  }
  g.var = Vec::Zero(dim);
  for (const Vec& v : vecs) g.var += (v - g.mean).cwiseAbs2();
  g.var /= static_cast<double>(vecs.size());
  g.var = g.var.cwiseMax(floor);
  return g;
}

/// Population variance of a whole image collection, used as the fallback
/// for categories with too few images.
inline Vec global_fallback_variance(const Dataset& data, double floor = kVarianceFloor) {
  Vec mean = Vec::Zero(data.image_dim);
  std::size_t count = 0;
  for (const LabelItem& it : data.items)
    for (const Vec& v : it.image_vecs) {
      mean += v;
      ++count;
    }
  if (count == 0) return Vec::Constant(data.image_dim, 1.0);
  mean /= static_cast<double>(count);
  Vec var = Vec::Zero(data.image_dim);
  for (const LabelItem& it : data.items)
    for (const Vec& v : it.image_vecs) var += (v - mean).cwiseAbs2();
  var /= static_cast<double>(count);
  return var.cwiseMax(floor);
}

inline double log_density(const GaussianSummary& g, const Vec& v) {
  if (v.size() != g.mean.size())
    throw std::invalid_argument("log_density: dimension mismatch");
  double acc = 0;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    const double d = v[j] - g.mean[j];
    acc += std::log(2.0 * std::numbers::pi * g.var[j]) + d * d / g.var[j];
  }
  return -0.5 * acc;
}

inline double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (!std::isfinite(m)) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// log of the symmetrized cross density: log[(N(y.mean; x) + N(x.mean; y)) / 2].
inline double vissim(const GaussianSummary& x, const GaussianSummary& y) {
  return log_sum_exp(log_density(x, y.mean), log_density(y, x.mean)) - std::log(2.0);
}

/// log of the mean of exp(vissim) over the sibling set.
inline double sibling_vissim(const GaussianSummary& n, const std::vector<GaussianSummary>& sibs) {
  if (sibs.empty()) throw std::invalid_argument("sibling_vissim: empty sibling set");
  double m = -std::numeric_limits<double>::infinity();
  std::vector<double> vals;
  vals.reserve(sibs.size());
  for (const GaussianSummary& s : sibs) {
    vals.push_back(vissim(n, s));
    m = std::max(m, vals.back());
  }
  double acc = 0;
  for (double v : vals) acc += std::exp(v - m);
  return m + std::log(acc) - std::log(static_cast<double>(sibs.size()));
}

/// log-mean-exp of precomputed pairwise log similarities.
inline double log_mean_exp(const std::vector<double>& vals) {
  if (vals.empty()) throw std::invalid_argument("log_mean_exp: empty input");
  const double m = *std::max_element(vals.begin(), vals.end());
  if (!std::isfinite(m)) return m;
  double acc = 0;
  for (double v : vals) acc += std::exp(v - m);
  return m + std::log(acc) - std::log(static_cast<double>(vals.size()));
}

/// Refit a parent Gaussian on the k parent images most probable under the
/// child. k == 0 means all images (equivalent to a plain fit).
inline GaussianSummary top_k_refit(const std::vector<Vec>& parent_vecs,
                                   const GaussianSummary& child, std::size_t k,
                                   double floor, const Vec& fallback_var,
                                   std::size_t few_threshold = kFewImageThreshold) {
  if (k == 0 || k >= parent_vecs.size())
    return fit_gaussian(parent_vecs, floor, fallback_var, few_threshold);
  std::vector<std::size_t> order(parent_vecs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return log_density(child, parent_vecs[a]) > log_density(child, parent_vecs[b]);
  });
  std::vector<Vec> kept;
  kept.reserve(k);
  for (std::size_t i = 0; i < k; ++i) kept.push_back(parent_vecs[order[i]]);
  return fit_gaussian(kept, floor, fallback_var, few_threshold);
}

}  // namespace taxo
