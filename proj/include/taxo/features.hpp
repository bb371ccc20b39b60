// Six-block feature construction: quantile binning, L1-regularized
// projection learning, lexical surface features, and assembly of the
// full vector for a (parent, child, siblings) context.
//
// Pairwise block values are precomputed once per dataset into a
// FeatureContext; sampling then only does table lookups plus the
// sibling log-mean-exp.
#pragma once

#include "taxo/core.hpp"
#include "taxo/embed_stats.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace taxo {

inline constexpr int kNumBinEdges = 19 - 1;  // 19 bins

/// Edges at equally spaced interior quantiles of the training values.
inline BinSpec build_bins(std::vector<double> values, const std::string& block = "") {
  if (values.size() < 19)
    throw std::invalid_argument("build_bins: need at least 19 values");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("build_bins: non-finite value");
  std::sort(values.begin(), values.end());
  BinSpec spec;
  spec.block = block;
  spec.edges.resize(kNumBinEdges);
  const double n1 = static_cast<double>(values.size()) - 1.0;
  for (int k = 1; k <= kNumBinEdges; ++k) {
    const double pos = (static_cast<double>(k) / 19.0) * n1;
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    double e = values[lo];
    if (lo + 1 < values.size()) e += frac * (values[lo + 1] - values[lo]);
    // rank perturbation keeps edges strictly increasing under duplicates
    spec.edges[static_cast<std::size_t>(k - 1)] = e + 1e-9 * k;
  }
  for (std::size_t i = 1; i < spec.edges.size(); ++i)
    if (spec.edges[i] <= spec.edges[i - 1]) spec.edges[i] = spec.edges[i - 1] + 1e-12;
  return spec;
}

/// Number of edges <= value, in 0..18.
inline int bin_index(const BinSpec& spec, double value) {
  int idx = 0;
  for (double e : spec.edges)
    if (e <= value) ++idx;
  return idx;
}

/// Slot 0 is the missing indicator; values occupy slots 1..19.
inline Vec one_hot(const BinSpec& spec, std::optional<double> value) {
  Vec v = Vec::Zero(kBinnedBlockWidth);
  v[value ? 1 + bin_index(spec, *value) : 0] = 1.0;
  return v;
}

struct ProjectionMatrix {
  Mat phi;
  double lambda = 0;
  double objective = 0;
};

namespace detail {

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0;
}

}  // namespace detail

/// argmin_Phi (1/N) sum ||Phi u - y||^2 + lambda*||Phi||_1, by proximal
/// gradient (ISTA) from zero. Deterministic; objective is non-increasing.
inline ProjectionMatrix learn_projection(const std::vector<std::pair<Vec, Vec>>& pairs,
                                         double lambda, int max_iters = 10000,
                                         double rel_tol = 1e-8,
                                         std::vector<double>* objective_trace = nullptr) {
  if (pairs.empty()) throw std::invalid_argument("learn_projection: no pairs");
  const Eigen::Index in = pairs.front().first.size();
  const Eigen::Index out = pairs.front().second.size();
  const double n = static_cast<double>(pairs.size());
  Mat a = Mat::Zero(in, in);   // (1/N) sum u u^T
  Mat b = Mat::Zero(out, in);  // (1/N) sum y u^T
  double c = 0;
  for (const auto& [u, y] : pairs) {
    if (u.size() != in || y.size() != out)
      throw std::invalid_argument("learn_projection: inconsistent dimensions");
    if (!u.allFinite() || !y.allFinite())
      throw std::invalid_argument("learn_projection: non-finite input");
    a.noalias() += u * u.transpose() / n;
    b.noalias() += y * u.transpose() / n;
    c += y.squaredNorm() / n;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  const double lip = std::max(2.0 * es.eigenvalues().maxCoeff(), 1e-12);
  const double step = 1.0 / lip;

  auto objective = [&](const Mat& phi) {
    return (phi * a * phi.transpose()).trace() - 2.0 * (phi * b.transpose()).trace() + c +
           lambda * phi.cwiseAbs().sum();
  };

  ProjectionMatrix result;
  result.lambda = lambda;
  Mat phi = Mat::Zero(out, in);
  double prev = objective(phi);
  if (objective_trace) objective_trace->push_back(prev);
  for (int it = 0; it < max_iters; ++it) {
    Mat grad = 2.0 * (phi * a - b);
    Mat next = phi - step * grad;
    for (Eigen::Index i = 0; i < next.rows(); ++i)
      for (Eigen::Index j = 0; j < next.cols(); ++j)
        next(i, j) = detail::soft_threshold(next(i, j), step * lambda);
    const double obj = objective(next);
    if (objective_trace) objective_trace->push_back(obj);
    phi = std::move(next);
    if (std::abs(prev - obj) <= rel_tol * std::max(1.0, std::abs(prev))) {
      prev = obj;
      break;
    }
    prev = obj;
  }
  result.phi = std::move(phi);
  result.objective = prev;
  return result;
}

// ---- surface features ----------------------------------------------------

// SURF block layout: [0] child capitalized, [1] parent capitalized,
// [2] ends-with, [3] contains, [4..11] common-suffix length one-hot,
// [12..21] LCS-ratio one-hot, [22..31] length-difference one-hot.
struct SurfBits {
  bool cap_child = false, cap_parent = false, ends_with = false, contains = false;
  int suffix_slot = 0;   // 0..7
  int lcs_slot = 0;      // 0..9
  int lendiff_slot = 0;  // 0..9
};

namespace detail {

inline std::size_t longest_common_substring(const std::string& a, const std::string& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : 0;
      best = std::max(best, cur[j]);
    }
    std::swap(prev, cur);
  }
  return best;
}

}  // namespace detail

inline SurfBits compute_surf_bits(const std::string& child, const std::string& parent) {
  if (child.empty() || parent.empty())
    throw std::invalid_argument("surface_features: empty name");
  SurfBits s;
  s.cap_child = std::isupper(static_cast<unsigned char>(child.front())) != 0;
  s.cap_parent = std::isupper(static_cast<unsigned char>(parent.front())) != 0;
  s.ends_with = child.size() >= parent.size() &&
                child.compare(child.size() - parent.size(), parent.size(), parent) == 0;
  s.contains = child.find(parent) != std::string::npos;

  std::size_t common = 0;
  while (common < child.size() && common < parent.size() &&
         child[child.size() - 1 - common] == parent[parent.size() - 1 - common])
    ++common;
  s.suffix_slot = static_cast<int>(std::min<std::size_t>(common, 7));

  const double ratio = static_cast<double>(detail::longest_common_substring(child, parent)) /
                       static_cast<double>(std::max(child.size(), parent.size()));
  s.lcs_slot = std::min(9, static_cast<int>(ratio * 10.0));

  const double diff = std::clamp(
      static_cast<double>(child.size()) - static_cast<double>(parent.size()), -20.0, 20.0);
  s.lendiff_slot = std::min(9, static_cast<int>((diff + 20.0) * 10.0 / 41.0));
  return s;
}

inline Vec surface_features(const std::string& child, const std::string& parent) {
  const SurfBits s = compute_surf_bits(child, parent);
  Vec v = Vec::Zero(kSurfWidth);
  if (s.cap_child) v[0] = 1;
  if (s.cap_parent) v[1] = 1;
  if (s.ends_with) v[2] = 1;
  if (s.contains) v[3] = 1;
  v[4 + s.suffix_slot] = 1;
  v[12 + s.lcs_slot] = 1;
  v[22 + s.lendiff_slot] = 1;
  return v;
}

// ---- feature context + assembly ------------------------------------------

inline double cosine_similarity(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return 0;
  return a.dot(b) / (na * nb);
}

/// Precomputed pairwise block values for one dataset under one model.
/// Matrices are (parent, child) indexed from 0 = item 1; NaN marks
/// unavailable pairs.
struct FeatureContext {
  const Dataset* data = nullptr;
  const Model* model = nullptr;
  Vec fallback_var;
  std::vector<std::optional<GaussianSummary>> gauss;
  Mat vis;   // symmetric sibling visual similarity (log)
  Mat pcv1;  // parent-child visual, top-k refit parent
  Mat pcv2;  // -||Phi * child image mean - parent word||
  Mat st1;   // word cosine, symmetric
  Mat pct1;  // -||Phi_t * child word - parent word||
  std::vector<SurfBits> surf;  // (m-1)*N + (n-1)

  const SurfBits& surf_bits(int parent, int child) const {
    const std::size_t n = data->size();
    return surf[static_cast<std::size_t>(parent - 1) * n + static_cast<std::size_t>(child - 1)];
  }
};

inline FeatureContext build_feature_context(const Model& model, const Dataset& data) {
  const int n = static_cast<int>(data.size());
  FeatureContext ctx;
  ctx.data = &data;
  ctx.model = &model;
  ctx.fallback_var = global_fallback_variance(data);
  ctx.gauss.resize(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i)
    if (data.item(i).has_images())
      ctx.gauss[static_cast<std::size_t>(i - 1)] =
          fit_gaussian(data.item(i).image_vecs, kVarianceFloor, ctx.fallback_var);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  ctx.vis = Mat::Constant(n, n, nan);
  ctx.pcv1 = Mat::Constant(n, n, nan);
  ctx.pcv2 = Mat::Constant(n, n, nan);
  ctx.st1 = Mat::Constant(n, n, nan);
  ctx.pct1 = Mat::Constant(n, n, nan);

  // projected child embeddings, reused across parents
  std::vector<std::optional<Vec>> img_proj(static_cast<std::size_t>(n));
  std::vector<std::optional<Vec>> word_proj(static_cast<std::size_t>(n));
  for (int c = 1; c <= n; ++c) {
    const auto& g = ctx.gauss[static_cast<std::size_t>(c - 1)];
    if (g && model.proj_image_word.size() > 0 && model.proj_image_word.cols() == g->mean.size())
      img_proj[static_cast<std::size_t>(c - 1)] = model.proj_image_word * g->mean;
    const LabelItem& it = data.item(c);
    if (it.has_word() && model.proj_word_word.size() > 0 &&
        model.proj_word_word.cols() == it.word_vec->size())
      word_proj[static_cast<std::size_t>(c - 1)] = model.proj_word_word * *it.word_vec;
  }

  for (int a = 1; a <= n; ++a) {
    const auto& ga = ctx.gauss[static_cast<std::size_t>(a - 1)];
    const LabelItem& ia = data.item(a);
    for (int b = a + 1; b <= n; ++b) {
      const auto& gb = ctx.gauss[static_cast<std::size_t>(b - 1)];
      if (ga && gb) ctx.vis(a - 1, b - 1) = ctx.vis(b - 1, a - 1) = vissim(*ga, *gb);
      const LabelItem& ib = data.item(b);
      if (ia.has_word() && ib.has_word())
        ctx.st1(a - 1, b - 1) = ctx.st1(b - 1, a - 1) =
            cosine_similarity(*ia.word_vec, *ib.word_vec);
    }
  }

  for (int m = 1; m <= n; ++m) {
    const LabelItem& pm = data.item(m);
    for (int c = 1; c <= n; ++c) {
      if (c == m) continue;
      const auto& gc = ctx.gauss[static_cast<std::size_t>(c - 1)];
      if (gc && pm.has_images()) {
        if (model.pc_v1_top_k == 0) {
          ctx.pcv1(m - 1, c - 1) = ctx.vis(m - 1, c - 1);
        } else {
          const GaussianSummary refit =
              top_k_refit(pm.image_vecs, *gc, model.pc_v1_top_k, kVarianceFloor, ctx.fallback_var);
          ctx.pcv1(m - 1, c - 1) = vissim(*gc, refit);
        }
      }
      if (pm.has_word()) {
        const auto& ip = img_proj[static_cast<std::size_t>(c - 1)];
        if (ip) ctx.pcv2(m - 1, c - 1) = -(*ip - *pm.word_vec).norm();
        const auto& wp = word_proj[static_cast<std::size_t>(c - 1)];
        if (wp && c != m) ctx.pct1(m - 1, c - 1) = -(*wp - *pm.word_vec).norm();
      }
    }
  }

  ctx.surf.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int m = 1; m <= n; ++m)
    for (int c = 1; c <= n; ++c)
      ctx.surf[static_cast<std::size_t>(m - 1) * static_cast<std::size_t>(n) +
               static_cast<std::size_t>(c - 1)] = compute_surf_bits(data.item(c).name,
                                                                   data.item(m).name);
  return ctx;
}

/// Sparse view of an assembled feature vector: one absolute slot per
/// binned block (-1 when the block is disabled), the SURF slots, and
/// the root bias. Dot products against layer weights are O(#slots).
struct SparseFeatures {
  std::array<int, kNumBinnedBlocks> binned_slot{-1, -1, -1, -1, -1};
  std::array<int, 7> surf_slots{};  // absolute indices
  int surf_count = 0;
  bool root_bias = false;
};

namespace detail {

inline std::optional<double> sibling_visual_value(const FeatureContext& ctx, int child,
                                                  std::span<const int> sibs) {
  if (!ctx.gauss[static_cast<std::size_t>(child - 1)]) return std::nullopt;
  double best = -std::numeric_limits<double>::infinity();
  double acc = 0;
  int count = 0;
  // two passes of lse without a temp buffer would lose precision; sibling
  // sets are small, so collect first
  std::array<double, 64> small;
  std::vector<double> big;
  double* vals = small.data();
  if (sibs.size() > small.size()) {
    big.resize(sibs.size());
    vals = big.data();
  }
  for (int s : sibs) {
    const double v = ctx.vis(child - 1, s - 1);
    if (std::isnan(v)) continue;
    vals[count++] = v;
    best = std::max(best, v);
  }
  if (count == 0) return std::nullopt;
  for (int i = 0; i < count; ++i) acc += std::exp(vals[i] - best);
  return best + std::log(acc) - std::log(static_cast<double>(count));
}

inline std::optional<double> sibling_text_value(const FeatureContext& ctx, int child,
                                                std::span<const int> sibs) {
  if (!ctx.data->item(child).has_word()) return std::nullopt;
  double acc = 0;
  int count = 0;
  for (int s : sibs) {
    const double v = ctx.st1(child - 1, s - 1);
    if (std::isnan(v)) continue;
    acc += v;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return acc / count;
}

inline std::optional<double> pair_value(const Mat& m, int parent, int child) {
  if (parent == 0) return std::nullopt;
  const double v = m(parent - 1, child - 1);
  if (std::isnan(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Assemble the sparse feature slots for child `n` attached to parent `m`
/// with sibling set `sibs` (excluding n; m == 0 is the pseudo-root).
inline SparseFeatures assemble_sparse(const FeatureContext& ctx, int m, int n,
                                      std::span<const int> sibs) {
  if (n < 1 || n > static_cast<int>(ctx.data->size()))
    throw std::invalid_argument("assemble: child index out of range");
  const Model& model = *ctx.model;
  const FeatureLayout& layout = model.layout;
  SparseFeatures f;

  const std::optional<double> block_vals[kNumBinnedBlocks] = {
      detail::sibling_visual_value(ctx, n, sibs),
      detail::pair_value(ctx.pcv1, m, n),
      detail::pair_value(ctx.pcv2, m, n),
      detail::sibling_text_value(ctx, n, sibs),
      detail::pair_value(ctx.pct1, m, n),
  };
  for (int b = 0; b < kNumBinnedBlocks; ++b) {
    if (!model.enabled_blocks[static_cast<std::size_t>(b)]) continue;
    const int off = layout.blocks[static_cast<std::size_t>(b)].offset;
    const auto& v = block_vals[b];
    f.binned_slot[static_cast<std::size_t>(b)] =
        v ? off + 1 + bin_index(model.bins[static_cast<std::size_t>(b)], *v) : off;
  }
  if (m >= 1 && model.enabled_blocks[kSURF]) {
    const int off = layout.blocks[kSURF].offset;
    const SurfBits& s = ctx.surf_bits(m, n);
    if (s.cap_child) f.surf_slots[static_cast<std::size_t>(f.surf_count++)] = off + 0;
    if (s.cap_parent) f.surf_slots[static_cast<std::size_t>(f.surf_count++)] = off + 1;
    if (s.ends_with) f.surf_slots[static_cast<std::size_t>(f.surf_count++)] = off + 2;
    if (s.contains) f.surf_slots[static_cast<std::size_t>(f.surf_count++)] = off + 3;
    f.surf_slots[static_cast<std::size_t>(f.surf_count++)] = off + 4 + s.suffix_slot;
    f.surf_slots[static_cast<std::size_t>(f.surf_count++)] = off + 12 + s.lcs_slot;
    f.surf_slots[static_cast<std::size_t>(f.surf_count++)] = off + 22 + s.lendiff_slot;
  }
  f.root_bias = (m == 0);
  return f;
}

inline FeatureVector assemble(const FeatureContext& ctx, int m, int n,
                              std::span<const int> sibs) {
  const SparseFeatures s = assemble_sparse(ctx, m, n, sibs);
  FeatureVector out;
  out.values = Vec::Zero(ctx.model->layout.dim);
  for (int slot : s.binned_slot)
    if (slot >= 0) out.values[slot] = 1.0;
  for (int i = 0; i < s.surf_count; ++i) out.values[s.surf_slots[static_cast<std::size_t>(i)]] = 1.0;
  if (s.root_bias) out.values[ctx.model->layout.bias_offset] = 1.0;
  return out;
}

inline double sparse_dot(const Vec& w, const SparseFeatures& f, int bias_offset) {
  double acc = 0;
  for (int slot : f.binned_slot)
    if (slot >= 0) acc += w[slot];
  for (int i = 0; i < f.surf_count; ++i) acc += w[f.surf_slots[static_cast<std::size_t>(i)]];
  if (f.root_bias) acc += w[bias_offset];
  return acc;
}

}  // namespace taxo
