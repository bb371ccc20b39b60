// Core domain types for taxonomy induction: label items, datasets,
// rooted taxonomies over a pseudo-root, and the feature/model containers
// shared by every other header.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace taxo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// One category: a name plus optional word/image embeddings.
struct LabelItem {
  int id = 0;  // 1..N
  std::string name;
  std::optional<Vec> word_vec;
  std::vector<Vec> image_vecs;

  bool has_images() const { return !image_vecs.empty(); }
  bool has_word() const { return word_vec.has_value(); }
};

struct Dataset {
  std::vector<LabelItem> items;  // items[n-1] has id n
  int image_dim = 0;
  int word_dim = 0;

  std::size_t size() const { return items.size(); }
  const LabelItem& item(int id) const { return items.at(static_cast<std::size_t>(id - 1)); }

  // ids dense from 1, consistent dims.
  void validate() const {
    for (std::size_t i = 0; i < items.size(); ++i) {
      const LabelItem& it = items[i];
      if (it.id != static_cast<int>(i) + 1)
        throw std::invalid_argument("dataset ids must be dense from 1");
      if (it.name.empty()) throw std::invalid_argument("empty item name");
      if (it.word_vec && it.word_vec->size() != word_dim)
        throw std::invalid_argument("word vector dimension mismatch");
      for (const Vec& v : it.image_vecs)
        if (v.size() != image_dim)
          throw std::invalid_argument("image vector dimension mismatch");
    }
  }
};

/// Rooted tree over nodes 1..N plus the pseudo-root 0, stored as parent
/// indices. Children lists and depths are kept in sync with reattachments.
class Taxonomy {
 public:
  Taxonomy() = default;

  explicit Taxonomy(std::vector<int> parent) {
    const int n = static_cast<int>(parent.size());
    parent_.assign(static_cast<std::size_t>(n) + 1, -1);
    for (int i = 1; i <= n; ++i) {
      int p = parent[static_cast<std::size_t>(i - 1)];
      if (p < 0 || p > n) throw std::invalid_argument("parent index out of range");
      if (p == i) throw std::invalid_argument("self-parent");
      parent_[static_cast<std::size_t>(i)] = p;
    }
    rebuild();
  }

  /// Star taxonomy: every node under the pseudo-root.
  static Taxonomy star(int n) {
    return Taxonomy(std::vector<int>(static_cast<std::size_t>(n), 0));
  }

  int size() const { return static_cast<int>(parent_.size()) - 1; }  // N
  int parent(int n) const { return parent_.at(static_cast<std::size_t>(n)); }
  const std::vector<int>& children(int n) const { return children_.at(static_cast<std::size_t>(n)); }
  int child_count(int n) const { return static_cast<int>(children(n).size()); }
  int depth(int n) const { return depth_.at(static_cast<std::size_t>(n)); }

  /// parent indices for nodes 1..N (pseudo-root omitted).
  std::vector<int> parent_vector() const {
    return std::vector<int>(parent_.begin() + 1, parent_.end());
  }

  bool is_descendant(int node, int of) const {
    for (int cur = node; cur > 0; cur = parent_[static_cast<std::size_t>(cur)])
      if (parent_[static_cast<std::size_t>(cur)] == of) return true;
    return false;
  }

  /// Detach n and append it to m. m must not be n or a descendant of n.
  void structure_op(int n, int m) {
    check_node(n);
    if (n == 0) throw std::invalid_argument("cannot move the pseudo-root");
    if (m < 0 || m > size()) throw std::invalid_argument("target out of range");
    if (m == n || is_descendant(m, n))
      throw std::invalid_argument("target is the node or one of its descendants");
    const int old = parent_[static_cast<std::size_t>(n)];
    if (old == m) return;
    auto& oc = children_[static_cast<std::size_t>(old)];
    oc.erase(std::find(oc.begin(), oc.end(), n));
    children_[static_cast<std::size_t>(m)].push_back(n);
    parent_[static_cast<std::size_t>(n)] = m;
    const int shift = depth_[static_cast<std::size_t>(m)] + 1 - depth_[static_cast<std::size_t>(n)];
    if (shift != 0) shift_depths(n, shift);
  }

  /// All nodes strictly below n.
  std::set<int> descendants(int n) const {
    check_node(n);
    std::set<int> out;
    std::vector<int> stack(children(n));
    while (!stack.empty()) {
      int c = stack.back();
      stack.pop_back();
      out.insert(c);
      for (int g : children(c)) stack.push_back(g);
    }
    return out;
  }

  bool valid() const {
    const int n = size();
    std::vector<int> seen(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
      int steps = 0, cur = i;
      while (cur != 0) {
        cur = parent_[static_cast<std::size_t>(cur)];
        if (cur < 0 || ++steps > n) return false;  // cycle or dangling
      }
      seen[static_cast<std::size_t>(i)] = 1;
    }
    for (int i = 1; i <= n; ++i) {
      if (depth(i) != depth(parent(i)) + 1) return false;
      if (child_count(i) != static_cast<int>(children(i).size())) return false;
    }
    return parent_[0] == -1;
  }

  bool operator==(const Taxonomy& o) const { return parent_ == o.parent_; }

 private:
  void check_node(int n) const {
    if (n < 0 || n > size()) throw std::invalid_argument("node out of range");
  }

  void shift_depths(int n, int delta) {
    depth_[static_cast<std::size_t>(n)] += delta;
    for (int c : children(n)) shift_depths(c, delta);
  }

  void rebuild() {
    const std::size_t m = parent_.size();
    children_.assign(m, {});
    depth_.assign(m, -1);
    depth_[0] = 0;
    for (std::size_t i = 1; i < m; ++i)
      children_[static_cast<std::size_t>(parent_[i])].push_back(static_cast<int>(i));
    // BFS from the root; unreached nodes mean a cycle.
    std::vector<int> queue{0};
    std::size_t head = 0, reached = 1;
    while (head < queue.size()) {
      int cur = queue[head++];
      for (int c : children_[static_cast<std::size_t>(cur)]) {
        depth_[static_cast<std::size_t>(c)] = depth_[static_cast<std::size_t>(cur)] + 1;
        queue.push_back(c);
        ++reached;
      }
    }
    if (reached != m) throw std::invalid_argument("parent mapping contains a cycle");
  }

  std::vector<int> parent_;              // parent_[0] == -1
  std::vector<std::vector<int>> children_;
  std::vector<int> depth_;
};

/// Build a taxonomy from (parent, child) edge pairs; unlisted children
/// attach to the pseudo-root.
inline Taxonomy taxonomy_from_edges(const std::vector<std::pair<int, int>>& edges, int n) {
  std::vector<int> parent(static_cast<std::size_t>(n), 0);
  std::vector<bool> listed(static_cast<std::size_t>(n) + 1, false);
  for (auto [p, c] : edges) {
    if (c < 1 || c > n || p < 0 || p > n)
      throw std::invalid_argument("edge id out of range");
    if (listed[static_cast<std::size_t>(c)])
      throw std::invalid_argument("duplicate child in edge list");
    listed[static_cast<std::size_t>(c)] = true;
    parent[static_cast<std::size_t>(c - 1)] = p;
  }
  return Taxonomy(std::move(parent));  // throws on cycles
}

// Feature block order is fixed; SURF is the only non-binned block.
enum Block : int { kSV1 = 0, kPCV1 = 1, kPCV2 = 2, kST1 = 3, kPCT1 = 4, kSURF = 5 };
inline constexpr int kNumBlocks = 6;
inline constexpr int kNumBinnedBlocks = 5;
inline constexpr int kBinnedBlockWidth = 20;  // 19 value bins + missing slot
inline constexpr int kSurfWidth = 32;
inline constexpr const char* kBlockNames[kNumBlocks] = {"S-V1",  "PC-V1", "PC-V2",
                                                        "S-T1",  "PC-T1", "SURF"};

struct BlockDesc {
  std::string name;
  int offset = 0;
  int width = 0;
};

/// Fixed concatenation layout of the six blocks plus a root-attachment bias.
struct FeatureLayout {
  std::array<BlockDesc, kNumBlocks> blocks;
  int bias_offset = 0;
  int dim = 0;  // D

  FeatureLayout() {
    int off = 0;
    for (int b = 0; b < kNumBlocks; ++b) {
      int w = (b == kSURF) ? kSurfWidth : kBinnedBlockWidth;
      blocks[static_cast<std::size_t>(b)] = {kBlockNames[b], off, w};
      off += w;
    }
    bias_offset = off;
    dim = off + 1;
  }
};

struct FeatureVector {
  Vec values;  // dimension D
};

/// Quantile bin edges for one feature block (18 edges, 19 bins).
struct BinSpec {
  std::string block;
  std::vector<double> edges;  // strictly increasing, length 18
};

/// Trained model: layer-wise weights, binning, projections, Dirichlet prior.
struct Model {
  FeatureLayout layout;
  int max_depth = 6;                 // L; depths beyond use the last layer
  std::vector<Vec> weights;          // L vectors of dimension layout.dim
  std::array<BinSpec, kNumBinnedBlocks> bins;
  Mat proj_image_word;               // b x a
  Mat proj_word_word;                // b x b
  std::size_t pc_v1_top_k = 0;       // 0 = use all parent images
  double alpha_root = 1.0;
  std::vector<double> alpha_by_depth;  // index l-1 for depth l
  std::array<bool, kNumBlocks> enabled_blocks{true, true, true, true, true, true};
  std::vector<double> alpha;  // bound per dataset: length N+1, entry per parent

  static Model zero(int layers) {
    Model m;
    m.max_depth = layers;
    m.weights.assign(static_cast<std::size_t>(layers), Vec::Zero(m.layout.dim));
    return m;
  }

  /// Layer index for a child at depth d, clamped to the trained depth.
  int layer_for_depth(int d) const { return std::min(d, max_depth) - 1; }
  const Vec& weights_for_depth(int d) const {
    return weights.at(static_cast<std::size_t>(layer_for_depth(d)));
  }

  /// Materialize the per-parent Dirichlet vector for a dataset of n items.
  /// Node identities do not transfer across datasets, so non-root entries
  /// share the mean of the depth-bucketed estimates.
  void bind_alpha(std::size_t n) {
    double node_alpha = 1.0;
    if (!alpha_by_depth.empty()) {
      double s = 0;
      for (double a : alpha_by_depth) s += a;
      node_alpha = s / static_cast<double>(alpha_by_depth.size());
    }
    alpha.assign(n + 1, node_alpha);
    alpha[0] = alpha_root;
  }
};

}  // namespace taxo
