// File formats (datasets as JSON lines, trees as TSV edge lists, models
// as versioned JSON), the synthetic corpus generator, and report/DOT
// writers. All writes go through write-temp-then-rename.
#pragma once

#include "taxo/core.hpp"
#include "taxo/eval.hpp"
#include "taxo/inference.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace taxo {

using nlohmann::json;

inline constexpr int kModelFormatMajor = 1;
inline constexpr int kModelFormatMinor = 0;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- dataset -------------------------------------------------------------

inline json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vec vec_from_json(const json& a) {
  Vec v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline std::string dataset_to_string(const Dataset& data, const std::string& encoder = "") {
  std::string out;
  json header{{"image_dim", data.image_dim},
              {"word_dim", data.word_dim},
              {"count", data.items.size()}};
  if (!encoder.empty()) header["encoder"] = encoder;
  out += header.dump() + "\n";
  for (const LabelItem& it : data.items) {
    json rec{{"id", it.id}, {"name", it.name}};
    rec["word_vec"] = it.word_vec ? vec_to_json(*it.word_vec) : json();
    json imgs = json::array();
    for (const Vec& v : it.image_vecs) imgs.push_back(vec_to_json(v));
    rec["image_vecs"] = std::move(imgs);
    out += rec.dump() + "\n";
  }
  return out;
}

inline Dataset dataset_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset file is empty");
  Dataset data;
  std::size_t count;
  try {
    const json header = json::parse(line);
    data.image_dim = header.at("image_dim").get<int>();
    data.word_dim = header.at("word_dim").get<int>();
    count = header.at("count").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      LabelItem it;
      it.id = rec.at("id").get<int>();
      it.name = rec.at("name").get<std::string>();
      if (!rec.at("word_vec").is_null()) it.word_vec = vec_from_json(rec.at("word_vec"));
      for (const json& v : rec.at("image_vecs")) it.image_vecs.push_back(vec_from_json(v));
      data.items.push_back(std::move(it));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed dataset record: ") + e.what());
  }
  if (data.items.size() != count)
    throw DataError("dataset item count does not match header");
  try {
    data.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return data;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& data,
                         const std::string& encoder = "") {
  write_file_atomic(path, dataset_to_string(data, encoder));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_string(read_file(path));
}

// ---- tree ----------------------------------------------------------------

inline std::string tree_to_string(const Taxonomy& t) {
  std::string out;
  for (int c = 1; c <= t.size(); ++c)
    out += std::to_string(t.parent(c)) + "\t" + std::to_string(c) + "\n";
  return out;
}

inline Taxonomy tree_from_string(const std::string& text, int n = -1) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::pair<int, int>> edges;
  int max_id = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int p, c;
    if (!(ls >> p >> c)) throw DataError("malformed tree line: " + line);
    edges.emplace_back(p, c);
    max_id = std::max({max_id, p, c});
  }
  try {
    return taxonomy_from_edges(edges, n < 0 ? max_id : n);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
}

inline void save_tree(const std::filesystem::path& path, const Taxonomy& t) {
  write_file_atomic(path, tree_to_string(t));
}

inline Taxonomy load_tree(const std::filesystem::path& path, int n = -1) {
  return tree_from_string(read_file(path), n);
}

// ---- model ---------------------------------------------------------------

inline json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat mat_from_json(const json& rows) {
  if (rows.empty()) return Mat();
  Mat m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  return m;
}

inline std::string model_to_string(const Model& m) {
  json j;
  j["format_version"] = {{"major", kModelFormatMajor}, {"minor", kModelFormatMinor}};
  j["max_depth"] = m.max_depth;
  j["feature_dim"] = m.layout.dim;
  json weights = json::array();
  for (const Vec& w : m.weights) weights.push_back(vec_to_json(w));
  j["weights"] = std::move(weights);
  json bins = json::array();
  for (const BinSpec& b : m.bins) bins.push_back({{"block", b.block}, {"edges", b.edges}});
  j["bins"] = std::move(bins);
  j["proj_image_word"] = mat_to_json(m.proj_image_word);
  j["proj_word_word"] = mat_to_json(m.proj_word_word);
  j["pc_v1_top_k"] = m.pc_v1_top_k;
  j["alpha_root"] = m.alpha_root;
  j["alpha_by_depth"] = m.alpha_by_depth;
  json enabled = json::array();
  for (bool b : m.enabled_blocks) enabled.push_back(b);
  j["enabled_blocks"] = std::move(enabled);
  return j.dump(2) + "\n";
}

inline Model model_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
  try {
    if (j.at("format_version").at("major").get<int>() != kModelFormatMajor)
      throw DataError("unsupported model format major version");
    Model m = Model::zero(j.at("max_depth").get<int>());
    if (j.at("feature_dim").get<int>() != m.layout.dim)
      throw DataError("model feature dimension does not match this build");
    const json& weights = j.at("weights");
    for (std::size_t l = 0; l < m.weights.size(); ++l)
      m.weights[l] = vec_from_json(weights.at(l));
    const json& bins = j.at("bins");
    for (std::size_t b = 0; b < m.bins.size(); ++b) {
      m.bins[b].block = bins.at(b).at("block").get<std::string>();
      m.bins[b].edges = bins.at(b).at("edges").get<std::vector<double>>();
    }
    m.proj_image_word = mat_from_json(j.at("proj_image_word"));
    m.proj_word_word = mat_from_json(j.at("proj_word_word"));
    m.pc_v1_top_k = j.at("pc_v1_top_k").get<std::size_t>();
    m.alpha_root = j.at("alpha_root").get<double>();
    m.alpha_by_depth = j.at("alpha_by_depth").get<std::vector<double>>();
    const json& enabled = j.at("enabled_blocks");
    for (std::size_t b = 0; b < m.enabled_blocks.size(); ++b)
      m.enabled_blocks[b] = enabled.at(b).get<bool>();
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

inline void save_model(const std::filesystem::path& path, const Model& m) {
  write_file_atomic(path, model_to_string(m));
}

inline Model load_model(const std::filesystem::path& path) {
  return model_from_string(read_file(path));
}

// ---- marginals / reports -------------------------------------------------

inline std::string marginals_to_csv(const MarginalTable& t) {
  std::string out = "node,parent,probability\n";
  char buf[64];
  for (int n = 1; n <= t.size(); ++n)
    for (int m = 0; m <= t.size(); ++m) {
      if (t.at(n, m) == 0) continue;
      std::snprintf(buf, sizeof buf, "%d,%d,%.17g\n", n, m, t.at(n, m));
      out += buf;
    }
  return out;
}

inline std::string report_to_csv(const std::vector<EvalReport>& reports) {
  std::string out = "task,height,precision,recall,f1,predicted_pairs,gold_pairs,intersection\n";
  char buf[160];
  for (const EvalReport& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f,%.6f,%zu,%zu,%zu\n", r.task.c_str(),
                  r.height, r.precision, r.recall, r.f1, r.predicted_pairs, r.gold_pairs,
                  r.intersection);
    out += buf;
  }
  return out;
}

// ---- synthetic corpus ----------------------------------------------------

struct SynthConfig {
  int trees = 3;
  int nodes = 50;
  int height = 3;
  int image_dim = 12;
  int word_dim = 12;
  int images_min = 6, images_max = 12;
  double noise = 0.15;        // embedding noise relative to prototype drift
  double drift = 1.0;         // parent-to-child prototype distance
  double suffix_prob = 0.9;   // child name keeps the parent name as suffix
  double word_noise_growth = 1.0;  // per-depth multiplier on word noise
  double image_noise_decay = 1.0;  // per-depth multiplier on image noise
  std::uint64_t seed = 0;
};

struct SynthTree {
  Dataset data;
  Taxonomy gold;
};

namespace detail {

inline std::string random_syllables(Rng& rng, int count) {
  static constexpr const char* kConsonants = "bcdfghklmnprstvz";
  static constexpr const char* kVowels = "aeiou";
  std::uniform_int_distribution<int> c(0, 15), v(0, 4);
  std::string s;
  for (int i = 0; i < count; ++i) {
    s += kConsonants[c(rng)];
    s += kVowels[v(rng)];
  }
  return s;
}

}  // namespace detail

/// One synthetic gold tree with embeddings: child prototypes drift from
/// parent prototypes, names optionally keep the parent name as a suffix,
/// and per-depth noise multipliers shape where each modality is reliable.
inline SynthTree synth_tree(const SynthConfig& cfg, Rng& rng) {
  const int n = cfg.nodes;
  if (n < cfg.height) throw std::invalid_argument("synth_tree: nodes < height");
  std::vector<int> parent(static_cast<std::size_t>(n), 0);
  // a chain guarantees the requested height, remaining nodes attach anywhere
  for (int i = 2; i <= cfg.height; ++i) parent[static_cast<std::size_t>(i - 1)] = i - 1;
  {
    Taxonomy partial(std::vector<int>(parent.begin(), parent.begin() + cfg.height));
    std::vector<int> eligible;
    for (int i = 0; i <= cfg.height; ++i)
      if (i == 0 || partial.depth(i) < cfg.height) eligible.push_back(i);
    for (int i = cfg.height + 1; i <= n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
      const int p = eligible[pick(rng)];
      parent[static_cast<std::size_t>(i - 1)] = p;
      const int depth = (p == 0) ? 1 : [&] {
        int d = 1, cur = p;
        while (parent[static_cast<std::size_t>(cur - 1)] != 0) {
          cur = parent[static_cast<std::size_t>(cur - 1)];
          ++d;
        }
        return d + 1;
      }();
      if (depth < cfg.height) eligible.push_back(i);
    }
  }
  SynthTree out;
  out.gold = Taxonomy(std::move(parent));
  out.data.image_dim = cfg.image_dim;
  out.data.word_dim = cfg.word_dim;

  std::normal_distribution<double> gauss(0.0, 1.0);
  auto noise_vec = [&](int dim, double sigma) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = sigma * gauss(rng);
    return v;
  };
  std::vector<Vec> word_proto(static_cast<std::size_t>(n) + 1);
  std::vector<Vec> img_proto(static_cast<std::size_t>(n) + 1);
  word_proto[0] = Vec::Zero(cfg.word_dim);
  img_proto[0] = Vec::Zero(cfg.image_dim);
  std::vector<std::string> names(static_cast<std::size_t>(n) + 1);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> img_count(cfg.images_min, cfg.images_max);
  // BFS order so parents are materialized before children
  std::vector<int> order{0};
  for (std::size_t i = 0; i < order.size(); ++i)
    for (int c : out.gold.children(order[i])) order.push_back(c);

  for (int node : order) {
    if (node == 0) continue;
    const int p = out.gold.parent(node);
    const int depth = out.gold.depth(node);
    const double word_sigma =
        cfg.noise * cfg.drift * std::pow(cfg.word_noise_growth, depth - 1);
    const double img_sigma =
        cfg.noise * cfg.drift * std::pow(cfg.image_noise_decay, depth - 1);
    word_proto[static_cast<std::size_t>(node)] =
        word_proto[static_cast<std::size_t>(p)] + noise_vec(cfg.word_dim, cfg.drift);
    img_proto[static_cast<std::size_t>(node)] =
        img_proto[static_cast<std::size_t>(p)] + noise_vec(cfg.image_dim, cfg.drift);

    LabelItem it;
    it.id = node;
    if (p != 0 && unif(rng) < cfg.suffix_prob)
      it.name = detail::random_syllables(rng, 2) + names[static_cast<std::size_t>(p)];
    else
      it.name = detail::random_syllables(rng, 3);
    names[static_cast<std::size_t>(node)] = it.name;
    it.word_vec = word_proto[static_cast<std::size_t>(node)] + noise_vec(cfg.word_dim, word_sigma);
    const int k = img_count(rng);
    for (int i = 0; i < k; ++i)
      it.image_vecs.push_back(img_proto[static_cast<std::size_t>(node)] +
                              noise_vec(cfg.image_dim, img_sigma));
    out.data.items.push_back(std::move(it));
  }
  std::sort(out.data.items.begin(), out.data.items.end(),
            [](const LabelItem& a, const LabelItem& b) { return a.id < b.id; });
  out.data.validate();
  return out;
}

inline std::vector<SynthTree> synth_corpus(const SynthConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<SynthTree> out;
  for (int i = 0; i < cfg.trees; ++i) out.push_back(synth_tree(cfg, rng));
  return out;
}

// ---- weight relevance ----------------------------------------------------

/// Per-block, per-layer relevance: mean absolute weight of the block's
/// slots in each layer, l2-normalized across layers. All-zero blocks
/// stay all-zero.
inline std::vector<std::vector<double>> layer_relevance(const Model& m) {
  std::vector<std::vector<double>> out;
  for (int b = 0; b < kNumBlocks; ++b) {
    const BlockDesc& desc = m.layout.blocks[static_cast<std::size_t>(b)];
    std::vector<double> v(m.weights.size(), 0.0);
    for (std::size_t l = 0; l < m.weights.size(); ++l)
      v[l] = m.weights[l].segment(desc.offset, desc.width).cwiseAbs().mean();
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0)
      for (double& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

inline std::string relevance_to_csv(const Model& m) {
  const auto rel = layer_relevance(m);
  std::string out = "block,layer,relevance\n";
  char buf[96];
  for (int b = 0; b < kNumBlocks; ++b)
    for (std::size_t l = 0; l < rel[static_cast<std::size_t>(b)].size(); ++l) {
      std::snprintf(buf, sizeof buf, "%s,%zu,%.17g\n", kBlockNames[b], l + 1,
                    rel[static_cast<std::size_t>(b)][l]);
      out += buf;
    }
  return out;
}

// ---- DOT export ----------------------------------------------------------

/// Graphviz text for a tree; when a reference tree is given, edges absent
/// from it are marked false and reference edges missing from `t` are
/// drawn dashed.
inline std::string export_dot(const Taxonomy& t, const std::vector<std::string>& names,
                              const Taxonomy* reference = nullptr) {
  auto label = [&](int n) -> std::string {
    if (n == 0) return "<root>";
    if (n <= static_cast<int>(names.size())) return names[static_cast<std::size_t>(n - 1)];
    return "n" + std::to_string(n);
  };
  std::string out = "digraph taxonomy {\n";
  for (int n = 0; n <= t.size(); ++n)
    out += "  n" + std::to_string(n) + " [label=\"" + label(n) + "\"];\n";
  for (int c = 1; c <= t.size(); ++c) {
    const int p = t.parent(c);
    out += "  n" + std::to_string(p) + " -> n" + std::to_string(c);
    if (reference && reference->parent(c) != p) out += " [color=red]";  // false edge
    out += ";\n";
  }
  if (reference) {
    for (int c = 1; c <= reference->size(); ++c) {
      const int p = reference->parent(c);
      if (t.parent(c) == p) continue;  // predicted correctly
      out += "  n" + std::to_string(p) + " -> n" + std::to_string(c) +
             " [style=dashed,color=green];\n";  // missed gold edge
    }
  }
  out += "}\n";
  return out;
}

}  // namespace taxo
