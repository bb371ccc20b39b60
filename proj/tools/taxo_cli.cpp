// Command-line front end: train / construct / eval / complete / synth /
// inspect-weights / sweep-k / dot.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include "taxo/taxo.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace taxo;

std::size_t parse_k(const std::string& s) {
  if (s == "all" || s == "inf") return 0;
  const long v = std::stol(s);
  if (v < 0) throw DataError("--k must be a non-negative integer or 'all'");
  return static_cast<std::size_t>(v);
}

struct LoadedCorpus {
  std::vector<Dataset> datasets;
  std::vector<Taxonomy> trees;
  std::vector<TrainInstance> instances() const {
    std::vector<TrainInstance> out;
    for (std::size_t i = 0; i < datasets.size(); ++i)
      out.push_back({&datasets[i], &trees[i]});
    return out;
  }
};

LoadedCorpus load_corpus(const std::vector<std::string>& data_paths,
                         const std::vector<std::string>& tree_paths) {
  if (tree_paths.empty()) throw DataError("at least one --tree is required");
  if (data_paths.size() != tree_paths.size() && data_paths.size() != 1)
    throw DataError("--data must be given once or once per --tree");
  LoadedCorpus corpus;
  for (std::size_t i = 0; i < tree_paths.size(); ++i) {
    const std::string& dp = data_paths.size() == 1 ? data_paths[0] : data_paths[i];
    corpus.datasets.push_back(load_dataset(dp));
    corpus.trees.push_back(
        load_tree(tree_paths[i], static_cast<int>(corpus.datasets.back().size())));
  }
  return corpus;
}

struct FitArgs {
  int layers = 6;
  int em_iters = 200;
  std::uint64_t seed = 0;
  double lambda = 1e-3;
  std::string k = "all";
  std::size_t em_burn = 30, em_samples = 50;
  bool no_visual = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--layers", layers, "number of depth layers L");
    cmd->add_option("--em-iters", em_iters, "EM iterations");
    cmd->add_option("--seed", seed, "training seed");
    cmd->add_option("--lambda", lambda, "L1 weight for projection learning");
    cmd->add_option("--k", k, "top-K parent images for PC-V1 ('all' = every image)");
    cmd->add_option("--em-burn", em_burn, "E-step burn-in sweeps");
    cmd->add_option("--em-samples", em_samples, "E-step sample sweeps");
    cmd->add_flag("--no-visual", no_visual, "disable the visual feature blocks");
  }

  FitOptions options() const {
    FitOptions opts;
    opts.layers = layers;
    opts.lambda = lambda;
    opts.pc_v1_top_k = parse_k(k);
    opts.train.em_iterations = em_iters;
    opts.train.seed = seed;
    opts.train.sampler.burn_in = em_burn;
    opts.train.sampler.samples = em_samples;
    if (no_visual) opts.enabled_blocks[kSV1] = opts.enabled_blocks[kPCV1] =
                       opts.enabled_blocks[kPCV2] = false;
    return opts;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Multimodal taxonomy induction over embedding-labelled categories"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "fit bins, projections, prior and weights");
  std::vector<std::string> train_data, train_trees;
  std::string train_out, train_log_path;
  FitArgs train_fit;
  train->add_option("--data", train_data, "dataset file (repeatable)")->required();
  train->add_option("--tree", train_trees, "gold tree file (repeatable)")->required();
  train->add_option("--out", train_out, "output model file")->required();
  train->add_option("--log", train_log_path, "training log CSV");
  train_fit.attach(train);

  // construct
  auto* construct = app.add_subcommand("construct", "build a taxonomy from scratch");
  std::string con_model, con_data, con_out, con_marg;
  std::size_t con_burn = 1000, con_samples = 5000;
  std::uint64_t con_seed = 0;
  construct->add_option("--model", con_model)->required();
  construct->add_option("--data", con_data)->required();
  construct->add_option("--burn", con_burn, "burn-in sweeps");
  construct->add_option("--samples", con_samples, "sample sweeps");
  construct->add_option("--seed", con_seed);
  construct->add_option("--out-tree", con_out)->required();
  construct->add_option("--out-marginals", con_marg);

  // eval
  auto* evalc = app.add_subcommand("eval", "ancestor-F1 of a prediction against gold");
  std::string ev_pred, ev_gold, ev_csv;
  evalc->add_option("--pred", ev_pred)->required();
  evalc->add_option("--gold", ev_gold)->required();
  evalc->add_option("--out-csv", ev_csv);

  // complete
  auto* complete = app.add_subcommand("complete", "hierarchy completion protocol");
  std::string cp_data, cp_tree, cp_csv;
  std::uint64_t cp_split_seed = 0;
  double cp_fraction = 0.3;
  std::size_t cp_burn = 500, cp_samples = 2000;
  FitArgs cp_fit;
  complete->add_option("--data", cp_data)->required();
  complete->add_option("--tree", cp_tree)->required();
  complete->add_option("--split-seed", cp_split_seed);
  complete->add_option("--test-fraction", cp_fraction);
  complete->add_option("--burn", cp_burn, "test-phase burn-in sweeps");
  complete->add_option("--samples", cp_samples, "test-phase sample sweeps");
  complete->add_option("--out-csv", cp_csv);
  cp_fit.attach(complete);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  SynthConfig sc;
  std::string synth_dir;
  synth->add_option("--trees", sc.trees);
  synth->add_option("--nodes", sc.nodes);
  synth->add_option("--height", sc.height);
  synth->add_option("--img-dim", sc.image_dim);
  synth->add_option("--word-dim", sc.word_dim);
  synth->add_option("--noise", sc.noise);
  synth->add_option("--drift", sc.drift);
  synth->add_option("--suffix-prob", sc.suffix_prob);
  synth->add_option("--word-noise-growth", sc.word_noise_growth);
  synth->add_option("--image-noise-decay", sc.image_noise_decay);
  synth->add_option("--images-min", sc.images_min);
  synth->add_option("--images-max", sc.images_max);
  synth->add_option("--seed", sc.seed);
  synth->add_option("--out-dir", synth_dir)->required();

  // inspect-weights
  auto* inspect = app.add_subcommand("inspect-weights", "per-layer feature relevance CSV");
  std::string iw_model, iw_out;
  inspect->add_option("--model", iw_model)->required();
  inspect->add_option("--out", iw_out, "CSV path (default stdout)");

  // sweep-k
  auto* sweep = app.add_subcommand("sweep-k", "leave-one-out construction F1 per K");
  std::vector<std::string> sw_data, sw_trees, sw_klist;
  std::string sw_out;
  std::size_t sw_burn = 300, sw_samples = 600;
  FitArgs sw_fit;
  sweep->add_option("--data", sw_data)->required();
  sweep->add_option("--tree", sw_trees)->required();
  sweep->add_option("--k-list", sw_klist, "K values ('all' or integers)")->required();
  sweep->add_option("--burn", sw_burn);
  sweep->add_option("--samples", sw_samples);
  sweep->add_option("--out", sw_out, "CSV path (default stdout)");
  sw_fit.attach(sweep);

  // dot
  auto* dot = app.add_subcommand("dot", "Graphviz export of a tree");
  std::string dot_tree, dot_data, dot_ref, dot_out;
  dot->add_option("--tree", dot_tree)->required();
  dot->add_option("--data", dot_data, "dataset for node names");
  dot->add_option("--ref", dot_ref, "reference tree; differing edges get marked");
  dot->add_option("--out", dot_out, "output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  if (*train) {
    const LoadedCorpus corpus = load_corpus(train_data, train_trees);
    std::vector<TrainLogRow> log;
    const Model model = fit_model(corpus.instances(), train_fit.options(), &log);
    save_model(train_out, model);
    if (!train_log_path.empty()) write_file_atomic(train_log_path, train_log_csv(log));
    std::cout << "wrote " << train_out << "\n";
  } else if (*construct) {
    Model model = load_model(con_model);
    const Dataset data = load_dataset(con_data);
    model.bind_alpha(data.size());
    const FeatureContext ctx = build_feature_context(model, data);
    SamplerConfig cfg;
    cfg.burn_in = con_burn;
    cfg.samples = con_samples;
    cfg.seed = con_seed;
    const MarginalTable marg = run_chain(model, ctx, cfg);
    const Taxonomy pred = mst_decode(marg);
    save_tree(con_out, pred);
    if (!con_marg.empty()) write_file_atomic(con_marg, marginals_to_csv(marg));
    std::cout << "wrote " << con_out << "\n";
  } else if (*evalc) {
    const Taxonomy pred = load_tree(ev_pred);
    const Taxonomy gold = load_tree(ev_gold, pred.size());
    const EvalReport r = ancestor_f1(pred, gold);
    std::printf("P=%.4f R=%.4f F1=%.4f (pred=%zu gold=%zu common=%zu)\n", r.precision,
                r.recall, r.f1, r.predicted_pairs, r.gold_pairs, r.intersection);
    if (!ev_csv.empty()) write_file_atomic(ev_csv, report_to_csv({r}));
  } else if (*complete) {
    const Dataset data = load_dataset(cp_data);
    const Taxonomy gold = load_tree(cp_tree, static_cast<int>(data.size()));
    SamplerConfig scfg;
    scfg.burn_in = cp_burn;
    scfg.samples = cp_samples;
    scfg.seed = cp_fit.seed;
    const EvalReport r =
        run_completion(data, gold, cp_fit.options(), cp_split_seed, cp_fraction, scfg);
    std::printf("P=%.4f R=%.4f F1=%.4f (pred=%zu gold=%zu common=%zu)\n", r.precision,
                r.recall, r.f1, r.predicted_pairs, r.gold_pairs, r.intersection);
    if (!cp_csv.empty()) write_file_atomic(cp_csv, report_to_csv({r}));
  } else if (*synth) {
    std::filesystem::create_directories(synth_dir);
    const std::vector<SynthTree> corpus = synth_corpus(sc);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const std::string stem = synth_dir + "/tree_" + std::to_string(i);
      save_dataset(stem + ".data.jsonl", corpus[i].data, "synthetic");
      save_tree(stem + ".tree.tsv", corpus[i].gold);
      std::cout << "wrote " << stem << ".{data.jsonl,tree.tsv}\n";
    }
  } else if (*inspect) {
    const Model model = load_model(iw_model);
    const std::string csv = relevance_to_csv(model);
    if (iw_out.empty())
      std::cout << csv;
    else
      write_file_atomic(iw_out, csv);
  } else if (*sweep) {
    const LoadedCorpus corpus = load_corpus(sw_data, sw_trees);
    if (corpus.trees.size() < 2) throw DataError("sweep-k needs at least two trees");
    std::string csv = "k,f1\n";
    for (const std::string& ks : sw_klist) {
      FitArgs fit = sw_fit;
      fit.k = ks;
      double total = 0;
      const auto instances = corpus.instances();
      for (std::size_t held = 0; held < instances.size(); ++held) {
        std::vector<TrainInstance> train_set;
        for (std::size_t i = 0; i < instances.size(); ++i)
          if (i != held) train_set.push_back(instances[i]);
        SamplerConfig scfg;
        scfg.burn_in = sw_burn;
        scfg.samples = sw_samples;
        scfg.seed = fit.seed;
        total += run_construction(train_set, corpus.datasets[held], corpus.trees[held],
                                  fit.options(), scfg)
                     .f1;
      }
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s,%.6f\n", ks.c_str(),
                    total / static_cast<double>(corpus.trees.size()));
      csv += buf;
    }
    if (sw_out.empty())
      std::cout << csv;
    else
      write_file_atomic(sw_out, csv);
  } else if (*dot) {
    const Taxonomy tree = load_tree(dot_tree);
    std::vector<std::string> names;
    if (!dot_data.empty())
      for (const LabelItem& it : load_dataset(dot_data).items) names.push_back(it.name);
    std::optional<Taxonomy> ref;
    if (!dot_ref.empty()) ref = load_tree(dot_ref, tree.size());
    const std::string text = export_dot(tree, names, ref ? &*ref : nullptr);
    if (dot_out.empty())
      std::cout << text;
    else
      write_file_atomic(dot_out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const taxo::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
