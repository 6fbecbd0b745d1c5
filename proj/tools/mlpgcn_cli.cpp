// mlpgcn command-line front end.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "mlpgcn/dataset.hpp"
#include "mlpgcn/error.hpp"
#include "mlpgcn/experiment.hpp"
#include "mlpgcn/graph.hpp"
#include "mlpgcn/stats.hpp"
#include "mlpgcn/trainer.hpp"

namespace fs = std::filesystem;
using namespace mlpgcn;

namespace {

constexpr double kGradCheckTolerance = 1e-5;

struct DataFlags {
  std::string dir;
  std::string features;
  std::string meta;
  std::string labels;

  void attach(CLI::App* app) {
    app->add_option("--data-dir", dir, "directory with features.csv, meta.csv, labels.csv");
    app->add_option("--features", features, "features CSV");
    app->add_option("--meta", meta, "metadata CSV");
    app->add_option("--labels", labels, "labels CSV");
  }

  DatasetPaths paths() const {
    DatasetPaths p;
    if (!dir.empty()) p = DatasetPaths::in_directory(dir);
    if (!features.empty()) p.features = features;
    if (!meta.empty()) p.meta = meta;
    if (!labels.empty()) p.labels = labels;
    if (p.features.empty() || p.meta.empty() || p.labels.empty()) {
      throw ConfigError("dataset not specified: use --data-dir or --features/--meta/--labels");
    }
    return p;
  }
};

SimilarityMetric parse_similarity(const std::string& name) {
  if (name == "pearson") return SimilarityMetric::Pearson;
  if (name == "cosine") return SimilarityMetric::Cosine;
  throw ConfigError(fmt::format("unknown similarity '{}' (pearson or cosine)", name));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
}

std::vector<double> parse_omega(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError(fmt::format("bad omega value '{}'", item));
    values.push_back(v);
  }
  return values;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 200;
  std::size_t d = 10;
  double strength = 1.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

int run_synth(const SynthArgs& a) {
  const SynthDataset s = synth_generate(a.n, a.d, a.seed, a.strength, a.noise);
  ensure_dir(a.out_dir);
  write_dataset(s.dataset, DatasetPaths::in_directory(a.out_dir));
  std::cout << fmt::format("wrote {} subjects, {} features to {}\n", a.n, a.d, a.out_dir);
  return 0;
}

// --- build-graph -----------------------------------------------------------

struct BuildGraphArgs {
  DataFlags data;
  std::string element;
  double beta = kDefaultBeta;
  std::string similarity = "pearson";
  std::string out;
  std::uint64_t seed = 0;
};

int run_build_graph(const BuildGraphArgs& a) {
  const Dataset ds = load_dataset(a.data.paths());
  const std::vector<AffinityGraph> graphs =
      build_graphs(ds, {a.element}, {{a.element, a.beta}}, parse_similarity(a.similarity), a.seed);
  const AffinityGraph& g = graphs.front();
  if (a.out.empty() || a.out == "-") {
    write_edge_list(std::cout, g.weights);
  } else {
    if (fs::path(a.out).has_parent_path()) ensure_dir(fs::path(a.out).parent_path());
    write_edge_list(fs::path(a.out), g.weights);
    std::cerr << fmt::format("{}: {} edges, density {:.4f}\n", a.element, g.edges.edge_count(),
                             g.edges.density());
  }
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  DataFlags data;
  std::vector<std::string> graphs;
  std::string omega = "trainable";
  std::string config;
  std::optional<std::uint64_t> seed;
  double val_fraction = 0.1;
  std::string similarity = "pearson";
  std::string out_dir = ".";
};

int run_train(const TrainArgs& a) {
  const Dataset ds = load_dataset(a.data.paths());
  TrainConfig cfg;
  if (!a.config.empty()) cfg = parse_train_config(read_text(a.config));
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();

  OmegaMode mode = OmegaMode::learned();
  if (a.omega != "trainable") mode = OmegaMode::fixed(parse_omega(a.omega));
  if (!mode.trainable && mode.fixed_values.size() != a.graphs.size()) {
    throw ConfigError(fmt::format("--omega has {} values for {} graphs", mode.fixed_values.size(),
                                  a.graphs.size()));
  }

  const std::vector<AffinityGraph> built =
      build_graphs(ds, a.graphs, {}, parse_similarity(a.similarity), cfg.seed);
  std::vector<SparseSymMatrix> ops;
  for (const auto& g : built) ops.push_back(g.normalized);

  const SplitPlan split = stratified_mc_split(ds.class_labels(), a.val_fraction, 0, cfg.seed);
  const Mask train_mask = Mask::from_indices(ds.size(), split.train);
  const Mask val_mask = Mask::from_indices(ds.size(), split.validation);
  const TrainingSet set{ds.features, ds.targets, train_mask, val_mask};
  const TrainResult result = train(set, ops, cfg, mode);

  ensure_dir(a.out_dir);
  save_checkpoint(fs::path(a.out_dir) / "checkpoint.txt", result.params, cfg.seed);
  write_history_csv(fs::path(a.out_dir) / "history.csv", result.history);
  {
    std::ofstream names(fs::path(a.out_dir) / "graphs.txt");
    for (const auto& g : a.graphs) names << g << '\n';
  }

  const ForwardCache eval = forward(ds.features, ops, result.params);
  const EpochRecord& best = result.history.epochs.at(result.history.best_epoch - 1);
  std::cout << fmt::format("best_epoch = {}\nval_loss = {:.6f}\nval_acc = {:.4f}\n",
                           result.history.best_epoch, best.val_loss,
                           accuracy(eval.probabilities, ds.targets, val_mask));
  std::cout << "omega =";
  for (double w : result.params.omega) std::cout << fmt::format(" {:.6f}", w);
  std::cout << '\n';
  return 0;
}

// --- cv --------------------------------------------------------------------

struct CvArgs {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  DataFlags data;
};

int run_cv(const CvArgs& a) {
  ExperimentPlan plan = load_experiment(a.config);
  if (a.seed) plan.seed = *a.seed;
  if (!a.data.dir.empty() || !a.data.features.empty()) plan.dataset = a.data.paths();
  if (!plan.dataset) throw ConfigError("no dataset: set \"dataset\" in the config or pass --data-dir");
  const Dataset ds = load_dataset(*plan.dataset);

  std::optional<fs::path> out;
  if (!a.out_dir.empty()) out = fs::path(a.out_dir);
  const CvReport report = run_experiment(ds, plan, out);
  if (!out) write_experiment_report(std::cout, plan, report);
  else {
    for (const auto& arm : report.arms) {
      std::cout << fmt::format("{}: acc {:.4f} ± {:.4f}\n", arm.name, arm.mean_accuracy,
                               arm.std_accuracy);
    }
  }
  return 0;
}

// --- gradcheck -------------------------------------------------------------

struct GradCheckArgs {
  std::uint64_t seed = 0;
  std::size_t seeds = 10;
  std::size_t n = 12;
  std::size_t d = 5;
  std::size_t hidden = 4;
  std::size_t classes = 2;
  std::size_t branches = 2;
  double lambda = 5e-4;
  double eps = 1e-3;
};

int run_gradcheck(const GradCheckArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::size_t k = 0; k < a.seeds; ++k) {
    const std::uint64_t s = a.seed + k;
    const GradCheckInstance inst =
        random_gradcheck_instance(a.n, a.d, a.hidden, a.classes, a.branches, s);
    const GradCheckReport r = grad_check(inst.features, inst.targets, inst.labeled, inst.graphs,
                                         inst.params, a.lambda, a.eps);
    std::cout << fmt::format("seed {}: max_rel_err {:.3e} (theta {:.3e}, omega {:.3e}, {} probes)\n",
                             s, r.max_relative_error, r.max_relative_error_theta,
                             r.max_relative_error_omega, r.probes);
    worst = std::max(worst, r.max_relative_error);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << fmt::format("max_rel_err = {:.3e}\nseconds = {:.3f}\n", worst, secs);
  if (!(worst < kGradCheckTolerance)) {
    std::cerr << fmt::format("E_GRADCHECK: max relative error {:.3e} >= {:.0e}\n", worst,
                             kGradCheckTolerance);
    return 10;
  }
  return 0;
}

// --- rank-report -----------------------------------------------------------

struct RankArgs {
  std::vector<std::string> files;
  std::string dir;
};

int run_rank_report(const RankArgs& a) {
  std::vector<fs::path> files(a.files.begin(), a.files.end());
  if (!a.dir.empty()) {
    if (!fs::is_directory(a.dir)) throw IoError(fmt::format("'{}' is not a directory", a.dir));
    std::vector<fs::path> found;
    for (const auto& e : fs::recursive_directory_iterator(a.dir)) {
      const std::string name = e.path().filename().string();
      if (e.is_regular_file() && name.starts_with("history") && e.path().extension() == ".csv") {
        found.push_back(e.path());
      }
    }
    std::sort(found.begin(), found.end());
    files.insert(files.end(), found.begin(), found.end());
  }
  if (files.empty()) throw DataError("rank-report: no history files given");
  write_rank_report(std::cout, rank_report(files));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-layer population graph GCN with learned graph ranking"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a planted-structure dataset");
  c_synth->add_option("--n", synth.n, "subjects (even, >= 20)");
  c_synth->add_option("--d", synth.d, "feature dimension");
  c_synth->add_option("--strength", synth.strength, "class mean separation");
  c_synth->add_option("--noise", synth.noise, "feature noise scale");
  c_synth->add_option("--seed", synth.seed);
  c_synth->add_option("--out-dir", synth.out_dir);

  BuildGraphArgs bg;
  auto* c_bg = app.add_subcommand("build-graph", "affinity graph for one metadata element");
  bg.data.attach(c_bg);
  c_bg->add_option("--element", bg.element, "metadata column name, or 'random'")->required();
  c_bg->add_option("--beta", bg.beta, "threshold for continuous elements");
  c_bg->add_option("--similarity", bg.similarity, "pearson or cosine");
  c_bg->add_option("--seed", bg.seed, "seed for random graphs");
  c_bg->add_option("--out", bg.out, "edge-list output (default stdout)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "single training run on a stratified split");
  tr.data.attach(c_train);
  c_train->add_option("--graphs", tr.graphs, "graph sources: element, random, file:<path>")
      ->required()
      ->delimiter(',');
  c_train->add_option("--omega", tr.omega, "'trainable' or comma-separated fixed weights");
  c_train->add_option("--config", tr.config, "JSON file with training settings");
  c_train->add_option("--seed", tr.seed);
  c_train->add_option("--val-fraction", tr.val_fraction);
  c_train->add_option("--similarity", tr.similarity, "pearson or cosine");
  c_train->add_option("--out-dir", tr.out_dir);

  CvArgs cv;
  auto* c_cv = app.add_subcommand("cv", "cross-validate the arms of an experiment config");
  c_cv->add_option("--config", cv.config, "experiment JSON")->required();
  c_cv->add_option("--out-dir", cv.out_dir, "write report.txt and histories here");
  c_cv->add_option("--seed", cv.seed, "override the config seed");
  cv.data.attach(c_cv);

  GradCheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "compare backprop against finite differences");
  c_gc->add_option("--seed", gc.seed, "first seed");
  c_gc->add_option("--seeds", gc.seeds, "number of random instances");
  c_gc->add_option("--n", gc.n);
  c_gc->add_option("--d", gc.d);
  c_gc->add_option("--hidden", gc.hidden);
  c_gc->add_option("--classes", gc.classes);
  c_gc->add_option("--branches", gc.branches);
  c_gc->add_option("--lambda", gc.lambda, "L2 weight");
  c_gc->add_option("--eps", gc.eps, "finite-difference step");

  RankArgs rk;
  auto* c_rank = app.add_subcommand("rank-report", "summarize learned graph weights");
  c_rank->add_option("files", rk.files, "history CSV files");
  c_rank->add_option("--dir", rk.dir, "scan a cv output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "E_USAGE: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_bg) return run_build_graph(bg);
    if (*c_train) return run_train(tr);
    if (*c_cv) return run_cv(cv);
    if (*c_gc) return run_gradcheck(gc);
    if (*c_rank) return run_rank_report(rk);
  } catch (const Error& e) {
    std::cerr << error_code_name(e.code()) << ": " << e.what() << '\n';
    return error_exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "E_INTERNAL: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
