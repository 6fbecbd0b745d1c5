#include "mlpgcn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "mlpgcn/error.hpp"
#include "mlpgcn/random.hpp"

namespace mlpgcn {

using nlohmann::json;

namespace {

constexpr std::string_view kRandomSource = "random";
constexpr std::string_view kFilePrefix = "file:";

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
    }
  }
}

template <typename T>
T get_as(const json& obj, const char* key, std::string_view where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: key '{}': {}", where, key, e.what()));
  }
}

std::size_t get_count(const json& obj, const char* key, std::string_view where) {
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(fmt::format("{}: '{}' must be a nonnegative integer", where, key));
  }
  return v.get<std::size_t>();
}

TrainConfig train_config_from(const json& obj, TrainConfig cfg, std::string_view where) {
  if (!obj.is_object()) throw ConfigError(fmt::format("{}: expected an object", where));
  reject_unknown_keys(obj,
                      {"learning_rate", "max_epochs", "dropout_rate", "l2_lambda",
                       "omega_warmup_epochs", "early_stop_patience", "seed", "hidden_width",
                       "adam_beta1", "adam_beta2", "adam_epsilon"},
                      where);
  if (obj.contains("learning_rate")) cfg.learning_rate = get_as<double>(obj, "learning_rate", where);
  if (obj.contains("max_epochs")) cfg.max_epochs = get_count(obj, "max_epochs", where);
  if (obj.contains("dropout_rate")) cfg.dropout_rate = get_as<double>(obj, "dropout_rate", where);
  if (obj.contains("l2_lambda")) cfg.l2_lambda = get_as<double>(obj, "l2_lambda", where);
  if (obj.contains("omega_warmup_epochs")) cfg.omega_warmup_epochs = get_count(obj, "omega_warmup_epochs", where);
  if (obj.contains("early_stop_patience")) cfg.early_stop_patience = get_count(obj, "early_stop_patience", where);
  if (obj.contains("seed")) cfg.seed = get_count(obj, "seed", where);
  if (obj.contains("hidden_width")) cfg.hidden_width = get_count(obj, "hidden_width", where);
  if (obj.contains("adam_beta1")) cfg.adam_beta1 = get_as<double>(obj, "adam_beta1", where);
  if (obj.contains("adam_beta2")) cfg.adam_beta2 = get_as<double>(obj, "adam_beta2", where);
  if (obj.contains("adam_epsilon")) cfg.adam_epsilon = get_as<double>(obj, "adam_epsilon", where);
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(fmt::format("{}: {}", where, e.what()));
  }
  return cfg;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"max_epochs", c.max_epochs},
              {"dropout_rate", c.dropout_rate},
              {"l2_lambda", c.l2_lambda},
              {"omega_warmup_epochs", c.omega_warmup_epochs},
              {"early_stop_patience", c.early_stop_patience},
              {"seed", c.seed},
              {"hidden_width", c.hidden_width},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_epsilon", c.adam_epsilon}};
}

bool valid_arm_name(const std::string& name) {
  return !name.empty() && name != "." && name != ".." &&
         std::all_of(name.begin(), name.end(), [](char ch) {
           return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
         });
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

void ExperimentPlan::validate() const {
  if (arms.empty()) throw ConfigError("experiment: no arms");
  if (repeats < 2) throw ConfigError("experiment: repeats must be >= 2");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("experiment: val_fraction must lie in (0, 1)");
  std::set<std::string> names;
  for (const auto& arm : arms) {
    if (!valid_arm_name(arm.name)) {
      throw ConfigError(fmt::format("experiment: arm name '{}' must use letters, digits, '_', '-' or '.'", arm.name));
    }
    if (!names.insert(arm.name).second) throw ConfigError(fmt::format("experiment: duplicate arm '{}'", arm.name));
    if (arm.graph_sources.empty()) throw ConfigError(fmt::format("arm '{}': no graph sources", arm.name));
    if (!arm.omega.trainable && arm.omega.fixed_values.size() != arm.graph_sources.size()) {
      throw ConfigError(fmt::format("arm '{}': fixed omega has {} values for {} graphs", arm.name,
                                    arm.omega.fixed_values.size(), arm.graph_sources.size()));
    }
  }
  for (const auto& [a, b] : comparisons) {
    if (!names.count(a) || !names.count(b)) {
      throw ConfigError(fmt::format("experiment: comparison {} vs {} names an unknown arm", a, b));
    }
  }
  for (const auto& [name, b] : beta) {
    if (!(b > 0.0) || !std::isfinite(b)) throw ConfigError(fmt::format("experiment: beta for '{}' must be > 0", name));
  }
}

TrainConfig parse_train_config(const std::string& json_text, const TrainConfig& base) {
  json obj;
  try {
    obj = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("train config: {}", e.what()));
  }
  return train_config_from(obj, base, "train config");
}

ExperimentPlan parse_experiment(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown_keys(root, {"dataset", "seed", "repeats", "val_fraction", "similarity", "beta", "train", "arms", "compare"},
                      "config");

  ExperimentPlan plan;
  if (root.contains("dataset")) {
    const json& ds = root["dataset"];
    if (!ds.is_object()) throw ConfigError("config.dataset: expected an object");
    reject_unknown_keys(ds, {"features", "meta", "labels"}, "config.dataset");
    plan.dataset = DatasetPaths{resolve(base_dir, get_as<std::string>(ds, "features", "config.dataset")),
                                resolve(base_dir, get_as<std::string>(ds, "meta", "config.dataset")),
                                resolve(base_dir, get_as<std::string>(ds, "labels", "config.dataset"))};
  }
  if (root.contains("seed")) plan.seed = get_count(root, "seed", "config");
  if (root.contains("repeats")) plan.repeats = get_count(root, "repeats", "config");
  if (root.contains("val_fraction")) plan.val_fraction = get_as<double>(root, "val_fraction", "config");
  if (root.contains("similarity")) {
    const auto s = get_as<std::string>(root, "similarity", "config");
    if (s == "pearson") {
      plan.similarity = SimilarityMetric::Pearson;
    } else if (s == "cosine") {
      plan.similarity = SimilarityMetric::Cosine;
    } else {
      throw ConfigError(fmt::format("config: unknown similarity '{}'", s));
    }
  }
  if (root.contains("beta")) {
    const json& b = root["beta"];
    if (!b.is_object()) throw ConfigError("config.beta: expected an object of element -> threshold");
    for (const auto& [name, value] : b.items()) {
      if (!value.is_number()) throw ConfigError(fmt::format("config.beta.{}: expected a number", name));
      plan.beta[name] = value.get<double>();
    }
  }
  plan.train.seed = plan.seed;
  if (root.contains("train")) plan.train = train_config_from(root["train"], plan.train, "config.train");

  if (!root.contains("arms") || !root["arms"].is_array()) throw ConfigError("config: 'arms' must be an array");
  for (std::size_t a = 0; a < root["arms"].size(); ++a) {
    const json& arm = root["arms"][a];
    const std::string where = fmt::format("config.arms[{}]", a);
    if (!arm.is_object()) throw ConfigError(fmt::format("{}: expected an object", where));
    reject_unknown_keys(arm, {"name", "graphs", "omega", "train"}, where);
    ExperimentSpec spec;
    spec.name = get_as<std::string>(arm, "name", where);
    spec.graph_sources = get_as<std::vector<std::string>>(arm, "graphs", where);
    for (auto& src : spec.graph_sources) {
      if (src.rfind(kFilePrefix, 0) == 0) {
        src = std::string(kFilePrefix) + resolve(base_dir, src.substr(kFilePrefix.size())).string();
      }
    }
    if (!arm.contains("omega") || (arm["omega"].is_string() && arm["omega"] == "trainable")) {
      spec.omega = OmegaMode::learned();
    } else if (arm["omega"].is_array()) {
      spec.omega = OmegaMode::fixed(get_as<std::vector<double>>(arm, "omega", where));
    } else {
      throw ConfigError(fmt::format("{}: omega must be \"trainable\" or an array of weights", where));
    }
    spec.train = arm.contains("train") ? train_config_from(arm["train"], plan.train, where + ".train") : plan.train;
    plan.arms.push_back(std::move(spec));
  }
  if (root.contains("compare")) {
    const json& c = root["compare"];
    if (!c.is_array()) throw ConfigError("config.compare: expected an array of [arm, arm] pairs");
    for (const auto& pair : c) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string()) {
        throw ConfigError("config.compare: expected an array of [arm, arm] pairs");
      }
      plan.comparisons.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
    }
  }
  plan.validate();
  return plan;
}

ExperimentPlan load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str(), path.parent_path());
}

std::string experiment_to_json(const ExperimentPlan& plan) {
  json root;
  if (plan.dataset) {
    root["dataset"] = {{"features", plan.dataset->features.string()},
                       {"meta", plan.dataset->meta.string()},
                       {"labels", plan.dataset->labels.string()}};
  }
  root["seed"] = plan.seed;
  root["repeats"] = plan.repeats;
  root["val_fraction"] = plan.val_fraction;
  root["similarity"] = plan.similarity == SimilarityMetric::Pearson ? "pearson" : "cosine";
  root["beta"] = json::object();
  for (const auto& [name, b] : plan.beta) root["beta"][name] = b;
  root["train"] = train_config_to_json(plan.train);
  root["arms"] = json::array();
  for (const auto& arm : plan.arms) {
    json a{{"name", arm.name}, {"graphs", arm.graph_sources}, {"train", train_config_to_json(arm.train)}};
    if (arm.omega.trainable) {
      a["omega"] = "trainable";
    } else {
      a["omega"] = arm.omega.fixed_values;
    }
    root["arms"].push_back(std::move(a));
  }
  root["compare"] = json::array();
  for (const auto& [x, y] : plan.comparisons) root["compare"].push_back({x, y});
  return root.dump();
}

// ---------------------------------------------------------------------------

std::vector<AffinityGraph> build_graphs(const Dataset& dataset, const std::vector<std::string>& sources,
                                        const std::map<std::string, double>& beta,
                                        SimilarityMetric similarity, std::uint64_t seed) {
  if (sources.empty()) throw ConfigError("build_graphs: no graph sources");
  const std::size_t n = dataset.size();
  std::vector<std::optional<AffinityGraph>> built(sources.size());
  std::optional<DenseMatrix> sim;
  std::optional<double> reference_density;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const std::string& src = sources[s];
    if (src == kRandomSource) continue;
    if (src.rfind(kFilePrefix, 0) == 0) {
      const SparseSymMatrix w = read_edge_list(std::filesystem::path(src.substr(kFilePrefix.size())));
      if (w.dim() != n) {
        throw ConfigError(fmt::format("graph file '{}' has {} nodes, dataset has {}", src, w.dim(), n));
      }
      built[s] = graph_from_weights(src, w);
    } else {
      const MetaColumn& col = dataset.column(src);
      if (!sim) sim = similarity_matrix(dataset.features, similarity);
      const auto b = beta.find(src);
      built[s] = build_graph(col, *sim, b == beta.end() ? kDefaultBeta : b->second);
    }
    if (!reference_density) reference_density = built[s]->edges.density();
  }
  // A reference graph with no edges would ask for density 0; fall back to the default.
  const double density = reference_density && *reference_density > 0.0 ? *reference_density : 0.1;
  std::vector<AffinityGraph> graphs;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (!built[s]) built[s] = random_graph(n, density, derive_seed(seed, 0x52414e44ULL + s));
    graphs.push_back(std::move(*built[s]));
  }
  return graphs;
}

CvReport run_experiment(const Dataset& dataset, const ExperimentPlan& plan,
                        const std::optional<std::filesystem::path>& out_dir) {
  plan.validate();
  dataset.validate();
  std::vector<CvArm> arms;
  for (const auto& spec : plan.arms) {
    CvArm arm;
    arm.name = spec.name;
    arm.graph_names = spec.graph_sources;
    for (auto& g : build_graphs(dataset, spec.graph_sources, plan.beta, plan.similarity, plan.seed)) {
      arm.graphs.push_back(std::move(g.normalized));
    }
    arm.omega = spec.omega;
    arm.config = spec.train;
    arms.push_back(std::move(arm));
  }
  CvOptions options;
  options.repeats = plan.repeats;
  options.val_fraction = plan.val_fraction;
  options.seed = plan.seed;
  options.comparisons = plan.comparisons;
  const auto labels = dataset.class_labels();
  CvReport report = cross_validate(dataset.features, labels, dataset.class_count(), arms, options);

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    {
      std::ofstream out(*out_dir / "report.txt");
      if (!out) throw IoError(fmt::format("cannot write report in '{}'", out_dir->string()));
      write_experiment_report(out, plan, report);
    }
    for (const auto& arm : report.arms) {
      const auto dir = *out_dir / arm.name;
      std::filesystem::create_directories(dir);
      std::ofstream names(dir / "graphs.txt");
      for (const auto& g : arm.graph_names) names << g << '\n';
      for (std::size_t r = 0; r < arm.histories.size(); ++r) {
        write_history_csv(dir / fmt::format("history_rep{}.csv", r), arm.histories[r]);
      }
    }
  }
  return report;
}

void write_experiment_report(std::ostream& out, const ExperimentPlan& plan, const CvReport& report) {
  out << "config = " << experiment_to_json(plan) << "\n\n";
  write_cv_report(out, report);
}

// ---------------------------------------------------------------------------

std::vector<RankSummary> rank_report(const std::vector<std::filesystem::path>& history_files) {
  if (history_files.empty()) throw ParameterError("rank_report: no history files");
  std::map<std::string, std::vector<std::filesystem::path>> by_arm;
  for (const auto& f : history_files) {
    const auto parent = f.parent_path();
    const std::string arm = parent.filename().empty() ? "default" : parent.filename().string();
    by_arm[arm].push_back(f);
  }

  std::vector<RankSummary> out;
  for (auto& [arm, files] : by_arm) {
    std::sort(files.begin(), files.end());
    RankSummary s;
    s.arm = arm;
    std::size_t m = 0;
    for (const auto& f : files) {
      TrainHistory h;
      try {
        h = read_history_csv(f);
      } catch (const DataError& e) {
        throw DataError(fmt::format("{}: {}", f.string(), e.what()));
      }
      const std::size_t width = h.epochs.front().omega.size();
      if (m == 0) {
        m = width;
        s.mean_final_omega.assign(m, 0.0);
        s.min_omega.assign(m, std::numeric_limits<double>::infinity());
        s.max_omega.assign(m, -std::numeric_limits<double>::infinity());
        s.first_place.assign(m, 0);
        s.fixed = true;
      } else if (width != m) {
        throw DataError(fmt::format("{}: {} ranking weights, other runs of arm '{}' have {}", f.string(), width, arm, m));
      }
      const auto& start = h.epochs.front().omega;
      for (const auto& rec : h.epochs) {
        for (std::size_t g = 0; g < m; ++g) {
          s.min_omega[g] = std::min(s.min_omega[g], rec.omega[g]);
          s.max_omega[g] = std::max(s.max_omega[g], rec.omega[g]);
          if (rec.omega[g] != start[g]) s.fixed = false;
        }
      }
      const auto& last = h.epochs.back().omega;
      for (std::size_t g = 0; g < m; ++g) s.mean_final_omega[g] += last[g];
      std::size_t top = 0;
      for (std::size_t g = 1; g < m; ++g) {
        if (std::abs(last[g]) > std::abs(last[top])) top = g;
      }
      ++s.first_place[top];
      ++s.runs;
    }
    for (double& w : s.mean_final_omega) w /= static_cast<double>(s.runs);

    const auto names_file = files.front().parent_path() / "graphs.txt";
    std::ifstream names(names_file);
    std::string line;
    while (names && std::getline(names, line)) {
      if (!line.empty()) s.graph_names.push_back(line);
    }
    if (s.graph_names.size() != m) {
      s.graph_names.clear();
      for (std::size_t g = 0; g < m; ++g) s.graph_names.push_back(fmt::format("graph_{}", g + 1));
    }
    s.order.resize(m);
    std::iota(s.order.begin(), s.order.end(), 0);
    std::stable_sort(s.order.begin(), s.order.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(s.mean_final_omega[a]) > std::abs(s.mean_final_omega[b]);
    });
    out.push_back(std::move(s));
  }
  return out;
}

void write_rank_report(std::ostream& out, const std::vector<RankSummary>& summaries) {
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const auto& s = summaries[i];
    if (i) out << '\n';
    out << fmt::format("[arm {}]\n", s.arm);
    out << fmt::format("runs = {}\n", s.runs);
    out << "omega_mode = " << (s.fixed ? "fixed" : "trainable") << '\n';
    for (std::size_t g = 0; g < s.graph_names.size(); ++g) {
      out << fmt::format("graph {} = final {:.6f}, min {:.6f}, max {:.6f}, ranked first in {}/{} runs\n",
                         s.graph_names[g], s.mean_final_omega[g], s.min_omega[g], s.max_omega[g],
                         s.first_place[g], s.runs);
    }
    std::string order;
    for (std::size_t k = 0; k < s.order.size(); ++k) order += (k ? " > " : "") + s.graph_names[s.order[k]];
    out << "ranking = " << order << '\n';
  }
}

}  // namespace mlpgcn
